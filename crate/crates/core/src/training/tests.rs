use super::*;
use crate::attention::UpdateOverride;
use crate::autodiff::Graph;
use crate::data::vocab::EOS;
use crate::data::{gen_copy_task, EncodedPair, Vocabulary};
use crate::model::{ModelConfig, Variant};
use crate::params::Gradients;
use crate::tensor::Tensor;
use crate::Error;
use alloc::vec;
use alloc::vec::Vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dist(g: &mut Graph<'_, f64>, p: Vec<f64>) -> crate::autodiff::Var {
    g.constant(Tensor::vector(p))
}

#[test]
fn nll_examples() {
    let mut g = Graph::inference();
    let p = vec![dist(&mut g, vec![0.0, 1.0, 0.0]), dist(&mut g, vec![0.0, 0.0, 1.0])];
    let (l, c) = nll_loss(&mut g, &p, &[1, 2]).unwrap();
    assert_eq!(g.scalar(l), 0.0);
    assert_eq!(c, 0);

    let u = vec![dist(&mut g, vec![0.25; 4]); 3];
    let (l, _) = nll_loss(&mut g, &u, &[0, 3, 2]).unwrap();
    assert!((g.scalar(l) - 3.0 * 4f64.ln()).abs() < 1e-12);

    let p = vec![dist(&mut g, vec![0.5, 0.3, 0.2]), dist(&mut g, vec![0.1, 0.1, 0.8])];
    let (l, _) = nll_loss(&mut g, &p, &[1, 2]).unwrap();
    assert!((g.scalar(l) - (-(0.3f64.ln()) - 0.8f64.ln())).abs() < 1e-12);

    let z = vec![dist(&mut g, vec![1.0, 0.0])];
    let (l, c) = nll_loss(&mut g, &z, &[1]).unwrap();
    assert_eq!(c, 1);
    assert!((g.scalar(l) - (-(1e-12f64).ln())).abs() < 1e-9);

    assert!(matches!(nll_loss(&mut g, &z, &[1, 2]), Err(Error::Contract(_))));
}

fn rows(g: &mut Graph<'_, f64>, eos_mass: &[f64]) -> Vec<crate::autodiff::Var> {
    eos_mass
        .iter()
        .map(|&m| dist(g, vec![(1.0 - m) / 2.0, (1.0 - m) / 2.0, m]))
        .collect()
}

#[test]
fn atteos_examples() {
    let mut g = Graph::inference();
    let r = rows(&mut g, &[0.0, 0.0, 1.0]);
    assert_eq!({ let v = atteos_penalty(&mut g, &r, 2).unwrap(); g.scalar(v) }, 0.0);
    let r = rows(&mut g, &[1.0, 1.0, 0.0]);
    assert_eq!({ let v = atteos_penalty(&mut g, &r, 2).unwrap(); g.scalar(v) }, 3.0);
    let r = rows(&mut g, &[0.1, 0.2, 0.6]);
    assert!(({ let v = atteos_penalty(&mut g, &r, 2).unwrap(); g.scalar(v) } - 0.7).abs() < 1e-15);
    assert!(atteos_penalty(&mut g, &[], 2).is_err());
}

#[test]
fn combined_examples() {
    let mut g = Graph::<f64>::inference();
    let nll = g.constant(Tensor::scalar(2.5));
    let pen = g.constant(Tensor::scalar(0.7));
    assert_eq!({ let v = combined_objective(&mut g, nll, pen, 0.0).unwrap(); g.scalar(v) }, 2.5);
    assert!(({ let v = combined_objective(&mut g, nll, pen, 1.0).unwrap(); g.scalar(v) } - 3.2).abs() < 1e-15);
    assert!(combined_objective(&mut g, nll, pen, -1.0).is_err());
}

proptest! {
    #[test]
    fn atteos_is_bounded(masses in proptest::collection::vec(0.0f64..=1.0, 1..10)) {
        let mut g = Graph::inference();
        let r = rows(&mut g, &masses);
        let v = { let v = atteos_penalty(&mut g, &r, 2).unwrap(); g.scalar(v) };
        prop_assert!(v >= 0.0 && v <= masses.len() as f64 + 1e-12);
    }
}

fn tiny(variant: Variant, rounds: usize) -> ModelConfig {
    let mut c = ModelConfig::new(variant, 9, 9);
    c.embed_dim = 4;
    c.hidden_dim = 4;
    c.rounds = rounds;
    c.dropout = 0.0;
    c
}

fn scaled(c: ModelConfig, scale: f64, seed: u64) -> Seq2Seq<f64> {
    let mut m = Seq2Seq::zeroed(c).unwrap();
    m.params_mut().init_uniform(&mut ChaCha8Rng::seed_from_u64(seed), scale);
    m
}

const SRC: [u32; 4] = [4, 5, 6, EOS];
const TRG: [u32; 3] = [7, 8, EOS];

fn grads_of(m: &Seq2Seq<f64>, pick: impl Fn(&SentenceLoss) -> crate::autodiff::Var) -> Gradients<f64> {
    let mut g = Graph::new();
    let s = sentence_loss(&mut g, m, &SRC, &[true; 4], &TRG, &UpdateOverride::default(), None).unwrap();
    let target = pick(&s);
    g.backward(target).unwrap();
    let mut grads = Gradients::zeros_like(m.params());
    grads.accumulate(&g);
    grads
}

#[test]
fn combined_gradient_is_linear_in_lambda() {
    let mut m = scaled(tiny(Variant::KvMemAtt, 2), 1.0, 1);
    m.config_mut().lambda = 0.75;
    let total = grads_of(&m, |s| s.loss);
    let nll = grads_of(&m, |s| s.nll);
    let pen = grads_of(&m, |s| s.penalty);
    for ((t, n), p) in total.iter().zip(nll.iter()).zip(pen.iter()) {
        for ((a, b), c) in t.data().iter().zip(n.data()).zip(p.data()) {
            assert!((a - (b + 0.75 * c)).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn full_loss_gradient_check() {
    // Production init scale: gradients of the round-1 query weights of the
    // two-round model are near 1e-10 here, which only the double-double
    // differences resolve.
    for (variant, rounds) in [(Variant::Baseline, 1), (Variant::KvMemAtt, 1), (Variant::KvMemAtt, 2)] {
        let m = scaled(tiny(variant, rounds), 0.08, 3);
        let report = check_model_gradients(&m, &SRC, &TRG, 1e-5, 4).unwrap();
        assert!(report.passes(1e-4), "{variant:?} R={rounds}: {report:?}");
    }
}

#[test]
fn adadelta_zero_gradient_changes_nothing() {
    let m = scaled(tiny(Variant::KvMemAtt, 1), 0.08, 5);
    let mut params = m.params().clone();
    let mut opt = AdaDelta::with_defaults(&params);
    let grads = Gradients::zeros_like(&params);
    assert!(opt.step(&mut params, &grads).unwrap());
    for ((_, a), (_, b)) in params.iter().zip(m.params().iter()) {
        let a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
}

fn one_param(value: f64) -> crate::params::ModelParams<f64> {
    let mut p = crate::params::ModelParams::new();
    p.add("x", Tensor::vector(vec![value])).unwrap();
    p
}

fn grad_at(params: &crate::params::ModelParams<f64>, f: impl Fn(f64) -> f64) -> Gradients<f64> {
    let x = params.get(crate::params::ParamId(0)).data()[0];
    let mut g = Graph::new();
    let v = params.var(&mut g, crate::params::ParamId(0));
    let s = g.sum(v);
    let l = g.affine(s, f(x), 0.0);
    g.backward(l).unwrap();
    let mut grads = Gradients::zeros_like(params);
    grads.accumulate(&g);
    grads
}

#[test]
fn adadelta_first_step_closed_form() {
    let mut p = one_param(1.0);
    let mut opt = AdaDelta::with_defaults(&p);
    let g = 0.3;
    let grads = grad_at(&p, |_| g);
    opt.step(&mut p, &grads).unwrap();
    let expect = 1.0 - (1e-6f64).sqrt() / ((1.0 - 0.95) * g * g + 1e-6).sqrt() * g;
    assert!((p.get(crate::params::ParamId(0)).data()[0] - expect).abs() < 1e-15);
    let (eg, ed) = opt.accumulators();
    assert!((eg[0].data()[0] - 0.05 * g * g).abs() < 1e-15);
    assert!(ed[0].data()[0] > 0.0);
}

#[test]
fn adadelta_descends_a_quadratic() {
    // loss = (x − 3)², gradient 2(x − 3).
    let mut p = one_param(0.0);
    let mut opt = AdaDelta::with_defaults(&p);
    let loss = |x: f64| (x - 3.0) * (x - 3.0);
    let mut prev = loss(0.0);
    for _ in 0..10 {
        let grads = grad_at(&p, |x| 2.0 * (x - 3.0));
        opt.step(&mut p, &grads).unwrap();
        let now = loss(p.get(crate::params::ParamId(0)).data()[0]);
        assert!(now < prev);
        prev = now;
    }
}

#[test]
fn adadelta_skips_non_finite_gradients() {
    let mut p = one_param(1.0);
    let mut opt = AdaDelta::with_defaults(&p);
    let grads = grad_at(&p, |_| f64::NAN);
    assert!(!opt.step(&mut p, &grads).unwrap());
    assert_eq!(opt.skipped(), 1);
    assert_eq!(p.get(crate::params::ParamId(0)).data()[0], 1.0);
    assert!(AdaDelta::new(&p, 1.0, 1e-6).is_err());
    assert!(AdaDelta::new(&p, 0.9, 0.0).is_err());
}

fn copy_pairs(count: usize, seed: u64) -> Vec<EncodedPair> {
    let corpus = gen_copy_task(5, 1, 4, count, seed).unwrap();
    let v = Vocabulary::build(&corpus.sources(), 20).unwrap();
    corpus.encode(&v, &v)
}

#[test]
fn identical_batch_has_single_pair_loss() {
    let m = scaled(tiny(Variant::KvMemAtt, 2), 0.5, 6);
    let pair = EncodedPair {
        src: SRC.to_vec(),
        trg: TRG.to_vec(),
    };
    let one = evaluate_loss(&m, core::slice::from_ref(&pair)).unwrap();
    let many = evaluate_loss(&m, &vec![pair; 5]).unwrap();
    assert!((one.loss - many.loss).abs() < 1e-12);
}

#[test]
fn training_reduces_loss_and_is_seeded() {
    let pairs = copy_pairs(60, 7);
    let mut c = tiny(Variant::KvMemAtt, 1);
    c.trg_vocab = 9;
    c.src_vocab = 9;
    let cfg = TrainConfig {
        batch_size: 10,
        epochs: 5,
        seed: 3,
        ..TrainConfig::default()
    };
    let run = || {
        let mut m = Seq2Seq::<f64>::initialized(c.clone(), 11).unwrap();
        let mut seen = 0;
        let r = train(&mut m, &pairs, &pairs[..10], &cfg, |_, _| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 5);
        r
    };
    let a = run();
    let b = run();
    assert_eq!(a[0].train.loss, b[0].train.loss);
    assert!(a[4].train.loss < a[0].train.loss, "{} !< {}", a[4].train.loss, a[0].train.loss);
    assert!(a[0].valid_bleu.is_some());
    assert!(a.iter().all(|r| r.checkpoint_due));
}

#[test]
fn training_input_errors() {
    let mut m = Seq2Seq::<f64>::initialized(tiny(Variant::Baseline, 1), 1).unwrap();
    let cfg = TrainConfig::default();
    assert!(matches!(train(&mut m, &[], &[], &cfg, |_, _| Ok(())), Err(Error::EmptyInput(_))));
    let bad = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(train(&mut m, &copy_pairs(4, 1), &[], &bad, |_, _| Ok(())), Err(Error::Config(_))));
}

#[test]
fn pretrained_init_with_frozen_memory_reproduces_baseline_loss() {
    let base = Seq2Seq::<f64>::initialized(tiny(Variant::Baseline, 1), 12).unwrap();
    let mut kv = Seq2Seq::<f64>::initialized(tiny(Variant::KvMemAtt, 1), 13).unwrap();
    init_from_pretrained(base.params(), &mut kv).unwrap();
    let loss = |m: &Seq2Seq<f64>, hook: &UpdateOverride| {
        let mut g = Graph::inference();
        let s = sentence_loss(&mut g, m, &SRC, &[true; 4], &TRG, hook, None).unwrap();
        g.scalar(s.loss)
    };
    let a = loss(&base, &UpdateOverride::default());
    let b = loss(&kv, &UpdateOverride::FROZEN);
    assert!((a - b).abs() < 1e-5);
    for (name, t) in base.params().iter() {
        assert_eq!(kv.params().by_name(name).unwrap(), t);
    }
}
