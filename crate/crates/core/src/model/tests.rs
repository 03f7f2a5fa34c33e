use super::*;
use crate::autodiff::grad_check;
use crate::data::vocab::EOS;

fn small(variant: Variant, rounds: usize) -> ModelConfig {
    let mut c = ModelConfig::new(variant, 9, 8);
    c.embed_dim = 3;
    c.hidden_dim = 4;
    c.rounds = rounds;
    c.dropout = 0.0;
    c
}

fn model(variant: Variant, rounds: usize, seed: u64) -> Seq2Seq<f64> {
    let mut m = Seq2Seq::initialized(small(variant, rounds), seed).unwrap();
    // Larger weights than the production initializer so that differences
    // between variants are visible.
    m.params_mut()
        .init_uniform(&mut ChaCha8Rng::seed_from_u64(seed), 0.5);
    m
}

const SRC: [u32; 4] = [4, 7, 5, EOS];
const TRG: [u32; 3] = [6, 5, EOS];

#[test]
fn config_validation() {
    let ok = small(Variant::KvMemAtt, 2);
    assert!(ok.validate().is_ok());
    let mut c = ok.clone();
    c.rounds = 0;
    assert!(c.validate().is_err());
    let mut c = ok.clone();
    c.beam_size = 0;
    assert!(c.validate().is_err());
    let mut c = ok.clone();
    c.lambda = -0.1;
    assert!(c.validate().is_err());
    let mut c = ok.clone();
    c.dropout = 1.0;
    assert!(c.validate().is_err());
    assert_eq!(Variant::parse("kvmematt").unwrap(), Variant::KvMemAtt);
    assert!(Variant::parse("nope").is_err());
}

#[test]
fn layout_names() {
    let kv = Seq2Seq::<f64>::zeroed(small(Variant::KvMemAtt, 2)).unwrap();
    for name in ["att.r1.query.w_a", "att.r2.update.v_a", "att.r2.forget", "att.r1.add", "out.logits.w"] {
        assert!(kv.params().id(name).is_some(), "{name}");
    }
    let base = Seq2Seq::<f64>::zeroed(small(Variant::Baseline, 2)).unwrap();
    assert!(base.params().id("att.r1.query.u_a").is_some());
    assert!(base.params().id("att.r1.forget").is_none());
    assert!(base.params().id("att.r2.query.u_a").is_none());
    let mut shared = small(Variant::KvMemAtt, 1);
    shared.share_addressing = true;
    shared.gate_bias = true;
    let m = Seq2Seq::<f64>::zeroed(shared).unwrap();
    assert!(m.params().id("att.r1.update.w_a").is_none());
    assert!(m.params().id("att.r1.forget_bias").is_some());
}

#[test]
fn zero_weights_give_uniform_prediction() {
    let m = Seq2Seq::<f64>::zeroed(small(Variant::KvMemAtt, 1)).unwrap();
    let mut g = Graph::inference();
    let fwd = m
        .forward_teacher_forced(&mut g, &SRC, &[true; 4], &TRG, &UpdateOverride::default(), None)
        .unwrap();
    for p in &fwd.distributions {
        for v in g.value(*p) {
            assert!((v - 1.0 / 8.0).abs() < 1e-15);
        }
    }
}

#[test]
fn one_distribution_and_attention_per_target_token() {
    for variant in [Variant::Baseline, Variant::KvMemAtt] {
        let m = model(variant, 2, 1);
        let mut g = Graph::inference();
        let fwd = m
            .forward_teacher_forced(&mut g, &SRC, &[true; 4], &TRG, &UpdateOverride::default(), None)
            .unwrap();
        assert_eq!(fwd.distributions.len(), 3);
        assert_eq!(fwd.attentions().count(), 3);
        for p in &fwd.distributions {
            let total: f64 = g.value(*p).iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn out_of_vocabulary_ids_are_rejected() {
    let m = model(Variant::KvMemAtt, 1, 2);
    let mut g = Graph::inference();
    let err = m.forward_teacher_forced(&mut g, &[4, 9, EOS], &[true; 3], &TRG, &UpdateOverride::default(), None);
    assert_eq!(err.unwrap_err(), Error::Vocabulary { id: 9, size: 9 });
    let err = m.forward_teacher_forced(&mut g, &SRC, &[true; 4], &[8, EOS], &UpdateOverride::default(), None);
    assert_eq!(err.unwrap_err(), Error::Vocabulary { id: 8, size: 8 });
}

fn tf_values(m: &Seq2Seq<f64>, hook: &UpdateOverride) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut g = Graph::inference();
    let fwd = m
        .forward_teacher_forced(&mut g, &SRC, &[true; 4], &TRG, hook, None)
        .unwrap();
    fwd.steps
        .iter()
        .zip(&fwd.distributions)
        .map(|(s, p)| {
            (
                g.value(s.attention).to_vec(),
                g.value(s.context).to_vec(),
                g.value(*p).to_vec(),
            )
        })
        .collect()
}

#[test]
fn frozen_memory_matches_baseline_after_pretrained_init() {
    let base = model(Variant::Baseline, 1, 3);
    let mut kv = model(Variant::KvMemAtt, 1, 4);
    kv.init_from_pretrained(base.params()).unwrap();
    let a = tf_values(&base, &UpdateOverride::default());
    let b = tf_values(&kv, &UpdateOverride::FROZEN);
    for (x, y) in a.iter().zip(&b) {
        for (u, v) in x.0.iter().zip(&y.0).chain(x.1.iter().zip(&y.1)).chain(x.2.iter().zip(&y.2)) {
            assert!((u - v).abs() < 1e-12);
        }
    }
    let live = tf_values(&kv, &UpdateOverride::default());
    assert_ne!(live[2].0, b[2].0);
}

#[test]
fn pretrained_init_copies_shared_tensors_only() {
    let base = model(Variant::Baseline, 1, 5);
    let fresh = model(Variant::KvMemAtt, 2, 6);
    let mut kv = fresh.clone();
    let copied = kv.init_from_pretrained(base.params()).unwrap();
    assert_eq!(copied, base.params().len());
    for (name, t) in base.params().iter() {
        assert_eq!(kv.params().by_name(name).unwrap(), t);
    }
    for name in ["att.r1.forget", "att.r1.update.w_a", "att.r2.query.w_a"] {
        assert_eq!(kv.params().by_name(name), fresh.params().by_name(name));
    }
}

#[test]
fn pretrained_shape_mismatch_names_the_tensor() {
    let mut cfg = small(Variant::Baseline, 1);
    cfg.trg_vocab = 10;
    let base = Seq2Seq::<f64>::zeroed(cfg).unwrap();
    let mut kv = model(Variant::KvMemAtt, 1, 7);
    match kv.init_from_pretrained(base.params()) {
        Err(Error::Checkpoint { name, .. }) => assert_eq!(name, "trg.embedding"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn from_params_requires_the_exact_layout() {
    let m = model(Variant::KvMemAtt, 2, 8);
    let back = Seq2Seq::from_params(m.config().clone(), m.params().clone()).unwrap();
    assert_eq!(back.params(), m.params());
    let base = model(Variant::Baseline, 1, 8);
    assert!(matches!(
        Seq2Seq::from_params(m.config().clone(), base.params().clone()),
        Err(Error::Checkpoint { .. })
    ));
    assert!(matches!(
        Seq2Seq::from_params(base.config().clone(), m.params().clone()),
        Err(Error::Checkpoint { .. })
    ));
}

#[test]
fn stepwise_decoding_matches_teacher_forcing() {
    for variant in [Variant::Baseline, Variant::KvMemAtt] {
        let m = model(variant, 2, 9);
        let tf = tf_values(&m, &UpdateOverride::default());
        let (src, mut carry) = m.encode_source(&SRC, &[true; 4]).unwrap();
        let snapshot = src.annotations.clone();
        let mut y_prev = BOS;
        for (t, &y) in TRG.iter().enumerate() {
            let out = m.decode_step(&src, &carry, y_prev, &UpdateOverride::default()).unwrap();
            for (lp, p) in out.log_probs.iter().zip(&tf[t].2) {
                assert!((lp.exp() - p).abs() < 1e-12);
            }
            assert_eq!(out.attention.last().unwrap(), &tf[t].0);
            carry = out.carry;
            y_prev = y;
        }
        assert_eq!(src.annotations, snapshot);
    }
}

#[test]
fn padding_does_not_change_decoding() {
    let m = model(Variant::KvMemAtt, 2, 10);
    let (a, ca) = m.encode_source(&SRC, &[true; 4]).unwrap();
    let (b, cb) = m
        .encode_source(&[4, 7, 5, EOS, 0, 0], &[true, true, true, true, false, false])
        .unwrap();
    let oa = m.decode_step(&a, &ca, BOS, &UpdateOverride::default()).unwrap();
    let ob = m.decode_step(&b, &cb, BOS, &UpdateOverride::default()).unwrap();
    assert_eq!(oa.log_probs, ob.log_probs);
    assert_eq!(oa.attention, ob.attention);
}

#[test]
fn dropout_masks_are_seeded_and_scaled() {
    let mut d = Dropout::new(0.5, 3).unwrap();
    let m: Tensor<f64> = d.mask(1000);
    assert!(m.data().iter().all(|&v| v == 0.0 || v == 2.0));
    let kept = m.data().iter().filter(|&&v| v > 0.0).count();
    assert!((400..600).contains(&kept));
    let mut again = Dropout::new(0.5, 3).unwrap();
    assert_eq!(again.mask::<f64>(1000), m);
    assert!(Dropout::new(1.0, 0).is_err());
}

#[test]
fn prediction_gradient_check() {
    // Round-1 query weights reach the output only through the key update;
    // with small weights their gradients drop below what central
    // differences can resolve.
    let mut m = model(Variant::KvMemAtt, 2, 11);
    m.params_mut().init_uniform(&mut ChaCha8Rng::seed_from_u64(11), 1.0);
    let report = grad_check(m.params(), 1e-5, 12, |g, p| {
        let enc = encode(g, p, &m.layout.encoder, &SRC, &[true; 4])?;
        let s0 = init_decoder_state(g, p, m.layout.init, &enc)?;
        let mem = init_memories(&enc);
        let step = kvmematt_step(
            g,
            p,
            &m.layout.decoder,
            &m.layout.attention,
            2,
            s0,
            BOS,
            &mem,
            &UpdateOverride::default(),
        )?;
        let table = p.var(g, m.layout.decoder.embedding);
        let e = g.embed_one(table, BOS)?;
        let input = g.concat(&[step.state, step.context, e])?;
        let w = p.var(g, m.layout.readout_w);
        let b = p.var(g, m.layout.readout_b);
        let pre = g.matmul(input, w)?;
        let pre = g.add(pre, b)?;
        let r = g.tanh(pre);
        let v = p.var(g, m.layout.logits_w);
        let logits = g.matmul(r, v)?;
        let dist = g.softmax(logits)?;
        let pick = g.pick(dist, 6)?;
        Ok(g.log_clamped(pick, 1e-12))
    })
    .unwrap();
    assert!(report.passes(1e-4), "{report:?}");
}

#[test]
fn log_softmax_is_normalized() {
    let lp = log_softmax(&[1.0f64, 2.0, 3.0]);
    let total: f64 = lp.iter().map(|v| v.exp()).sum();
    assert!((total - 1.0).abs() < 1e-15);
    assert!((lp[2] - lp[1] - 1.0).abs() < 1e-15);
}

#[test]
fn forward_is_deterministic() {
    let m = model(Variant::KvMemAtt, 2, 13);
    assert_eq!(tf_values(&m, &UpdateOverride::default()), tf_values(&m, &UpdateOverride::default()));
    let a = Seq2Seq::<f64>::initialized(small(Variant::KvMemAtt, 1), 5).unwrap();
    let b = Seq2Seq::<f64>::initialized(small(Variant::KvMemAtt, 1), 5).unwrap();
    assert_eq!(a.params(), b.params());
    assert!(a.params().iter().all(|(_, t)| t.data().iter().all(|v| v.abs() < INIT_SCALE)));
}

#[test]
fn single_precision_runs() {
    let m = model(Variant::KvMemAtt, 2, 14).cast::<f32>();
    let (src, carry) = m.encode_source(&SRC, &[true; 4]).unwrap();
    let out = m.decode_step(&src, &carry, BOS, &UpdateOverride::default()).unwrap();
    let total: f64 = out.log_probs.iter().map(|v| v.exp()).sum();
    assert!((total - 1.0).abs() < 1e-6);
}
