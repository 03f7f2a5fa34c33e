use super::*;
use crate::data::vocab::EOS;
use crate::data::Links;
use alloc::vec;
use alloc::vec::Vec;
use proptest::prelude::*;

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

#[test]
fn bleu_of_identical_corpus_is_100() {
    let x = vec![words("a b c d e"), words("f g")];
    assert_eq!(bleu(&x, &x, 4, Smoothing::None).unwrap(), 100.0);
    assert_eq!(bleu(&x, &x, 4, Smoothing::AddOne).unwrap(), 100.0);
}

#[test]
fn bleu_without_shared_unigrams_is_zero() {
    let h = vec![words("a b c")];
    let r = vec![words("d e f")];
    assert_eq!(bleu(&h, &r, 4, Smoothing::None).unwrap(), 0.0);
    assert!(bleu(&h, &r, 4, Smoothing::AddOne).unwrap() > 0.0);
}

#[test]
fn unigram_counts_are_clipped() {
    let mut s = BleuStats::new(4);
    s.add(&words("the the the"), &words("the cat"));
    assert_eq!(s.precision(1), Some(1.0 / 3.0));
    assert_eq!(s.precision(2), Some(0.0));
    assert_eq!(s.precision(4), None);
}

#[test]
fn bleu_hand_case() {
    // hyp "a b c x" vs ref "a b c d e": p1 = 3/4, p2 = 2/3, p3 = 1/2,
    // p4 = 0/1 → unsmoothed 0; add-one: 4/5, 3/4, 2/3, 1/2.
    let h = vec![words("a b c x")];
    let r = vec![words("a b c d e")];
    assert_eq!(bleu(&h, &r, 4, Smoothing::None).unwrap(), 0.0);
    let bp = (1.0f64 - 5.0 / 4.0).exp();
    let geo = (0.8f64 * 0.75 * (2.0 / 3.0) * 0.5).powf(0.25);
    let got = bleu(&h, &r, 4, Smoothing::AddOne).unwrap();
    assert!((got - 100.0 * bp * geo).abs() < 1e-10, "{got}");
    let got = bleu(&h, &r, 3, Smoothing::None).unwrap();
    let geo = (0.75f64 * (2.0 / 3.0) * 0.5).powf(1.0 / 3.0);
    assert!((got - 100.0 * bp * geo).abs() < 1e-10);
}

#[test]
fn shorter_hypothesis_is_penalized() {
    let r = vec![words("a b c d e f")];
    for len in 1..4 {
        let h = vec![r[0][..len].to_vec()];
        let mut s = BleuStats::new(4);
        s.add(&h[0], &r[0]);
        assert!(s.brevity_penalty() < 1.0);
        assert!(bleu(&h, &r, 4, Smoothing::None).unwrap() < 100.0);
    }
}

#[test]
fn bleu_errors() {
    let empty: Vec<Vec<&str>> = vec![];
    assert!(matches!(bleu(&empty, &empty, 4, Smoothing::None), Err(crate::Error::EmptyInput(_))));
    assert!(bleu(&[words("a")], &[], 4, Smoothing::None).is_err());
}

fn links(pairs: &[(usize, usize)]) -> Links {
    pairs.iter().copied().collect()
}

#[test]
fn aer_examples() {
    let s = links(&[(0, 0), (1, 1)]);
    assert_eq!(aer(&s, &s), 0.0);
    assert_eq!(aer(&links(&[(0, 1)]), &links(&[(1, 0)])), 1.0);
    let a = links(&[(0, 0), (1, 1)]);
    let s = links(&[(0, 0)]);
    assert!((aer(&a, &s) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(aer(&Links::new(), &Links::new()), 0.0);
}

#[test]
fn corpus_aer_pools_counts() {
    let a1 = links(&[(0, 0)]);
    let s1 = links(&[(0, 0)]);
    let a2 = links(&[(0, 0), (1, 1), (2, 2)]);
    let s2 = links(&[(5, 5)]);
    // overlap 1, |A| 4, |S| 2 → 1 − 2/6.
    let got = corpus_aer([(&a1, &s1), (&a2, &s2)]);
    assert!((got - (1.0 - 2.0 / 6.0)).abs() < 1e-15);
}

fn trace_from_rows(source_len: usize, rows: &[Vec<f64>], tokens: &[u32]) -> AttentionTrace {
    let mut t = AttentionTrace::new((0..source_len as u32).map(|i| if i + 1 == source_len as u32 { EOS } else { 4 + i }).collect());
    for (row, &tok) in rows.iter().zip(tokens) {
        t.push(tok, vec![row.clone()]);
    }
    t
}

#[test]
fn diagonal_attention_gives_identity_links() {
    let rows = vec![
        vec![0.9, 0.05, 0.05],
        vec![0.1, 0.8, 0.1],
        vec![0.0, 0.0, 1.0],
    ];
    let t = trace_from_rows(3, &rows, &[5, 6, EOS]);
    assert_eq!(attention_to_alignment(&t), links(&[(0, 0), (1, 1)]));
}

#[test]
fn eos_slot_and_eos_step_contribute_no_link() {
    let rows = vec![vec![0.2, 0.8], vec![0.9, 0.1]];
    let t = trace_from_rows(2, &rows, &[5, EOS]);
    assert!(attention_to_alignment(&t).is_empty());
    let t = trace_from_rows(2, &[vec![0.5, 0.5]], &[5]);
    assert_eq!(attention_to_alignment(&t), links(&[(0, 0)]));
}

#[test]
fn coverage_examples() {
    // Content-only uniform attention with m = n: every word gets mass 1.
    let rows = vec![vec![0.5, 0.5, 0.0], vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0]];
    let r = coverage_report(&trace_from_rows(3, &rows, &[5, 6, EOS]), UNDER_THRESHOLD, OVER_THRESHOLD);
    assert_eq!(r.mass, vec![1.0, 1.0]);
    assert!(r.under.is_empty() && r.over.is_empty());

    let rows = vec![vec![1.0, 0.0, 0.0, 0.0]; 3];
    let r = coverage_report(&trace_from_rows(4, &rows, &[5, 6, 7]), UNDER_THRESHOLD, OVER_THRESHOLD);
    assert_eq!(r.mass, vec![3.0, 0.0, 0.0]);
    assert_eq!(r.over, vec![0]);
    assert_eq!(r.under, vec![1, 2]);
    assert!((r.under_pct() - 200.0 / 3.0).abs() < 1e-12);
    assert!((r.over_pct() - 100.0 / 3.0).abs() < 1e-12);

    let mut total = CoverageSummary::default();
    total.add(&r);
    total.add(&coverage_report(&trace_from_rows(1, &[vec![1.0]], &[EOS]), 0.2, 2.0));
    assert_eq!(total.words, 3);
    assert!((total.under_pct() - 200.0 / 3.0).abs() < 1e-12);
}

#[test]
fn trace_accessors_and_validation() {
    let mut t = AttentionTrace::new(vec![4, 5, EOS]);
    t.push(6, vec![vec![0.2, 0.3, 0.5], vec![1.0, 0.0, 0.0]]);
    t.push(EOS, vec![vec![0.0, 0.0, 1.0], vec![0.1, 0.1, 0.8]]);
    assert_eq!(t.len(), 2);
    assert_eq!(t.rounds(), 2);
    assert_eq!(t.target(), vec![6, EOS]);
    assert_eq!(t.round_matrix(0)[1], vec![0.0, 0.0, 1.0]);
    assert_eq!(t.final_rows().next().unwrap(), &[1.0, 0.0, 0.0]);
    assert!(t.validate(1e-9).is_ok());
    t.push(7, vec![vec![0.5, 0.5, 0.5], vec![1.0, 0.0, 0.0]]);
    assert!(t.validate(1e-9).is_err());
}

fn scan_oracle(rows: &[Vec<f64>], tokens: &[u32], eos_slot: usize) -> Links {
    let mut out = Links::new();
    for t in 0..rows.len() {
        if tokens[t] == EOS {
            continue;
        }
        let mut best_j = 0;
        let mut best_v = f64::NEG_INFINITY;
        for j in 0..rows[t].len() {
            if rows[t][j] > best_v {
                best_v = rows[t][j];
                best_j = j;
            }
        }
        if best_j != eos_slot {
            out.insert((best_j, t));
        }
    }
    out
}

proptest! {
    #[test]
    fn extraction_matches_row_scan(
        n in 1usize..8,
        raw in proptest::collection::vec(proptest::collection::vec(0u8..4, 8), 1..8),
        eos_at in proptest::option::of(0usize..8),
    ) {
        // Small integer weights produce plenty of ties.
        let rows: Vec<Vec<f64>> = raw
            .iter()
            .map(|r| {
                let r = &r[..n];
                let z: f64 = r.iter().map(|&v| v as f64).sum::<f64>().max(1.0);
                r.iter().map(|&v| v as f64 / z).collect()
            })
            .collect();
        let mut tokens = vec![5u32; rows.len()];
        if let Some(e) = eos_at {
            if e < tokens.len() {
                tokens[e] = EOS;
            }
        }
        let t = trace_from_rows(n, &rows, &tokens);
        prop_assert_eq!(attention_to_alignment(&t), scan_oracle(&rows, &tokens, n - 1));
    }

    #[test]
    fn aer_bounds(
        a in proptest::collection::btree_set((0usize..4, 0usize..4), 0..8),
        s in proptest::collection::btree_set((0usize..4, 0usize..4), 0..8),
    ) {
        let v = aer(&a, &s);
        prop_assert!((0.0..=1.0).contains(&v));
        if !a.is_empty() && !s.is_empty() {
            prop_assert_eq!(v == 0.0, a == s);
        }
    }

    #[test]
    fn bleu_self_is_100(x in proptest::collection::vec(proptest::collection::vec(0u32..6, 1..9), 1..5)) {
        prop_assert_eq!(bleu(&x, &x, 4, Smoothing::None).unwrap(), 100.0);
    }
}
