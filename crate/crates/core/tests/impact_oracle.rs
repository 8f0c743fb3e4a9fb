// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(clippy::needless_range_loop)]

mod common;

use common::{log_softmax, oracle_labels, cell_vectors, random_act, random_trace, rng, two_pass, OracleLabel};
use neurotype::classifier::classify_trace;
use neurotype::impact::{
    cis_for_language, cis_summary, correctness_impact, generation_impact, gis_type_curves, neuron_contribution,
    summarize, vocab_projection, VarianceMode,
};
use neurotype::toysim::{Activation, SyntheticInputSpec, ToyConfig, ToyModel};
use neurotype::trace::{Answer, AnswerMode, AnswerSet, ModelSidecar};
use proptest::prelude::*;
use rand::Rng;

fn sidecar(seed: u64, l: usize, d_m: usize, d: usize, vocab: usize) -> ModelSidecar {
    let mut r = rng(seed);
    let values = (0..l * d_m * d).map(|_| r.random_range(-1.0f32..1.0)).collect();
    let emb = (0..vocab * d).map(|_| r.random_range(-1.0f32..1.0)).collect();
    ModelSidecar::from_values(l, d_m, d, values, Some(emb)).unwrap()
}

#[test]
fn cis_matches_loop_oracle() {
    let (s_n, p_n, l_n, d_m, d, vocab) = (6, 3, 2, 20, 8, 11);
    let t = random_trace(31, s_n, p_n, l_n, d_m);
    let sc = sidecar(32, l_n, d_m, d, vocab);
    let mut r = rng(33);
    let answers = AnswerSet {
        num_examples: s_n,
        num_languages: p_n,
        d,
        answers: (0..s_n * p_n).map(|_| Answer::Tokens(vec![r.random_range(0..vocab as u32)])).collect(),
    };
    for p in 0..p_n {
        let got = cis_for_language(&t, &sc, &answers, p, AnswerMode::FirstToken).unwrap();
        assert_eq!(got.len(), s_n * l_n);
        for v in &got {
            let Answer::Tokens(ids) = answers.get(v.example, p) else { unreachable!() };
            let e = &sc.embedding.as_ref().unwrap()[ids[0] as usize * d..(ids[0] as usize + 1) * d];
            for i in 0..d_m {
                let val = sc.value_vector(v.layer, i).unwrap();
                let mut dot = 0.0f64;
                for j in 0..d {
                    dot += e[j] as f64 * val[j] as f64;
                }
                let want = dot * t.get(v.example, p, v.layer, i) as f64;
                assert!((v.values[i] - want).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn cis_summary_matches_two_pass() {
    let (s_n, p_n, l_n, d_m, d) = (10, 3, 3, 24, 6);
    let t = random_trace(41, s_n, p_n, l_n, d_m);
    let sc = sidecar(42, l_n, d_m, d, 5);
    let answers = AnswerSet {
        num_examples: s_n,
        num_languages: p_n,
        d,
        answers: (0..s_n * p_n).map(|k| Answer::Tokens(vec![(k % 5) as u32])).collect(),
    };
    let res = classify_trace(&t).unwrap();
    let p = 1;
    let cis = cis_for_language(&t, &sc, &answers, p, AnswerMode::FirstToken).unwrap();
    let summary = cis_summary(&cis, &res, VarianceMode::Population).unwrap();
    // Bucket by an independently computed label.
    let mut buckets: [Vec<f64>; 4] = Default::default();
    for v in &cis {
        for (i, lab) in oracle_labels(&cell_vectors(&t, v.example, v.layer)).into_iter().enumerate() {
            let k = match lab {
                OracleLabel::All => 0,
                OracleLabel::Part => 1,
                OracleLabel::Spec(_) => 2,
                OracleLabel::Non => 3,
            };
            buckets[k].push(v.values[i]);
        }
    }
    let stats = [summary.all_shared, summary.partial_shared, summary.specific, summary.non_activated];
    for (b, st) in buckets.iter().zip(stats) {
        match st {
            None => assert!(b.is_empty()),
            Some(st) => {
                let (mean, var) = two_pass(b);
                assert_eq!(st.count, b.len());
                assert!((st.mean - mean).abs() < 1e-9);
                assert!((st.var - var).abs() < 1e-9);
                assert_eq!(st.max, b.iter().copied().fold(f64::MIN, f64::max));
                assert_eq!(st.min, b.iter().copied().fold(f64::MAX, f64::min));
            }
        }
    }
}

#[test]
fn sample_variance_rescales_population() {
    let xs = [1.0, 4.0, -2.0, 7.5, 0.25];
    let pop = summarize(&xs, VarianceMode::Population).unwrap();
    let samp = summarize(&xs, VarianceMode::Sample).unwrap();
    assert!((samp.var - pop.var * 5.0 / 4.0).abs() < 1e-12);
    assert_eq!(summarize(&[3.0], VarianceMode::Sample).unwrap().var, 0.0);
    assert!(summarize(&[], VarianceMode::Population).is_none());
}

#[test]
fn gis_curves_average_within_then_across() {
    let t = random_trace(51, 5, 2, 2, 12);
    let sc = sidecar(52, 2, 12, 4, 3);
    let res = classify_trace(&t).unwrap();
    let curves = gis_type_curves(&t, &sc, &res, 0).unwrap();
    for l in 0..2 {
        let mut per_type: [Vec<f64>; 4] = Default::default();
        for s in 0..5 {
            let acts = t.vector(s, 0, l);
            let norms = sc.layer_norms(l);
            let total: f64 = acts.iter().zip(norms).map(|(a, n)| (a.abs() * n) as f64).sum();
            let labels = oracle_labels(&cell_vectors(&t, s, l));
            let mut sum = [0.0; 4];
            let mut n = [0usize; 4];
            for i in 0..12 {
                let k = match labels[i] {
                    OracleLabel::All => 0,
                    OracleLabel::Part => 1,
                    OracleLabel::Spec(_) => 2,
                    OracleLabel::Non => 3,
                };
                sum[k] += acts[i].abs() as f64 * norms[i] as f64 / total;
                n[k] += 1;
            }
            for k in 0..4 {
                if n[k] > 0 {
                    per_type[k].push(sum[k] / n[k] as f64);
                }
            }
        }
        for k in 0..4 {
            match curves[l][k] {
                None => assert!(per_type[k].is_empty()),
                Some(g) => assert!((g - two_pass(&per_type[k]).0).abs() < 1e-6),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gis_normalizes_and_is_scale_invariant(seed in any::<u64>(), d_m in 1usize..64, c in 0.01f32..100.0) {
        let mut r = rng(seed);
        let acts: Vec<f32> = (0..d_m).map(|_| random_act(&mut r)).collect();
        let norms: Vec<f32> = (0..d_m).map(|_| r.random_range(0.0f32..3.0)).collect();
        let g = generation_impact(&acts, &norms).unwrap();
        prop_assert!(g.values.iter().all(|v| *v >= 0.0));
        if g.degenerate {
            prop_assert!(g.values.iter().all(|v| *v == 0.0));
        } else {
            prop_assert!((g.values.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let scaled: Vec<f32> = acts.iter().map(|a| a * c).collect();
            let h = generation_impact(&scaled, &norms).unwrap();
            for (x, y) in g.values.iter().zip(&h.values) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn cis_is_linear_in_answer(seed in any::<u64>(), d_m in 1usize..32, d in 1usize..16) {
        let mut r = rng(seed);
        let acts: Vec<f32> = (0..d_m).map(|_| random_act(&mut r)).collect();
        let values: Vec<f32> = (0..d_m * d).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let e: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let e2: Vec<f64> = e.iter().map(|x| 2.0 * x).collect();
        let a = correctness_impact(&acts, &values, &e).unwrap();
        let b = correctness_impact(&acts, &values, &e2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((2.0 * x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn gis_all_zero_is_flagged() {
    let g = generation_impact(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap();
    assert!(g.degenerate);
    assert_eq!(g.values, vec![0.0; 3]);
    let g = generation_impact(&[1.0, -2.0], &[0.0, 0.0]).unwrap();
    assert!(g.degenerate);
}

#[test]
fn projection_shifts_log_probability_gaps() {
    // Adding A_i v_i to h changes log p(w) - log p(w') by score(w) - score(w').
    let mut r = rng(61);
    let (d, vocab) = (4, 6);
    for _ in 0..50 {
        let emb: Vec<f32> = (0..vocab * d).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let value: Vec<f32> = (0..d).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let h: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let a = r.random_range(-2.0f32..2.0);
        let m = neuron_contribution(a, &value);
        let proj = vocab_projection(&m, &emb).unwrap();
        let logits = |x: &[f64]| -> Vec<f64> {
            emb.chunks(d).map(|row| row.iter().zip(x).map(|(e, v)| *e as f64 * v).sum()).collect()
        };
        let before = log_softmax(&logits(&h));
        let shifted: Vec<f64> = h.iter().zip(&m).map(|(x, y)| x + y).collect();
        let after = log_softmax(&logits(&shifted));
        for w in 0..vocab {
            for w2 in 0..vocab {
                let gap = (after[w] - after[w2]) - (before[w] - before[w2]);
                assert!((gap - (proj.scores[w] - proj.scores[w2])).abs() < 1e-5);
            }
        }
        for pair in proj.ranking.windows(2) {
            let (x, y) = (proj.scores[pair[0] as usize], proj.scores[pair[1] as usize]);
            assert!(x > y || (x == y && pair[0] < pair[1]));
        }
    }
}

#[test]
fn projection_ties_break_by_id() {
    let emb = [1.0f32, 0.0, 1.0, 0.0, 2.0, 0.0];
    let p = vocab_projection(&[1.0, 5.0], &emb).unwrap();
    assert_eq!(p.ranking, vec![2, 0, 1]);
}

#[test]
fn sidecar_contributions_reproduce_ffn_output() {
    let cfg = ToyConfig { num_layers: 3, d: 8, d_m: 24, vocab: 10, act: Activation::Gelu, seed: 71 };
    let model = ToyModel::init(&cfg).unwrap();
    let sc = model.to_sidecar(true, true).unwrap();
    let inputs = SyntheticInputSpec::new(2, 3, 72).generate(8).unwrap();
    for x in &inputs {
        let mut h = x.clone();
        for l in 0..3 {
            let (out, acts) = model.ffn_forward(l, &h, None).unwrap();
            let mut sum = [0.0f64; 8];
            for i in 0..24 {
                for (s, c) in sum.iter_mut().zip(neuron_contribution(acts[i], sc.value_vector(l, i).unwrap())) {
                    *s += c;
                }
            }
            for (a, b) in sum.iter().zip(&out) {
                assert!((a - b).abs() < 1e-5);
            }
            for (hv, o) in h.iter_mut().zip(&out) {
                *hv += o;
            }
        }
    }
}
