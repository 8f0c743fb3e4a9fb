// SPDX-License-Identifier: MIT OR Apache-2.0

//! Test-only generators and brute-force oracles. Nothing here calls into the
//! code paths it is used to check.

#![allow(dead_code)]

use neurotype::trace::{TraceHeader, TraceSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Activation values with a healthy share of exact zeros and negatives.
pub fn random_act(rng: &mut ChaCha8Rng) -> f32 {
    match rng.random_range(0..10) {
        0 => 0.0,
        _ => rng.random_range(-1.0f32..1.0),
    }
}

pub fn random_acts(rng: &mut ChaCha8Rng, langs: usize, d_m: usize) -> Vec<Vec<f32>> {
    (0..langs)
        .map(|_| (0..d_m).map(|_| random_act(rng)).collect())
        .collect()
}

pub fn random_trace(seed: u64, s: usize, p: usize, l: usize, d_m: usize) -> TraceSet {
    let mut r = rng(seed);
    let header = TraceHeader {
        num_layers: l,
        neurons_per_layer: d_m,
        languages: (0..p).map(|k| format!("lang{k}")).collect(),
        num_examples: s,
        task: format!("random-{seed}"),
    };
    let acts = (0..header.payload_len()).map(|_| random_act(&mut r)).collect();
    TraceSet::new(header, acts).unwrap()
}

/// Per-neuron label from counting positive languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleLabel {
    All,
    Non,
    Spec(usize),
    Part,
}

pub fn oracle_labels(acts: &[Vec<f32>]) -> Vec<OracleLabel> {
    let p = acts.len();
    let d_m = acts[0].len();
    let mut out = Vec::with_capacity(d_m);
    for i in 0..d_m {
        let mut positive = Vec::new();
        for (lang, v) in acts.iter().enumerate() {
            if v[i] > 0.0 {
                positive.push(lang);
            }
        }
        out.push(if positive.len() == p {
            OracleLabel::All
        } else if positive.is_empty() {
            OracleLabel::Non
        } else if positive.len() == 1 {
            OracleLabel::Spec(positive[0])
        } else {
            OracleLabel::Part
        });
    }
    out
}

/// Labels reconstructed from a partition's sets.
pub fn partition_labels(part: &neurotype::NeuronPartition) -> Vec<Option<OracleLabel>> {
    let mut out = vec![None; part.d_m];
    let mut put = |i: u32, label: OracleLabel| {
        let slot = &mut out[i as usize];
        assert!(slot.is_none(), "neuron {i} appears in two sets");
        *slot = Some(label);
    };
    for &i in &part.all_shared {
        put(i, OracleLabel::All);
    }
    for &i in &part.non_activated {
        put(i, OracleLabel::Non);
    }
    for &i in &part.partial_shared {
        put(i, OracleLabel::Part);
    }
    for (lang, set) in part.specific.iter().enumerate() {
        for &i in set {
            put(i, OracleLabel::Spec(lang));
        }
    }
    out
}

pub fn cell_vectors(trace: &TraceSet, s: usize, l: usize) -> Vec<Vec<f32>> {
    (0..trace.header.num_languages())
        .map(|p| {
            (0..trace.header.neurons_per_layer)
                .map(|i| trace.activations[((s * trace.header.num_languages() + p) * trace.header.num_layers + l) * trace.header.neurons_per_layer + i])
                .collect()
        })
        .collect()
}

/// Two-pass mean and population variance.
pub fn two_pass(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Log-softmax computed directly.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|x| (x - max).exp()).sum();
    logits.iter().map(|x| x - max - z.ln()).collect()
}
