// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::collections::BTreeSet;

use common::random_trace;
use neurotype::classifier::{classify_trace, NeuronType};
use neurotype::intervention::{
    build_random_mask, build_typed_mask, mask_pct, read_mask, write_mask, MaskEntry, MaskScope, MaskSet,
};
use neurotype::patterns::aggregate_ratios;
use proptest::prelude::*;

#[test]
fn corpus_union_and_intersection_match_set_oracle() {
    let t = random_trace(21, 3, 3, 4, 20);
    let res = classify_trace(&t).unwrap();
    for ty in NeuronType::ALL {
        let per = build_typed_mask(&res, ty, None, MaskScope::PerExample).unwrap();
        let union = build_typed_mask(&res, ty, None, MaskScope::Union).unwrap();
        let inter = build_typed_mask(&res, ty, None, MaskScope::Intersection).unwrap();
        for l in 0..4 {
            let sets: Vec<BTreeSet<u32>> = per
                .entries
                .iter()
                .filter(|e| e.l == l)
                .map(|e| e.neurons.iter().copied().collect())
                .collect();
            assert_eq!(sets.len(), 3);
            let u: BTreeSet<u32> = sets.iter().flatten().copied().collect();
            let i: BTreeSet<u32> = sets[0].iter().filter(|n| sets.iter().all(|s| s.contains(n))).copied().collect();
            assert_eq!(union.entries[l].neurons, u.into_iter().collect::<Vec<_>>());
            assert_eq!(inter.entries[l].neurons, i.into_iter().collect::<Vec<_>>());
        }
    }
}

#[test]
fn typed_masks_cover_each_cell_exactly_once() {
    let t = random_trace(22, 5, 4, 3, 33);
    let res = classify_trace(&t).unwrap();
    let masks: Vec<MaskSet> = NeuronType::ALL
        .iter()
        .map(|ty| build_typed_mask(&res, *ty, None, MaskScope::PerExample).unwrap())
        .collect();
    for k in 0..masks[0].entries.len() {
        let mut seen = vec![0u8; 33];
        for m in &masks {
            for &i in &m.entries[k].neurons {
                seen[i as usize] += 1;
            }
        }
        assert!(seen.iter().all(|c| *c == 1), "entry {k}: {seen:?}");
    }
}

#[test]
fn specific_language_masks_partition_the_specific_mask() {
    let t = random_trace(23, 4, 3, 2, 25);
    let res = classify_trace(&t).unwrap();
    let all = build_typed_mask(&res, NeuronType::Specific, None, MaskScope::PerExample).unwrap();
    let per_lang: Vec<MaskSet> = ["lang0", "lang1", "lang2"]
        .iter()
        .map(|tag| build_typed_mask(&res, NeuronType::Specific, Some(tag), MaskScope::PerExample).unwrap())
        .collect();
    for (k, e) in all.entries.iter().enumerate() {
        let mut joined: Vec<u32> = per_lang.iter().flat_map(|m| m.entries[k].neurons.clone()).collect();
        joined.sort_unstable();
        assert_eq!(joined, e.neurons);
    }
}

#[test]
fn typed_mask_pct_equals_layer_averaged_ratio() {
    let t = random_trace(24, 17, 4, 5, 48);
    let res = classify_trace(&t).unwrap();
    let agg = aggregate_ratios(&res);
    for ty in NeuronType::ALL {
        let mask = build_typed_mask(&res, ty, None, MaskScope::PerExample).unwrap();
        let pct = mask_pct(&mask, 5, 48).unwrap();
        let via_patterns = agg.iter().map(|r| r.get(ty)).sum::<f64>() / 5.0;
        assert!((pct - via_patterns).abs() < 1e-9, "{ty}: {pct} vs {via_patterns}");
    }
}

#[test]
fn random_inclusion_frequency_is_uniform() {
    // 25% of 16 neurons = 4 per layer; each neuron should be picked ~25% of the time.
    let mut hits = [0usize; 16];
    let trials = 1000;
    for seed in 0..trials {
        let m = build_random_mask(25.0, 1, 16, seed).unwrap();
        assert_eq!(m.entries[0].neurons.len(), 4);
        for &i in &m.entries[0].neurons {
            hits[i as usize] += 1;
        }
    }
    for (i, h) in hits.iter().enumerate() {
        let freq = *h as f64 / trials as f64;
        assert!((freq - 0.25).abs() <= 0.05, "neuron {i}: {freq}");
    }
}

#[test]
fn random_mask_pct_matches_count() {
    for (pct, d_m) in [(5.0, 16384usize), (25.0, 64), (12.5, 10), (100.0, 7)] {
        let m = build_random_mask(pct, 3, d_m, 1).unwrap();
        let k = m.entries[0].neurons.len();
        assert!(m.entries.iter().all(|e| e.neurons.len() == k));
        assert_eq!(mask_pct(&m, 3, d_m).unwrap(), 100.0 * k as f64 / d_m as f64);
    }
}

fn arb_mask() -> impl Strategy<Value = MaskSet> {
    (1usize..5, 1usize..40, prop::option::of(any::<u64>()), any::<bool>()).prop_flat_map(|(layers, d_m, seed, per_example)| {
        let entry_sets = prop::collection::vec(prop::collection::btree_set(0..d_m as u32, 0..d_m.min(10)), layers);
        (entry_sets, Just((layers, d_m, seed, per_example))).prop_map(|(sets, (layers, d_m, seed, per_example))| MaskSet {
            version: 1,
            scope: if per_example { MaskScope::PerExample } else { MaskScope::Union },
            d_m,
            num_layers: layers,
            seed,
            selection: None,
            positions: "all".into(),
            entries: sets
                .into_iter()
                .enumerate()
                .map(|(l, s)| MaskEntry {
                    s: per_example.then_some(0),
                    l,
                    neurons: s.into_iter().collect(),
                })
                .collect(),
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn mask_file_round_trip(m in arb_mask()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.json");
        write_mask(&m, &path).unwrap();
        prop_assert_eq!(read_mask(&path).unwrap(), m);
    }
}

#[test]
fn equal_seeds_give_identical_json() {
    let a = build_random_mask(5.0, 6, 1000, 77).unwrap().to_json().unwrap();
    let b = build_random_mask(5.0, 6, 1000, 77).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["scope"], "union");
    assert_eq!(v["L"], 6);
    assert_eq!(v["d_m"], 1000);
    assert_eq!(v["seed"], 77);
    assert_eq!(v["entries"][0]["s"], serde_json::Value::Null);
}
