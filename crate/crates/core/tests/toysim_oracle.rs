// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use common::rng;
use ndarray::{Array1, Array2};
use neurotype::classifier::classify_trace;
use neurotype::intervention::build_random_mask;
use neurotype::toysim::{
    init_model, predicted_answers, run_suite, Activation, OffsetKind, SyntheticInputSpec, ToyConfig, ToyModel,
};
use neurotype::trace::validate;
use rand::Rng;

fn cfg(num_layers: usize, d: usize, d_m: usize, act: Activation, seed: u64) -> ToyConfig {
    ToyConfig { num_layers, d, d_m, vocab: 12, act, seed }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

fn layer_matrices(model: &ToyModel, l: usize) -> (Array2<f64>, Array2<f64>) {
    let c = &model.config;
    let k = Array2::from_shape_fn((c.d_m, c.d), |(i, j)| model.layers[l].keys[i * c.d + j] as f64);
    let v = Array2::from_shape_fn((c.d_m, c.d), |(i, j)| model.layers[l].values[i * c.d + j] as f64);
    (k, v)
}

#[test]
fn sum_form_matches_matrix_form() {
    let model = init_model(&cfg(1, 16, 40, Activation::Gelu, 0), 81).unwrap();
    let (k, v) = layer_matrices(&model, 0);
    let mut r = rng(82);
    for _ in 0..20 {
        let x = Array1::from_shape_fn(16, |_| r.random_range(-1.0..1.0));
        let a = k.dot(&x).mapv(gelu);
        let h = &x + &v.t().dot(&a);
        let got = model.forward(x.as_slice().unwrap(), None).unwrap();
        for (g, w) in got.hidden.iter().zip(h.iter()) {
            assert!((g - w).abs() < 1e-5);
        }
    }
}

#[test]
fn three_layer_recursion_by_hand() {
    for act in [Activation::Gelu, Activation::Relu, Activation::Tanh] {
        let model = init_model(&cfg(3, 8, 20, act, 0), 83).unwrap();
        let f = |x: f64| match act {
            Activation::Gelu => gelu(x),
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        };
        let x0: Vec<f64> = (0..8).map(|j| (j as f64 - 3.5) / 4.0).collect();
        let mut h = Array1::from(x0.clone());
        for l in 0..3 {
            let (k, v) = layer_matrices(&model, l);
            let a = k.dot(&h).mapv(f);
            h = &h + &v.t().dot(&a);
        }
        let got = model.forward(&x0, None).unwrap();
        for (g, w) in got.hidden.iter().zip(h.iter()) {
            assert!((g - w).abs() < 1e-5, "{act:?}");
        }
    }
}

#[test]
fn masking_removes_exactly_the_masked_contributions() {
    let model = init_model(&cfg(1, 12, 64, Activation::Gelu, 0), 84).unwrap();
    let mask = build_random_mask(25.0, 1, 64, 85).unwrap();
    let masked: &[u32] = &mask.entries[0].neurons;
    let mut r = rng(86);
    for _ in 0..20 {
        let x: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let (full, acts) = model.ffn_forward(0, &x, None).unwrap();
        let (cut, cut_acts) = model.ffn_forward(0, &x, Some(masked)).unwrap();
        for i in 0..64u32 {
            if masked.contains(&i) {
                assert_eq!(cut_acts[i as usize], 0.0);
            } else {
                assert_eq!(cut_acts[i as usize], acts[i as usize]);
            }
        }
        for j in 0..12 {
            let removed: f64 = masked.iter().map(|&i| acts[i as usize] as f64 * model.value(0, i as usize)[j] as f64).sum();
            assert!((full[j] - removed - cut[j]).abs() < 1e-5);
        }
    }
}

#[test]
fn parameters_are_uniform_within_bounds() {
    // ~25.8k draws per model, 24 seeds.
    let mut draws = Vec::new();
    for seed in 0..24 {
        let m = init_model(&cfg(2, 16, 400, Activation::Gelu, 0), seed).unwrap();
        for l in &m.layers {
            draws.extend(l.keys.iter().chain(&l.values).copied());
        }
        draws.extend(m.embedding.iter().copied());
    }
    assert!(draws.len() >= 100_000);
    let bound = 1.0 / 4.0f32;
    assert!(draws.iter().all(|x| x.abs() <= bound));
    let mut bins = [0usize; 10];
    for x in &draws {
        let k = (((x + bound) / (2.0 * bound)) * 10.0) as usize;
        bins[k.min(9)] += 1;
    }
    for (k, b) in bins.iter().enumerate() {
        let f = *b as f64 / draws.len() as f64;
        assert!((f - 0.10).abs() <= 0.02, "decile {k}: {f}");
    }
}

#[test]
fn identical_languages_have_no_partial_or_specific() {
    let model = init_model(&cfg(3, 16, 48, Activation::Gelu, 0), 87).unwrap();
    let mut spec = SyntheticInputSpec::new(4, 10, 88);
    spec.offset_scale = 0.0;
    spec.noise_scale = 0.0;
    let res = classify_trace(&run_suite(&model, &spec, None).unwrap()).unwrap();
    for part in &res.partitions {
        assert!(part.partial_shared.is_empty());
        assert_eq!(part.specific_count(), 0);
        assert_eq!(part.all_shared.len() + part.non_activated.len(), 48);
    }
}

#[test]
fn orthogonal_offsets_follow_key_signs() {
    // With no base and no noise, language p's input is 50·e_p, so under relu a
    // first-layer neuron fires for p exactly when its key has k[p] > 0.
    let p_n = 4;
    let model = init_model(&cfg(2, 16, 256, Activation::Relu, 0), 89).unwrap();
    let mut spec = SyntheticInputSpec::new(p_n, 2, 90);
    spec.base_scale = 0.0;
    spec.noise_scale = 0.0;
    spec.offset_scale = 50.0;
    spec.offsets = OffsetKind::Orthogonal;
    let res = classify_trace(&run_suite(&model, &spec, None).unwrap()).unwrap();
    let part = res.cell(0, 0);
    let mut all = Vec::new();
    let mut spec_count = 0;
    for i in 0..256 {
        let pos = (0..p_n).filter(|&p| model.key(0, i)[p] > 0.0).count();
        if pos == p_n {
            all.push(i as u32);
        }
        if pos == 1 {
            spec_count += 1;
        }
    }
    assert_eq!(part.all_shared, all);
    assert_eq!(part.specific_count(), spec_count);
    // 2^-P of neurons expected all-shared
    let frac = all.len() as f64 / 256.0;
    assert!((frac - 1.0 / 16.0).abs() < 0.05, "{frac}");
}

#[test]
fn suite_is_valid_and_deterministic() {
    let model = init_model(&cfg(2, 8, 32, Activation::Gelu, 0), 91).unwrap();
    let spec = SyntheticInputSpec::new(3, 5, 92);
    let a = run_suite(&model, &spec, None).unwrap();
    let b = run_suite(&init_model(&cfg(2, 8, 32, Activation::Gelu, 0), 91).unwrap(), &spec, None).unwrap();
    assert_eq!(a, b);
    let sc = model.to_sidecar(true, true).unwrap();
    assert!(validate(&a, Some(&sc)).is_empty());
    let answers = predicted_answers(&model, &spec).unwrap();
    assert!(answers.violations(Some(&sc)).is_empty());
    let other = run_suite(&model, &SyntheticInputSpec::new(3, 5, 93), None).unwrap();
    assert_ne!(a, other);
}

#[test]
fn suite_mask_zeroes_every_masked_activation() {
    let model = init_model(&cfg(3, 8, 40, Activation::Gelu, 0), 94).unwrap();
    let spec = SyntheticInputSpec::new(2, 4, 95);
    let mask = build_random_mask(30.0, 3, 40, 96).unwrap();
    let t = run_suite(&model, &spec, Some(&mask)).unwrap();
    for s in 0..4 {
        for p in 0..2 {
            for e in &mask.entries {
                for &i in &e.neurons {
                    assert_eq!(t.get(s, p, e.l, i as usize), 0.0);
                }
            }
        }
    }
}

#[test]
fn degenerate_masks_and_weights() {
    let mut model = init_model(&cfg(3, 8, 20, Activation::Relu, 0), 97).unwrap();
    let x0: Vec<f64> = (0..8).map(|j| j as f64 / 8.0 - 0.4).collect();
    let all: Vec<u32> = (0..20).collect();

    let (out, _) = model.ffn_forward(1, &x0, Some(&all)).unwrap();
    assert!(out.iter().all(|v| *v == 0.0));
    let full = [all.as_slice(); 3];
    assert_eq!(model.forward(&x0, Some(&full)).unwrap().hidden, x0);

    let one = model.forward(&x0, None).unwrap();
    let (first, _) = model.ffn_forward(0, &x0, None).unwrap();
    let manual: Vec<f64> = x0.iter().zip(&first).map(|(a, b)| a + b).collect();
    let (second, _) = model.ffn_forward(1, &manual, None).unwrap();
    assert_ne!(one.hidden, manual, "later layers contribute");
    assert!(second.iter().any(|v| *v != 0.0));

    model.layers[0].keys.iter_mut().for_each(|k| *k = 0.0);
    let (out, acts) = model.ffn_forward(0, &x0, None).unwrap();
    assert!(acts.iter().all(|a| *a == 0.0));
    assert!(out.iter().all(|v| *v == 0.0));
    assert!(model.ffn_forward(0, &x0, Some(&[20])).is_err());
}
