// SPDX-License-Identifier: MIT OR Apache-2.0

//! A seeded stack of FFN blocks on a residual stream.
//!
//! Each layer computes `A = Act(W_K x)` and `FFN(x) = Σ_i A_i v_i`, and the
//! residual update is `h = x + FFN(x)`. There is no attention and no token
//! position: every input is a single vector, i.e. the last token. Inputs for
//! pseudo-languages are `base(s) + offset(p) + noise(s, p)`, which gives
//! controllable cross-language sharing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervention::MaskSet;
use crate::trace::{Answer, AnswerSet, ModelSidecar, TraceHeader, TraceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Gelu,
    Relu,
    Tanh,
}

impl Activation {
    /// Every variant maps 0 to 0.
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Gelu => {
                // tanh approximation, as used by BLOOM-family FFNs
                const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
                0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidArgument(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyConfig {
    #[serde(rename = "L")]
    pub num_layers: usize,
    pub d: usize,
    pub d_m: usize,
    pub vocab: usize,
    #[serde(default)]
    pub act: Activation,
    #[serde(default)]
    pub seed: u64,
}

impl ToyConfig {
    pub fn check(&self) -> Result<()> {
        if self.num_layers == 0 || self.d == 0 || self.d_m == 0 || self.vocab == 0 {
            return Err(Error::InvalidArgument(format!(
                "toy model dims must be nonzero (L={}, d={}, d_m={}, vocab={})",
                self.num_layers, self.d, self.d_m, self.vocab
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyLayer {
    /// `[d_m][d]`, row `i` is key `k_i`.
    pub keys: Vec<f32>,
    /// `[d_m][d]`, row `i` is value `v_i`.
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ToyConfig,
    pub layers: Vec<ToyLayer>,
    /// `[vocab][d]`.
    pub embedding: Vec<f32>,
}

/// Builds a model with parameters drawn from uniform(-1/√d, 1/√d) under `seed`.
pub fn init_model(config: &ToyConfig, seed: u64) -> Result<ToyModel> {
    config.check()?;
    let config = ToyConfig { seed, ..*config };
    let (d, d_m) = (config.d, config.d_m);
    let a = 1.0 / (d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f32> {
        (0..n).map(|_| rng.random_range(-a..a) as f32).collect()
    };
    let layers = (0..config.num_layers)
        .map(|_| ToyLayer {
            keys: draw(d_m * d),
            values: draw(d_m * d),
        })
        .collect();
    let embedding = draw(config.vocab * d);
    Ok(ToyModel {
        config,
        layers,
        embedding,
    })
}

/// Result of a full forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub hidden: Vec<f64>,
    /// Per-layer activations `A^l` (masked entries are 0).
    pub activations: Vec<Vec<f32>>,
}

impl ToyModel {
    pub fn init(config: &ToyConfig) -> Result<Self> {
        init_model(config, config.seed)
    }

    pub fn key(&self, l: usize, i: usize) -> &[f32] {
        let d = self.config.d;
        &self.layers[l].keys[i * d..(i + 1) * d]
    }

    pub fn value(&self, l: usize, i: usize) -> &[f32] {
        let d = self.config.d;
        &self.layers[l].values[i * d..(i + 1) * d]
    }

    /// One FFN block. Masked neurons have their activation forced to 0 before the value sum.
    ///
    /// Returns `(Σ_i A_i v_i, A)`. Activations are rounded to `f32` first so the output
    /// is exactly reproducible from a recorded trace.
    pub fn ffn_forward(&self, l: usize, x: &[f64], mask: Option<&[u32]>) -> Result<(Vec<f64>, Vec<f32>)> {
        let (d, d_m) = (self.config.d, self.config.d_m);
        if x.len() != d {
            return Err(Error::DimensionMismatch(format!("input has {} values, d = {d}", x.len())));
        }
        if l >= self.config.num_layers {
            return Err(Error::InvalidArgument(format!("layer {l} out of range")));
        }
        let act = self.config.act;
        let mut acts: Vec<f32> = (0..d_m)
            .map(|i| {
                let pre: f64 = self.key(l, i).iter().zip(x).map(|(k, v)| f64::from(*k) * v).sum();
                act.apply(pre) as f32
            })
            .collect();
        if let Some(mask) = mask {
            for &i in mask {
                let slot = acts.get_mut(i as usize).ok_or(Error::IndexOutOfRange {
                    index: u64::from(i),
                    layer: l,
                    d_m,
                })?;
                *slot = 0.0;
            }
        }
        let mut out = vec![0.0f64; d];
        for (i, a) in acts.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            let a = f64::from(*a);
            for (o, v) in out.iter_mut().zip(self.value(l, i)) {
                *o += a * f64::from(*v);
            }
        }
        Ok((out, acts))
    }

    /// Residual recursion `h = x + FFN(x)` through every layer.
    pub fn forward(&self, x0: &[f64], masks: Option<&[&[u32]]>) -> Result<ForwardPass> {
        if let Some(m) = masks {
            if m.len() != self.config.num_layers {
                return Err(Error::DimensionMismatch(format!(
                    "mask covers {} layers, model has {}",
                    m.len(),
                    self.config.num_layers
                )));
            }
        }
        let mut h = x0.to_vec();
        let mut activations = Vec::with_capacity(self.config.num_layers);
        for l in 0..self.config.num_layers {
            let (out, acts) = self.ffn_forward(l, &h, masks.map(|m| m[l]))?;
            for (hv, o) in h.iter_mut().zip(&out) {
                *hv += o;
            }
            activations.push(acts);
        }
        Ok(ForwardPass {
            hidden: h,
            activations,
        })
    }

    /// `E h` over the vocabulary.
    pub fn logits(&self, hidden: &[f64]) -> Vec<f64> {
        self.embedding
            .chunks_exact(self.config.d)
            .map(|row| row.iter().zip(hidden).map(|(e, h)| f64::from(*e) * h).sum())
            .collect()
    }

    /// Highest-logit token, ties to the lower id.
    pub fn predict(&self, hidden: &[f64]) -> u32 {
        let logits = self.logits(hidden);
        let mut best = 0usize;
        for (w, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = w;
            }
        }
        best as u32
    }

    /// Exports value vectors (and optionally the embedding) as a sidecar.
    pub fn to_sidecar(&self, include_values: bool, include_embedding: bool) -> Result<ModelSidecar> {
        let c = &self.config;
        let values: Vec<f32> = self.layers.iter().flat_map(|l| l.values.iter().copied()).collect();
        let embedding = include_embedding.then(|| self.embedding.clone());
        let mut sc = ModelSidecar::from_values(c.num_layers, c.d_m, c.d, values, embedding)?;
        if !include_values {
            sc.value_matrix = None;
        }
        Ok(sc)
    }
}

/// How language offsets are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetKind {
    /// Seeded uniform(-1, 1) vectors.
    #[default]
    Random,
    /// Standard basis vectors `e_p`; needs `P <= d`.
    Orthogonal,
}

/// Synthetic multilingual inputs: `base_scale·b_s + offset_scale·o_p + noise_scale·n_{s,p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInputSpec {
    pub languages: Vec<String>,
    pub num_examples: usize,
    #[serde(default = "one")]
    pub base_scale: f64,
    #[serde(default = "half")]
    pub offset_scale: f64,
    #[serde(default = "tenth")]
    pub noise_scale: f64,
    #[serde(default)]
    pub offsets: OffsetKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub task: String,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn tenth() -> f64 {
    0.1
}

impl SyntheticInputSpec {
    /// `P` pseudo-languages tagged `l0`, `l1`, ... with default scales.
    pub fn new(num_languages: usize, num_examples: usize, seed: u64) -> Self {
        Self {
            languages: (0..num_languages).map(|p| format!("l{p}")).collect(),
            num_examples,
            base_scale: one(),
            offset_scale: half(),
            noise_scale: tenth(),
            offsets: OffsetKind::Random,
            seed,
            task: "synthetic".into(),
        }
    }

    /// Inputs indexed `[example][language]`, flattened.
    pub fn generate(&self, d: usize) -> Result<Vec<Vec<f64>>> {
        let n_p = self.languages.len();
        if n_p < 2 || self.num_examples == 0 || d == 0 {
            return Err(Error::InvalidArgument(
                "synthetic inputs need P >= 2, S >= 1 and d >= 1".into(),
            ));
        }
        for v in [self.base_scale, self.offset_scale, self.noise_scale] {
            if !v.is_finite() {
                return Err(Error::InvalidArgument("input scales must be finite".into()));
            }
        }
        if self.offsets == OffsetKind::Orthogonal && n_p > d {
            return Err(Error::InvalidArgument(format!(
                "orthogonal offsets need P <= d ({n_p} > {d})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut unit = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let offsets: Vec<Vec<f64>> = match self.offsets {
            OffsetKind::Random => (0..n_p).map(|_| unit(d)).collect(),
            OffsetKind::Orthogonal => (0..n_p)
                .map(|p| (0..d).map(|j| if j == p { 1.0 } else { 0.0 }).collect())
                .collect(),
        };
        let mut inputs = Vec::with_capacity(self.num_examples * n_p);
        for _ in 0..self.num_examples {
            let base = unit(d);
            for offset in &offsets {
                let noise = unit(d);
                inputs.push(
                    (0..d)
                        .map(|j| {
                            self.base_scale * base[j] + self.offset_scale * offset[j] + self.noise_scale * noise[j]
                        })
                        .collect(),
                );
            }
        }
        Ok(inputs)
    }
}

/// Runs every (example, language) input through the model and records last-token activations.
pub fn run_suite(model: &ToyModel, spec: &SyntheticInputSpec, mask: Option<&MaskSet>) -> Result<TraceSet> {
    let c = &model.config;
    if let Some(m) = mask {
        if m.num_layers != c.num_layers || m.d_m != c.d_m {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, model is {}x{}",
                m.num_layers, m.d_m, c.num_layers, c.d_m
            )));
        }
    }
    let inputs = spec.generate(c.d)?;
    let n_p = spec.languages.len();
    let passes = inputs
        .par_iter()
        .enumerate()
        .map(|(k, x)| {
            let masks = mask.map(|m| m.layers_for(k / n_p)).transpose()?;
            model.forward(x, masks.as_deref())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut activations = Vec::with_capacity(inputs.len() * c.num_layers * c.d_m);
    for pass in &passes {
        for layer in &pass.activations {
            activations.extend_from_slice(layer);
        }
    }
    TraceSet::new(
        TraceHeader {
            num_layers: c.num_layers,
            neurons_per_layer: c.d_m,
            languages: spec.languages.clone(),
            num_examples: spec.num_examples,
            task: spec.task.clone(),
        },
        activations,
    )
}

/// The model's own unmasked prediction for every input, as single-token answers.
pub fn predicted_answers(model: &ToyModel, spec: &SyntheticInputSpec) -> Result<AnswerSet> {
    let inputs = spec.generate(model.config.d)?;
    let answers = inputs
        .iter()
        .map(|x| Ok(Answer::Tokens(vec![model.predict(&model.forward(x, None)?.hidden)])))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnswerSet {
        num_examples: spec.num_examples,
        num_languages: spec.languages.len(),
        d: model.config.d,
        answers,
    })
}
