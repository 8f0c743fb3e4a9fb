// SPDX-License-Identifier: MIT OR Apache-2.0

//! Neuron impact scores.
//!
//! - Generation impact: a neuron's share of the layer's total `|A_i|·‖v_i‖` weight.
//! - Correctness impact: `E_r · (A_i v_i)`, the neuron's contribution to the
//!   correct answer's logit.
//! - Vocabulary projection: `E_w · (A_i v_i)` for every token `w`, which ranks
//!   the vocabulary by how much the neuron pushes each token up.

use std::io::Write;

use serde::Serialize;

use crate::classifier::{ClassificationResult, NeuronType};
use crate::error::{Error, Result};
use crate::trace::{AnswerMode, AnswerSet, ModelSidecar, TraceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ImpactKind {
    Gis,
    Cis,
}

/// Generation impact of every neuron in one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GisVector {
    pub values: Vec<f64>,
    /// Set when every neuron has zero weight; `values` are then all zero.
    pub degenerate: bool,
}

pub fn generation_impact(acts: &[f32], norms: &[f32]) -> Result<GisVector> {
    if acts.len() != norms.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} activations vs {} value norms",
            acts.len(),
            norms.len()
        )));
    }
    if let Some(n) = norms.iter().find(|n| n.is_nan() || **n < 0.0) {
        return Err(Error::InvalidArgument(format!("value norm {n} is negative or NaN")));
    }
    let weights: Vec<f64> = acts
        .iter()
        .zip(norms)
        .map(|(a, n)| f64::from(a.abs()) * f64::from(*n))
        .collect();
    let total: f64 = weights.iter().sum();
    if total > 0.0 && total.is_finite() {
        Ok(GisVector {
            values: weights.into_iter().map(|w| w / total).collect(),
            degenerate: false,
        })
    } else {
        Ok(GisVector {
            values: vec![0.0; acts.len()],
            degenerate: true,
        })
    }
}

/// `CIS_i = (E_r · v_i) · A_i`. `values` is the layer's `[neuron][d]` value matrix.
pub fn correctness_impact(acts: &[f32], values: &[f32], answer: &[f64]) -> Result<Vec<f64>> {
    let d = answer.len();
    if d == 0 || values.len() != acts.len() * d {
        return Err(Error::DimensionMismatch(format!(
            "value matrix has {} entries, expected {} neurons x d {}",
            values.len(),
            acts.len(),
            d
        )));
    }
    Ok(acts
        .iter()
        .zip(values.chunks_exact(d))
        .map(|(a, v)| {
            let dot: f64 = v.iter().zip(answer).map(|(x, e)| f64::from(*x) * e).sum();
            dot * f64::from(*a)
        })
        .collect())
}

/// Impact scores of one (example, layer) for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactVector {
    pub example: usize,
    pub layer: usize,
    pub language: usize,
    pub kind: ImpactKind,
    pub values: Vec<f64>,
}

/// CIS vectors for every (example, layer) of one language.
pub fn cis_for_language(
    trace: &TraceSet,
    sidecar: &ModelSidecar,
    answers: &AnswerSet,
    language: usize,
    mode: AnswerMode,
) -> Result<Vec<ImpactVector>> {
    let h = &trace.header;
    if sidecar.num_layers != h.num_layers || sidecar.d_m != h.neurons_per_layer {
        return Err(Error::DimensionMismatch("sidecar does not match trace".into()));
    }
    if answers.num_examples != h.num_examples || answers.num_languages != h.num_languages() {
        return Err(Error::DimensionMismatch("answer set does not match trace".into()));
    }
    if answers.d != sidecar.d {
        return Err(Error::DimensionMismatch(format!(
            "answer d {} vs sidecar d {}",
            answers.d, sidecar.d
        )));
    }
    if language >= h.num_languages() {
        return Err(Error::UnknownLanguage(format!("#{language}")));
    }
    sidecar.layer_values(0)?;
    let mut out = Vec::with_capacity(h.num_examples * h.num_layers);
    for s in 0..h.num_examples {
        let e_r = answers.resolve(s, language, Some(sidecar), mode)?;
        for l in 0..h.num_layers {
            out.push(ImpactVector {
                example: s,
                layer: l,
                language,
                kind: ImpactKind::Cis,
                values: correctness_impact(trace.vector(s, language, l), sidecar.layer_values(l)?, &e_r)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceMode {
    #[default]
    Population,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub max: f64,
    pub min: f64,
    pub mean: f64,
    pub var: f64,
    pub count: usize,
}

/// Streaming max/min/mean/variance.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
    max: f64,
    min: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        if self.n == 0 {
            self.max = x;
            self.min = x;
        } else {
            self.max = self.max.max(x);
            self.min = self.min.min(x);
        }
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn finish(self, mode: VarianceMode) -> Option<Stats> {
        if self.n == 0 {
            return None;
        }
        // single-value sample variance is reported as 0
        let denom = match mode {
            VarianceMode::Population => self.n,
            VarianceMode::Sample => (self.n - 1).max(1),
        };
        let var = (self.m2 / denom as f64).max(0.0);
        Some(Stats {
            max: self.max,
            min: self.min,
            // guards min <= mean <= max against rounding
            mean: self.mean.clamp(self.min, self.max),
            var,
            count: self.n,
        })
    }
}

/// Statistics of a plain list of values; `None` for an empty list.
pub fn summarize(values: &[f64], mode: VarianceMode) -> Option<Stats> {
    let mut w = Welford::default();
    values.iter().for_each(|v| w.push(*v));
    w.finish(mode)
}

/// CIS statistics per neuron type. `None` marks an empty (undefined) bucket.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CisSummary {
    pub all_shared: Option<Stats>,
    pub partial_shared: Option<Stats>,
    pub specific: Option<Stats>,
    pub non_activated: Option<Stats>,
}

impl CisSummary {
    pub fn get(&self, ty: NeuronType) -> Option<Stats> {
        match ty {
            NeuronType::AllShared => self.all_shared,
            NeuronType::PartialShared => self.partial_shared,
            NeuronType::Specific => self.specific,
            NeuronType::NonActivated => self.non_activated,
        }
    }
}

/// Pools CIS values by the neuron type of their cell and summarizes each pool.
pub fn cis_summary(
    cis: &[ImpactVector],
    partitions: &ClassificationResult,
    mode: VarianceMode,
) -> Result<CisSummary> {
    let mut acc = [Welford::default(); 4];
    for v in cis {
        if v.example >= partitions.num_examples || v.layer >= partitions.num_layers {
            return Err(Error::DimensionMismatch(format!(
                "impact cell ({}, {}) outside classification",
                v.example, v.layer
            )));
        }
        let part = partitions.cell(v.example, v.layer);
        if v.values.len() != part.d_m {
            return Err(Error::DimensionMismatch(format!(
                "impact vector has {} values, partition d_m {}",
                v.values.len(),
                part.d_m
            )));
        }
        for (x, ty) in v.values.iter().zip(part.labels()) {
            acc[type_slot(ty)].push(*x);
        }
    }
    Ok(CisSummary {
        all_shared: acc[0].finish(mode),
        partial_shared: acc[1].finish(mode),
        specific: acc[2].finish(mode),
        non_activated: acc[3].finish(mode),
    })
}

fn type_slot(ty: NeuronType) -> usize {
    match ty {
        NeuronType::AllShared => 0,
        NeuronType::PartialShared => 1,
        NeuronType::Specific => 2,
        NeuronType::NonActivated => 3,
    }
}

/// Mean GIS per type and layer for one language.
///
/// Per (example, layer) the GIS is averaged over the type's neurons, then those
/// means are averaged over the examples where the type is nonempty.
pub fn gis_type_curves(
    trace: &TraceSet,
    sidecar: &ModelSidecar,
    result: &ClassificationResult,
    language: usize,
) -> Result<Vec<[Option<f64>; 4]>> {
    let h = &trace.header;
    if sidecar.num_layers != h.num_layers || sidecar.d_m != h.neurons_per_layer {
        return Err(Error::DimensionMismatch("sidecar does not match trace".into()));
    }
    if result.num_examples != h.num_examples || result.num_layers != h.num_layers {
        return Err(Error::DimensionMismatch("classification does not match trace".into()));
    }
    if language >= h.num_languages() {
        return Err(Error::UnknownLanguage(format!("#{language}")));
    }
    (0..h.num_layers)
        .map(|l| {
            let mut sums = [0.0f64; 4];
            let mut cells = [0usize; 4];
            for s in 0..h.num_examples {
                let gis = generation_impact(trace.vector(s, language, l), sidecar.layer_norms(l))?;
                let mut type_sum = [0.0f64; 4];
                let mut type_n = [0usize; 4];
                for (g, ty) in gis.values.iter().zip(result.cell(s, l).labels()) {
                    type_sum[type_slot(ty)] += g;
                    type_n[type_slot(ty)] += 1;
                }
                for k in 0..4 {
                    if type_n[k] > 0 {
                        sums[k] += type_sum[k] / type_n[k] as f64;
                        cells[k] += 1;
                    }
                }
            }
            Ok(std::array::from_fn(|k| (cells[k] > 0).then(|| sums[k] / cells[k] as f64)))
        })
        .collect()
}

/// `A_i · v_i` as a hidden-size vector.
pub fn neuron_contribution(activation: f32, value: &[f32]) -> Vec<f64> {
    value
        .iter()
        .map(|v| f64::from(*v) * f64::from(activation))
        .collect()
}

/// Scores of every vocabulary token and the induced ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub scores: Vec<f64>,
    /// Token ids by descending score; ties broken by ascending id.
    pub ranking: Vec<u32>,
}

/// Projects a residual contribution onto the `[vocab][d]` embedding.
pub fn vocab_projection(contribution: &[f64], embedding: &[f32]) -> Result<Projection> {
    let d = contribution.len();
    if d == 0 || !embedding.len().is_multiple_of(d) {
        return Err(Error::DimensionMismatch(format!(
            "embedding of {} values is not a multiple of d {d}",
            embedding.len()
        )));
    }
    let scores: Vec<f64> = embedding
        .chunks_exact(d)
        .map(|row| row.iter().zip(contribution).map(|(e, c)| f64::from(*e) * c).sum())
        .collect();
    let mut ranking: Vec<u32> = (0..scores.len() as u32).collect();
    ranking.sort_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    Ok(Projection { scores, ranking })
}

/// `task,layer,type,mean_gis`.
pub fn write_gis_csv<W: Write>(task: &str, curves: &[[Option<f64>; 4]], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["task", "layer", "type", "mean_gis"])?;
    for (l, row) in curves.iter().enumerate() {
        for ty in NeuronType::ALL {
            w.write_record([task, &l.to_string(), ty.as_str(), &fmt6(row[type_slot(ty)])])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `task,language,type,max,min,mean,var`.
pub fn write_cis_csv<W: Write>(task: &str, rows: &[(String, CisSummary)], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["task", "language", "type", "max", "min", "mean", "var"])?;
    for (lang, summary) in rows {
        for ty in NeuronType::ALL {
            let st = summary.get(ty);
            w.write_record([
                task,
                lang,
                ty.as_str(),
                &fmt6(st.map(|s| s.max)),
                &fmt6(st.map(|s| s.min)),
                &fmt6(st.map(|s| s.mean)),
                &fmt6(st.map(|s| s.var)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt6(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "undefined".to_owned(),
    }
}
