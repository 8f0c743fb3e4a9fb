// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation-pattern statistics: per-type percentages per cell and per layer,
//! pairwise sharing among partial-shared neurons and the language breakdown of
//! specific neurons.

use std::io::Write;

use serde::Serialize;

use crate::classifier::{ClassificationResult, NeuronPartition, NeuronType};
use crate::error::{Error, Result};
use crate::trace::TraceSet;

/// Percentage of each neuron type in one layer. The four values sum to 100.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeRatios {
    pub layer: usize,
    pub all_shared: f64,
    pub partial_shared: f64,
    pub specific: f64,
    pub non_activated: f64,
}

impl TypeRatios {
    pub fn get(&self, ty: NeuronType) -> f64 {
        match ty {
            NeuronType::AllShared => self.all_shared,
            NeuronType::PartialShared => self.partial_shared,
            NeuronType::Specific => self.specific,
            NeuronType::NonActivated => self.non_activated,
        }
    }

    fn get_mut(&mut self, ty: NeuronType) -> &mut f64 {
        match ty {
            NeuronType::AllShared => &mut self.all_shared,
            NeuronType::PartialShared => &mut self.partial_shared,
            NeuronType::Specific => &mut self.specific,
            NeuronType::NonActivated => &mut self.non_activated,
        }
    }

    pub fn total(&self) -> f64 {
        self.all_shared + self.partial_shared + self.specific + self.non_activated
    }

    fn zero(layer: usize) -> Self {
        Self {
            layer,
            all_shared: 0.0,
            partial_shared: 0.0,
            specific: 0.0,
            non_activated: 0.0,
        }
    }
}

/// Per-type percentages of one (example, layer) partition.
pub fn type_ratios(partition: &NeuronPartition) -> TypeRatios {
    let d_m = partition.d_m as f64;
    let mut r = TypeRatios::zero(partition.layer);
    for ty in NeuronType::ALL {
        *r.get_mut(ty) = 100.0 * partition.count(ty) as f64 / d_m;
    }
    r
}

/// Mean of the per-example ratios for every layer, summed in ascending example order.
pub fn aggregate_ratios(result: &ClassificationResult) -> Vec<TypeRatios> {
    let n = result.num_examples as f64;
    (0..result.num_layers)
        .map(|l| {
            let mut acc = TypeRatios::zero(l);
            for s in 0..result.num_examples {
                let r = type_ratios(result.cell(s, l));
                for ty in NeuronType::ALL {
                    *acc.get_mut(ty) += r.get(ty);
                }
            }
            for ty in NeuronType::ALL {
                *acc.get_mut(ty) /= n;
            }
            acc
        })
        .collect()
}

/// Denominator of the pairwise sharing ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SharingDenominator {
    /// Partial-shared neurons active in the anchor language.
    #[default]
    AnchorActive,
    /// All partial-shared neurons.
    AllPartial,
}

impl SharingDenominator {
    pub fn as_str(self) -> &'static str {
        match self {
            SharingDenominator::AnchorActive => "anchor-active",
            SharingDenominator::AllPartial => "all-partial",
        }
    }
}

/// Per-layer share of partial-shared neurons that are active in both `anchor` and `other`.
///
/// Each (example, layer) cell with an empty denominator is skipped; a layer with no
/// contributing cell is `None`.
pub fn pairwise_shared_ratio(
    trace: &TraceSet,
    result: &ClassificationResult,
    anchor: &str,
    other: &str,
    mode: SharingDenominator,
) -> Result<Vec<Option<f64>>> {
    let a = trace.header.language_index(anchor)?;
    let o = trace.header.language_index(other)?;
    if a == o {
        return Err(Error::InvalidArgument(format!(
            "anchor and other language are both {anchor:?}"
        )));
    }
    check_alignment(trace, result)?;
    let out = (0..result.num_layers)
        .map(|l| {
            let mut sum = 0.0;
            let mut cells = 0usize;
            for s in 0..result.num_examples {
                let va = trace.vector(s, a, l);
                let vo = trace.vector(s, o, l);
                let part = &result.cell(s, l).partial_shared;
                let anchor_active = part.iter().filter(|&&i| va[i as usize] > 0.0);
                let both = anchor_active.clone().filter(|&&i| vo[i as usize] > 0.0).count();
                let denom = match mode {
                    SharingDenominator::AnchorActive => anchor_active.count(),
                    SharingDenominator::AllPartial => part.len(),
                };
                if denom > 0 {
                    sum += both as f64 / denom as f64;
                    cells += 1;
                }
            }
            (cells > 0).then(|| sum / cells as f64)
        })
        .collect();
    Ok(out)
}

fn check_alignment(trace: &TraceSet, result: &ClassificationResult) -> Result<()> {
    let h = &trace.header;
    if h.num_examples != result.num_examples
        || h.num_layers != result.num_layers
        || h.neurons_per_layer != result.d_m
        || h.languages != result.languages
    {
        return Err(Error::DimensionMismatch(
            "classification does not belong to this trace".into(),
        ));
    }
    Ok(())
}

/// Share (in percent) of each language among specific neurons.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecificShares {
    pub languages: Vec<String>,
    /// `None` when there are no specific neurons at all.
    pub overall: Option<Vec<f64>>,
    pub per_layer: Vec<Option<Vec<f64>>>,
}

pub fn specific_share_by_language(result: &ClassificationResult) -> SpecificShares {
    let n_p = result.languages.len();
    let shares = |counts: &[usize]| -> Option<Vec<f64>> {
        let total: usize = counts.iter().sum();
        (total > 0).then(|| {
            counts
                .iter()
                .map(|&c| 100.0 * c as f64 / total as f64)
                .collect()
        })
    };
    let mut overall = vec![0usize; n_p];
    let per_layer = (0..result.num_layers)
        .map(|l| {
            let mut counts = vec![0usize; n_p];
            for s in 0..result.num_examples {
                for (c, set) in counts.iter_mut().zip(&result.cell(s, l).specific) {
                    *c += set.len();
                }
            }
            for (o, c) in overall.iter_mut().zip(&counts) {
                *o += c;
            }
            shares(&counts)
        })
        .collect();
    SpecificShares {
        languages: result.languages.clone(),
        overall: shares(&overall),
        per_layer,
    }
}

/// Sharing of one anchor language with every other language, plus specific shares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharingReport {
    pub anchor: String,
    pub denominator: &'static str,
    /// `(other language, per-layer ratio)`.
    pub pairs: Vec<(String, Vec<Option<f64>>)>,
    pub specific: SpecificShares,
}

pub fn sharing_report(
    trace: &TraceSet,
    result: &ClassificationResult,
    anchor: &str,
    mode: SharingDenominator,
) -> Result<SharingReport> {
    trace.header.language_index(anchor)?;
    let pairs = trace
        .header
        .languages
        .iter()
        .filter(|t| *t != anchor)
        .map(|other| Ok((other.clone(), pairwise_shared_ratio(trace, result, anchor, other, mode)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SharingReport {
        anchor: anchor.to_owned(),
        denominator: mode.as_str(),
        pairs,
        specific: specific_share_by_language(result),
    })
}

pub(crate) fn fmt4(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "undefined".to_owned(),
    }
}

/// `task,layer,type,ratio` rows, percentages with four decimals.
pub fn write_ratios_csv<W: Write>(task: &str, ratios: &[TypeRatios], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["task", "layer", "type", "ratio"])?;
    for r in ratios {
        for ty in NeuronType::ALL {
            w.write_record([
                task,
                &r.layer.to_string(),
                ty.as_str(),
                &fmt4(Some(r.get(ty))),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `task,layer,anchor,other,ratio` rows.
pub fn write_sharing_csv<W: Write>(task: &str, report: &SharingReport, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["task", "layer", "anchor", "other", "ratio"])?;
    let layers = report.pairs.first().map_or(0, |(_, v)| v.len());
    for l in 0..layers {
        for (other, ratios) in &report.pairs {
            w.write_record([
                task,
                &l.to_string(),
                &report.anchor,
                other,
                &fmt4(ratios[l]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
