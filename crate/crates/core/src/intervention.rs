// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deactivation masks.
//!
//! A mask lists, per layer (and per example for the per-example scope), the
//! neurons whose activation is forced to zero. Masks are selected from the
//! last-token classification but apply to every token position downstream;
//! that policy is recorded in the `positions` field of the JSON.

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassificationResult, NeuronType};
use crate::error::{Error, Result};
use crate::fsutil;

pub const MASK_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MaskScope {
    #[default]
    #[serde(rename = "per-example")]
    PerExample,
    #[serde(rename = "union")]
    Union,
    #[serde(rename = "intersection")]
    Intersection,
}

impl MaskScope {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskScope::PerExample => "per-example",
            MaskScope::Union => "union",
            MaskScope::Intersection => "intersection",
        }
    }
}

impl std::str::FromStr for MaskScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-example" => Ok(MaskScope::PerExample),
            "union" => Ok(MaskScope::Union),
            "intersection" => Ok(MaskScope::Intersection),
            other => Err(Error::InvalidArgument(format!("unknown mask scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskEntry {
    /// Example index; `None` for corpus-level scopes.
    pub s: Option<usize>,
    pub l: usize,
    pub neurons: Vec<u32>,
}

fn default_positions() -> String {
    "all".to_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSet {
    pub version: u32,
    pub scope: MaskScope,
    pub d_m: usize,
    #[serde(rename = "L")]
    pub num_layers: usize,
    pub seed: Option<u64>,
    /// How the neurons were chosen, e.g. `typed:all-shared` or `random:25`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<String>,
    /// Token positions the mask applies to.
    #[serde(default = "default_positions")]
    pub positions: String,
    pub entries: Vec<MaskEntry>,
}

impl MaskSet {
    /// Per-layer neuron lists to apply when running example `s`.
    pub fn layers_for(&self, s: usize) -> Result<Vec<&[u32]>> {
        let mut out: Vec<&[u32]> = vec![&[]; self.num_layers];
        let mut found = false;
        for e in &self.entries {
            let applies = match self.scope {
                MaskScope::PerExample => e.s == Some(s),
                _ => true,
            };
            if applies {
                out[e.l] = &e.neurons;
                found = true;
            }
        }
        if !found && self.scope == MaskScope::PerExample && !self.entries.is_empty() {
            return Err(Error::InvalidArgument(format!("mask has no entries for example {s}")));
        }
        Ok(out)
    }

    /// Checks ranges, uniqueness and scope consistency; sorts and deduplicates neuron lists.
    pub fn normalize(mut self) -> Result<Self> {
        if self.version != MASK_VERSION {
            return Err(Error::VersionMismatch {
                expected: MASK_VERSION,
                found: self.version,
            });
        }
        if self.d_m == 0 || self.num_layers == 0 {
            return Err(Error::InvalidData("mask d_m and L must be at least 1".into()));
        }
        let mut keys = BTreeSet::new();
        for e in &mut self.entries {
            if e.l >= self.num_layers {
                return Err(Error::InvalidData(format!(
                    "mask layer {} out of range (L = {})",
                    e.l, self.num_layers
                )));
            }
            match (self.scope, e.s) {
                (MaskScope::PerExample, None) => {
                    return Err(Error::InvalidData("per-example mask entry without s".into()))
                }
                (MaskScope::Union | MaskScope::Intersection, Some(_)) => {
                    return Err(Error::InvalidData("corpus mask entry with s".into()))
                }
                _ => {}
            }
            if !keys.insert((e.s, e.l)) {
                return Err(Error::InvalidData(format!("duplicate mask entry (s={:?}, l={})", e.s, e.l)));
            }
            if let Some(&bad) = e.neurons.iter().find(|&&i| i as usize >= self.d_m) {
                return Err(Error::IndexOutOfRange {
                    index: u64::from(bad),
                    layer: e.l,
                    d_m: self.d_m,
                });
            }
            e.neurons.sort_unstable();
            e.neurons.dedup();
        }
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<MaskSet>(text)?.normalize()
    }
}

pub fn write_mask(mask: &MaskSet, path: &Path) -> Result<()> {
    let text = mask.clone().normalize()?.to_json()?;
    fsutil::write_atomic(path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn read_mask(path: &Path) -> Result<MaskSet> {
    MaskSet::from_json(&std::fs::read_to_string(path)?)
}

/// Selects the neurons of one type from every (example, layer) partition.
///
/// `language` restricts a specific-neuron mask to one language's specific set.
pub fn build_typed_mask(
    result: &ClassificationResult,
    ty: NeuronType,
    language: Option<&str>,
    scope: MaskScope,
) -> Result<MaskSet> {
    let lang = match language {
        Some(tag) if ty == NeuronType::Specific => Some(result.language_index(tag)?),
        Some(tag) => {
            return Err(Error::InvalidArgument(format!(
                "language {tag:?} only applies to specific-neuron masks, not {ty}"
            )))
        }
        None => None,
    };
    let select = |s: usize, l: usize| -> Vec<u32> {
        let part = result.cell(s, l);
        match lang {
            Some(p) => part.specific[p].clone(),
            None => part.neurons(ty),
        }
    };
    let entries = match scope {
        MaskScope::PerExample => (0..result.num_examples)
            .flat_map(|s| (0..result.num_layers).map(move |l| (s, l)))
            .map(|(s, l)| MaskEntry {
                s: Some(s),
                l,
                neurons: select(s, l),
            })
            .collect(),
        MaskScope::Union | MaskScope::Intersection => (0..result.num_layers)
            .map(|l| {
                let mut acc: BTreeSet<u32> = select(0, l).into_iter().collect();
                for s in 1..result.num_examples {
                    let next: BTreeSet<u32> = select(s, l).into_iter().collect();
                    acc = if scope == MaskScope::Union {
                        acc.union(&next).copied().collect()
                    } else {
                        acc.intersection(&next).copied().collect()
                    };
                }
                MaskEntry {
                    s: None,
                    l,
                    neurons: acc.into_iter().collect(),
                }
            })
            .collect(),
    };
    let selection = match language {
        Some(tag) => format!("typed:{ty}:{tag}"),
        None => format!("typed:{ty}"),
    };
    Ok(MaskSet {
        version: MASK_VERSION,
        scope,
        d_m: result.d_m,
        num_layers: result.num_layers,
        seed: None,
        selection: Some(selection),
        positions: default_positions(),
        entries,
    })
}

/// Number of neurons a random mask takes per layer: `pct/100 · d_m`, rounded half away from zero.
pub fn random_mask_count(pct: f64, d_m: usize) -> usize {
    (pct / 100.0 * d_m as f64).round() as usize
}

/// Per layer, draws `random_mask_count(pct, d_m)` distinct neurons uniformly without
/// replacement. Equal seeds give identical masks.
pub fn build_random_mask(pct: f64, num_layers: usize, d_m: usize, seed: u64) -> Result<MaskSet> {
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::InvalidArgument(format!("pct must lie in [0, 100], got {pct}")));
    }
    if num_layers == 0 || d_m == 0 {
        return Err(Error::InvalidArgument("dims must be at least 1x1".into()));
    }
    let k = random_mask_count(pct, d_m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = (0..num_layers)
        .map(|l| {
            let mut neurons: Vec<u32> = rand::seq::index::sample(&mut rng, d_m, k)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            neurons.sort_unstable();
            MaskEntry { s: None, l, neurons }
        })
        .collect();
    Ok(MaskSet {
        version: MASK_VERSION,
        scope: MaskScope::Union,
        d_m,
        num_layers,
        seed: Some(seed),
        selection: Some(format!("random:{pct}")),
        positions: default_positions(),
        entries,
    })
}

/// Percentage of deactivated neurons.
///
/// Per-example masks average `|mask|/d_m` over all (example, layer) entries;
/// corpus masks average over layers.
pub fn mask_pct(mask: &MaskSet, num_layers: usize, d_m: usize) -> Result<f64> {
    if mask.num_layers != num_layers || mask.d_m != d_m {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}x{}, expected {num_layers}x{d_m}",
            mask.num_layers, mask.d_m
        )));
    }
    let cells = match mask.scope {
        MaskScope::PerExample => {
            let examples: BTreeSet<_> = mask.entries.iter().filter_map(|e| e.s).collect();
            examples.len() * num_layers
        }
        _ => num_layers,
    };
    if cells == 0 {
        return Ok(0.0);
    }
    let total: f64 = mask
        .entries
        .iter()
        .map(|e| 100.0 * e.neurons.len() as f64 / d_m as f64)
        .sum();
    Ok(total / cells as f64)
}
