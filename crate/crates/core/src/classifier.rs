// SPDX-License-Identifier: MIT OR Apache-2.0

//! Four-way cross-lingual neuron classification.
//!
//! A neuron is activated for a language when its last-token activation is
//! strictly positive. Per (example, layer) every neuron lands in exactly one of:
//! all-shared (active in every language), non-activated (active in none),
//! specific (active in exactly one language, attributed to it) or
//! partial-shared (everything else).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TraceSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NeuronType {
    AllShared,
    PartialShared,
    Specific,
    NonActivated,
}

impl NeuronType {
    pub const ALL: [NeuronType; 4] = [
        NeuronType::AllShared,
        NeuronType::PartialShared,
        NeuronType::Specific,
        NeuronType::NonActivated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NeuronType::AllShared => "all-shared",
            NeuronType::PartialShared => "partial-shared",
            NeuronType::Specific => "specific",
            NeuronType::NonActivated => "non-activated",
        }
    }
}

impl fmt::Display for NeuronType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NeuronType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-shared" | "all" => Ok(NeuronType::AllShared),
            "partial-shared" | "partial" | "part" => Ok(NeuronType::PartialShared),
            "specific" | "spec" => Ok(NeuronType::Specific),
            "non-activated" | "non" | "non-act" => Ok(NeuronType::NonActivated),
            other => Err(Error::UnknownType(other.to_owned())),
        }
    }
}

#[inline]
fn is_active(a: f32) -> bool {
    a > 0.0
}

/// The four disjoint neuron sets of one (example, layer). Indices are ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronPartition {
    pub example: usize,
    pub layer: usize,
    pub d_m: usize,
    pub all_shared: Vec<u32>,
    pub non_activated: Vec<u32>,
    /// Indexed by language position.
    pub specific: Vec<Vec<u32>>,
    pub partial_shared: Vec<u32>,
}

impl NeuronPartition {
    /// Union of all language-specific sets, ascending.
    pub fn specific_union(&self) -> Vec<u32> {
        let mut all: Vec<u32> = self.specific.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    pub fn specific_count(&self) -> usize {
        self.specific.iter().map(Vec::len).sum()
    }

    pub fn count(&self, ty: NeuronType) -> usize {
        match ty {
            NeuronType::AllShared => self.all_shared.len(),
            NeuronType::PartialShared => self.partial_shared.len(),
            NeuronType::Specific => self.specific_count(),
            NeuronType::NonActivated => self.non_activated.len(),
        }
    }

    /// The neurons of a type; for `Specific` the union over languages.
    pub fn neurons(&self, ty: NeuronType) -> Vec<u32> {
        match ty {
            NeuronType::AllShared => self.all_shared.clone(),
            NeuronType::PartialShared => self.partial_shared.clone(),
            NeuronType::Specific => self.specific_union(),
            NeuronType::NonActivated => self.non_activated.clone(),
        }
    }

    /// Per-neuron type labels, length `d_m`.
    pub fn labels(&self) -> Vec<NeuronType> {
        let mut out = vec![NeuronType::PartialShared; self.d_m];
        for &i in &self.all_shared {
            out[i as usize] = NeuronType::AllShared;
        }
        for &i in &self.non_activated {
            out[i as usize] = NeuronType::NonActivated;
        }
        for &i in self.specific.iter().flatten() {
            out[i as usize] = NeuronType::Specific;
        }
        out
    }

    /// Checks disjointness and exhaustiveness.
    pub fn is_valid(&self) -> bool {
        let mut seen = vec![false; self.d_m];
        let sets = [&self.all_shared, &self.non_activated, &self.partial_shared]
            .into_iter()
            .chain(self.specific.iter());
        let mut total = 0;
        for set in sets {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return false;
            }
            for &i in set {
                let i = i as usize;
                if i >= self.d_m || seen[i] {
                    return false;
                }
                seen[i] = true;
                total += 1;
            }
        }
        total == self.d_m
    }
}

/// Classifies one (example, layer) cell from its per-language activation vectors.
///
/// The returned partition has `example` and `layer` set to 0; see [`classify_trace`]
/// for the keyed version.
pub fn classify_layer(acts: &[&[f32]]) -> Result<NeuronPartition> {
    if acts.len() < 2 {
        return Err(Error::TooFewLanguages(acts.len()));
    }
    let d_m = acts[0].len();
    for (p, v) in acts.iter().enumerate() {
        if v.len() != d_m {
            return Err(Error::Ragged {
                language: p,
                expected: d_m,
                found: v.len(),
            });
        }
    }
    let num_langs = acts.len();
    let mut part = NeuronPartition {
        example: 0,
        layer: 0,
        d_m,
        all_shared: Vec::new(),
        non_activated: Vec::new(),
        specific: vec![Vec::new(); num_langs],
        partial_shared: Vec::new(),
    };
    for i in 0..d_m {
        let mut active = 0usize;
        let mut last = 0usize;
        for (p, v) in acts.iter().enumerate() {
            if is_active(v[i]) {
                active += 1;
                last = p;
            }
        }
        let idx = i as u32;
        match active {
            0 => part.non_activated.push(idx),
            1 => part.specific[last].push(idx),
            n if n == num_langs => part.all_shared.push(idx),
            _ => part.partial_shared.push(idx),
        }
    }
    Ok(part)
}

/// Neurons active in every language of `subset` (language positions).
pub fn language_subset_mask(acts: &[&[f32]], subset: &[usize]) -> Result<Vec<u32>> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("language subset must be nonempty".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&p| p >= acts.len()) {
        return Err(Error::UnknownLanguage(format!("#{bad}")));
    }
    let d_m = acts.first().map_or(0, |v| v.len());
    Ok((0..d_m)
        .filter(|&i| subset.iter().all(|&p| is_active(acts[p][i])))
        .map(|i| i as u32)
        .collect())
}

/// [`language_subset_mask`] for a trace cell, with languages given by tag.
pub fn language_subset_mask_tagged(
    trace: &TraceSet,
    s: usize,
    l: usize,
    tags: &[&str],
) -> Result<Vec<u32>> {
    let subset = tags
        .iter()
        .map(|t| trace.header.language_index(t))
        .collect::<Result<Vec<_>>>()?;
    language_subset_mask(&trace.cell(s, l), &subset)
}

/// Partitions for every (example, layer) of a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassificationResult {
    pub task: String,
    pub languages: Vec<String>,
    pub num_examples: usize,
    pub num_layers: usize,
    pub d_m: usize,
    /// Flat `[example][layer]`.
    pub partitions: Vec<NeuronPartition>,
}

impl ClassificationResult {
    pub fn cell(&self, s: usize, l: usize) -> &NeuronPartition {
        &self.partitions[s * self.num_layers + l]
    }

    pub fn language_index(&self, tag: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|t| t == tag)
            .ok_or_else(|| Error::UnknownLanguage(tag.to_owned()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ClassificationJson::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ClassificationJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

/// Classifies every cell of a trace. Cells are evaluated in parallel and assembled by key.
pub fn classify_trace(trace: &TraceSet) -> Result<ClassificationResult> {
    let h = &trace.header;
    let (n_s, n_l) = (h.num_examples, h.num_layers);
    let partitions = (0..n_s * n_l)
        .into_par_iter()
        .map(|k| {
            let (s, l) = (k / n_l, k % n_l);
            let mut part = classify_layer(&trace.cell(s, l))?;
            part.example = s;
            part.layer = l;
            Ok(part)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassificationResult {
        task: h.task.clone(),
        languages: h.languages.clone(),
        num_examples: n_s,
        num_layers: n_l,
        d_m: h.neurons_per_layer,
        partitions,
    })
}

#[derive(Serialize, Deserialize)]
struct CellJson {
    s: usize,
    l: usize,
    all: Vec<u32>,
    non: Vec<u32>,
    spec: BTreeMap<String, Vec<u32>>,
    part: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct ClassificationJson {
    task: String,
    languages: Vec<String>,
    #[serde(rename = "S")]
    num_examples: usize,
    #[serde(rename = "L")]
    num_layers: usize,
    d_m: usize,
    cells: Vec<CellJson>,
}

impl From<&ClassificationResult> for ClassificationJson {
    fn from(r: &ClassificationResult) -> Self {
        let cells = r
            .partitions
            .iter()
            .map(|p| CellJson {
                s: p.example,
                l: p.layer,
                all: p.all_shared.clone(),
                non: p.non_activated.clone(),
                spec: r
                    .languages
                    .iter()
                    .cloned()
                    .zip(p.specific.iter().cloned())
                    .collect(),
                part: p.partial_shared.clone(),
            })
            .collect();
        Self {
            task: r.task.clone(),
            languages: r.languages.clone(),
            num_examples: r.num_examples,
            num_layers: r.num_layers,
            d_m: r.d_m,
            cells,
        }
    }
}

impl TryFrom<ClassificationJson> for ClassificationResult {
    type Error = Error;

    fn try_from(raw: ClassificationJson) -> Result<Self> {
        let n = raw.num_examples * raw.num_layers;
        if raw.cells.len() != n {
            return Err(Error::InvalidData(format!(
                "classification has {} cells, expected {n}",
                raw.cells.len()
            )));
        }
        let mut slots: Vec<Option<NeuronPartition>> = vec![None; n];
        for c in raw.cells {
            if c.s >= raw.num_examples || c.l >= raw.num_layers {
                return Err(Error::InvalidData(format!("cell ({}, {}) out of range", c.s, c.l)));
            }
            let mut specific = vec![Vec::new(); raw.languages.len()];
            for (tag, set) in c.spec {
                let p = raw
                    .languages
                    .iter()
                    .position(|t| *t == tag)
                    .ok_or(Error::UnknownLanguage(tag))?;
                specific[p] = set;
            }
            let part = NeuronPartition {
                example: c.s,
                layer: c.l,
                d_m: raw.d_m,
                all_shared: c.all,
                non_activated: c.non,
                specific,
                partial_shared: c.part,
            };
            if !part.is_valid() {
                return Err(Error::InvalidData(format!(
                    "cell ({}, {}) is not a partition of 0..{}",
                    c.s, c.l, raw.d_m
                )));
            }
            let k = c.s * raw.num_layers + c.l;
            if slots[k].is_some() {
                return Err(Error::InvalidData(format!("duplicate cell ({}, {})", c.s, c.l)));
            }
            slots[k] = Some(part);
        }
        Ok(Self {
            task: raw.task,
            languages: raw.languages,
            num_examples: raw.num_examples,
            num_layers: raw.num_layers,
            d_m: raw.d_m,
            partitions: slots.into_iter().map(|p| p.expect("all cells filled")).collect(),
        })
    }
}
