// SPDX-License-Identifier: MIT OR Apache-2.0

//! Accuracy tables and ablation deltas.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BASELINE: &str = "baseline";

/// Per (setting, language) accuracy in percent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyTable {
    /// Settings in first-seen order.
    pub settings: Vec<String>,
    accuracy: BTreeMap<String, Vec<(String, f64)>>,
    pct: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
struct AccuracyRow {
    setting: String,
    language: String,
    accuracy: f64,
    #[serde(default)]
    pct: Option<f64>,
}

impl AccuracyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, setting: &str, language: &str, accuracy: f64) -> Result<()> {
        if !(0.0..=100.0).contains(&accuracy) {
            return Err(Error::InvalidData(format!(
                "accuracy {accuracy} for ({setting}, {language}) outside [0, 100]"
            )));
        }
        if !self.accuracy.contains_key(setting) {
            self.settings.push(setting.to_owned());
        }
        let row = self.accuracy.entry(setting.to_owned()).or_default();
        if row.iter().any(|(l, _)| l == language) {
            return Err(Error::InvalidData(format!("duplicate row ({setting}, {language})")));
        }
        row.push((language.to_owned(), accuracy));
        Ok(())
    }

    /// Records the deactivated-neuron percentage of a setting.
    pub fn set_pct(&mut self, setting: &str, pct: f64) -> Result<()> {
        match self.pct.insert(setting.to_owned(), pct) {
            Some(old) if old != pct => Err(Error::InvalidData(format!(
                "conflicting pct for setting {setting}: {old} vs {pct}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn accuracy(&self, setting: &str, language: &str) -> Option<f64> {
        self.accuracy
            .get(setting)?
            .iter()
            .find(|(l, _)| l == language)
            .map(|(_, a)| *a)
    }

    /// Parses `setting,language,accuracy[,pct]` CSV.
    pub fn from_csv<R: Read>(source: R) -> Result<Self> {
        let mut table = Self::new();
        for row in csv::Reader::from_reader(source).deserialize() {
            let row: AccuracyRow = row?;
            table.insert(&row.setting, &row.language, row.accuracy)?;
            if let Some(p) = row.pct {
                table.set_pct(&row.setting, p)?;
            }
        }
        Ok(table)
    }
}

/// How the relative accuracy change is aggregated across languages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaMode {
    /// `(μ_setting − μ_baseline) / μ_baseline × 100`.
    #[default]
    MacroMean,
    /// Mean over languages of the per-language relative change.
    PerLanguage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaRow {
    pub setting: String,
    pub pct: Option<f64>,
    pub mean_acc: f64,
    pub delta: f64,
}

/// `(pct, μ_acc, Δ_acc)` for every setting, baseline included.
pub fn summarize_deltas(table: &AccuracyTable, mode: DeltaMode) -> Result<Vec<DeltaRow>> {
    let base = table
        .accuracy
        .get(BASELINE)
        .ok_or_else(|| Error::MissingBaseline("*".into()))?;
    let mean = |row: &[(String, f64)]| row.iter().map(|(_, a)| a).sum::<f64>() / row.len() as f64;
    let base_mean = mean(base);
    table
        .settings
        .iter()
        .map(|setting| {
            let row = &table.accuracy[setting];
            let mut base_accs = Vec::with_capacity(row.len());
            for (lang, _) in row {
                base_accs.push(
                    table
                        .accuracy(BASELINE, lang)
                        .ok_or_else(|| Error::MissingBaseline(lang.clone()))?,
                );
            }
            let mean_acc = mean(row);
            let delta = match mode {
                DeltaMode::MacroMean => {
                    if base_mean == 0.0 {
                        return Err(Error::ZeroBaseline("*".into()));
                    }
                    (mean_acc - base_mean) / base_mean * 100.0
                }
                DeltaMode::PerLanguage => {
                    let mut sum = 0.0;
                    for ((lang, acc), b) in row.iter().zip(&base_accs) {
                        if *b == 0.0 {
                            return Err(Error::ZeroBaseline(lang.clone()));
                        }
                        sum += (acc - b) / b * 100.0;
                    }
                    sum / row.len() as f64
                }
            };
            Ok(DeltaRow {
                setting: setting.clone(),
                pct: table.pct.get(setting).copied(),
                mean_acc,
                delta,
            })
        })
        .collect()
}

/// `setting,pct,mean_acc,delta` with two decimals. With both modes, the columns are
/// `delta_macro_mean` and `delta_per_language`.
pub fn write_deltas_csv<W: Write>(
    primary: &[DeltaRow],
    alternate: Option<&[DeltaRow]>,
    sink: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let fmt2 = |v: f64| format!("{v:.2}");
    match alternate {
        None => w.write_record(["setting", "pct", "mean_acc", "delta"])?,
        Some(_) => w.write_record(["setting", "pct", "mean_acc", "delta_macro_mean", "delta_per_language"])?,
    }
    for (k, r) in primary.iter().enumerate() {
        let pct = r.pct.map(fmt2).unwrap_or_default();
        let mut rec = vec![r.setting.clone(), pct, fmt2(r.mean_acc), fmt2(r.delta)];
        if let Some(alt) = alternate {
            rec.push(fmt2(alt[k].delta));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
