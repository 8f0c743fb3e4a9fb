// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end. Exit codes: 0 success, 1 data error, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::classifier::{classify_trace, ClassificationResult, NeuronType};
use crate::error::Error;
use crate::fsutil::{open_read, write_atomic};
use crate::impact::{self, VarianceMode};
use crate::intervention::{self, MaskScope};
use crate::patterns::{self, SharingDenominator};
use crate::report::{self, AccuracyTable, DeltaMode};
use crate::toysim::{self, OffsetKind, SyntheticInputSpec, ToyConfig, ToyModel};
use crate::trace::{self, AnswerMode, TraceSet};

#[derive(Debug, Parser)]
#[command(name = "neurotype", version, about = "Cross-lingual FFN neuron analysis over activation traces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output path; written atomically.
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for any randomized step.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify every neuron of every (example, layer) into the four types.
    Classify {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Per-layer type percentages and cross-language sharing.
    Patterns {
        #[arg(long)]
        trace: PathBuf,
        /// Anchor language for pairwise sharing.
        #[arg(long)]
        anchor: Option<String>,
        #[arg(long, value_enum, default_value = "anchor-active")]
        denominator: Denominator,
        /// Where to write the sharing CSV (CSV format only).
        #[arg(long)]
        sharing_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generation and correctness impact scores.
    Impact {
        #[command(subcommand)]
        kind: ImpactCommand,
    },
    /// Build deactivation masks.
    Mask {
        #[command(subcommand)]
        kind: MaskCommand,
    },
    /// Toy FFN simulator.
    Sim {
        #[command(subcommand)]
        kind: SimCommand,
    },
    /// Accuracy summaries.
    Report {
        #[command(subcommand)]
        kind: ReportCommand,
    },
    /// Check a trace (and optional sidecar/answers) for invariant violations.
    Validate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
        #[arg(long)]
        answers: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Denominator {
    AnchorActive,
    AllPartial,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CliAnswerMode {
    FirstToken,
    MeanOfTokens,
}

#[derive(Debug, Subcommand)]
pub enum ImpactCommand {
    /// Mean generation impact per layer and type for one language.
    Gis {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        sidecar: PathBuf,
        /// Language tag; defaults to the first language of the trace.
        #[arg(long)]
        language: Option<String>,
        #[arg(long)]
        classification: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Correctness impact statistics per language and type.
    Cis {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        sidecar: PathBuf,
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        classification: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "first-token")]
        answer_mode: CliAnswerMode,
        #[arg(long)]
        sample_variance: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Subcommand)]
pub enum MaskCommand {
    /// Mask one neuron type taken from a classification.
    Typed {
        #[arg(long, conflicts_with = "trace")]
        classification: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// all-shared | partial-shared | specific | non-activated
        #[arg(long = "type")]
        neuron_type: String,
        /// Restrict a specific-neuron mask to one language.
        #[arg(long)]
        language: Option<String>,
        #[arg(long, default_value = "per-example")]
        scope: String,
        #[command(flatten)]
        common: Common,
    },
    /// Uniformly random neurons per layer.
    Random {
        #[arg(long)]
        pct: f64,
        /// `LxD_M`, e.g. `4x64`.
        #[arg(long)]
        dims: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run synthetic multilingual inputs through a toy model and write an MNTR trace.
    Run {
        /// Model config JSON: {"L","d","d_m","vocab","act","seed"}.
        #[arg(long)]
        config: PathBuf,
        /// Input spec JSON; otherwise built from the flags below.
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "en,de")]
        languages: Vec<String>,
        #[arg(long, default_value_t = 8)]
        examples: usize,
        #[arg(long, default_value_t = 1.0)]
        base_scale: f64,
        #[arg(long, default_value_t = 0.5)]
        offset_scale: f64,
        #[arg(long, default_value_t = 0.1)]
        noise_scale: f64,
        #[arg(long)]
        orthogonal_offsets: bool,
        #[arg(long, default_value = "synthetic")]
        task: String,
        /// Mask JSON applied during the run.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        sidecar_out: Option<PathBuf>,
        /// Writes the model's own predictions as MNAN answers.
        #[arg(long)]
        answers_out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Macro-average accuracy and relative change per setting.
    Deltas {
        /// CSV with columns setting,language,accuracy[,pct].
        #[arg(long)]
        accuracy: PathBuf,
        #[arg(long, value_enum, default_value = "macro-mean")]
        mode: CliDeltaMode,
        /// Emit both delta modes.
        #[arg(long)]
        both: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CliDeltaMode {
    MacroMean,
    PerLanguage,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Classify { trace, common } => cmd_classify(&trace, &common),
        Command::Patterns {
            trace,
            anchor,
            denominator,
            sharing_out,
            common,
        } => cmd_patterns(&trace, anchor.as_deref(), denominator, sharing_out.as_deref(), &common),
        Command::Impact { kind } => match kind {
            ImpactCommand::Gis {
                trace,
                sidecar,
                language,
                classification,
                common,
            } => cmd_gis(&trace, &sidecar, language.as_deref(), classification.as_deref(), &common),
            ImpactCommand::Cis {
                trace,
                sidecar,
                answers,
                classification,
                answer_mode,
                sample_variance,
                common,
            } => cmd_cis(
                &trace,
                &sidecar,
                &answers,
                classification.as_deref(),
                answer_mode,
                sample_variance,
                &common,
            ),
        },
        Command::Mask { kind } => match kind {
            MaskCommand::Typed {
                classification,
                trace,
                neuron_type,
                language,
                scope,
                common,
            } => cmd_mask_typed(
                classification.as_deref(),
                trace.as_deref(),
                &neuron_type,
                language.as_deref(),
                &scope,
                &common,
            ),
            MaskCommand::Random { pct, dims, common } => cmd_mask_random(pct, &dims, &common),
        },
        Command::Sim { kind } => match kind {
            SimCommand::Run {
                config,
                inputs,
                languages,
                examples,
                base_scale,
                offset_scale,
                noise_scale,
                orthogonal_offsets,
                task,
                mask,
                sidecar_out,
                answers_out,
                common,
            } => {
                let spec = match inputs {
                    Some(path) => {
                        let mut spec: SyntheticInputSpec = read_json(&path)?;
                        if let Some(seed) = common.seed {
                            spec.seed = seed;
                        }
                        spec
                    }
                    None => SyntheticInputSpec {
                        languages,
                        num_examples: examples,
                        base_scale,
                        offset_scale,
                        noise_scale,
                        offsets: if orthogonal_offsets {
                            OffsetKind::Orthogonal
                        } else {
                            OffsetKind::Random
                        },
                        seed: common.seed.unwrap_or(0),
                        task,
                    },
                };
                cmd_sim_run(&config, &spec, mask.as_deref(), sidecar_out.as_deref(), answers_out.as_deref(), &common)
            }
        },
        Command::Report { kind } => match kind {
            ReportCommand::Deltas {
                accuracy,
                mode,
                both,
                common,
            } => cmd_deltas(&accuracy, mode, both, &common),
        },
        Command::Validate {
            trace,
            sidecar,
            answers,
        } => cmd_validate(&trace, sidecar.as_deref(), answers.as_deref()),
    }
}

fn load_trace(path: &Path) -> CliResult<TraceSet> {
    Ok(trace::read_trace(open_read(path)?)?)
}

fn load_classification(path: &Path) -> CliResult<ClassificationResult> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    Ok(ClassificationResult::from_json(&text)?)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    write_atomic(path, |w| {
        w.write_all(text.as_bytes())?;
        if !text.ends_with('\n') {
            w.write_all(b"\n")?;
        }
        Ok(())
    })?;
    Ok(())
}

fn json_only(common: &Common, what: &str) -> CliResult {
    if common.format == Some(Format::Csv) {
        return Err(Failure::Usage(format!("{what} output is JSON only")));
    }
    Ok(())
}

fn classification_for(trace: &TraceSet, path: Option<&Path>) -> CliResult<ClassificationResult> {
    match path {
        Some(p) => {
            let c = load_classification(p)?;
            if c.num_examples != trace.header.num_examples
                || c.num_layers != trace.header.num_layers
                || c.d_m != trace.header.neurons_per_layer
                || c.languages != trace.header.languages
            {
                return Err(Error::DimensionMismatch("classification does not belong to the trace".into()).into());
            }
            Ok(c)
        }
        None => Ok(classify_trace(trace)?),
    }
}

fn cmd_classify(trace_path: &Path, common: &Common) -> CliResult {
    let trace = load_trace(trace_path)?;
    let result = classify_trace(&trace)?;
    match common.format.unwrap_or(Format::Json) {
        Format::Json => write_text(&common.out, &result.to_json()?),
        Format::Csv => {
            write_atomic(&common.out, |w| {
                let mut csv = csv::Writer::from_writer(w);
                csv.write_record(["task", "s", "l", "type", "language", "count"])?;
                for part in &result.partitions {
                    let (s, l) = (part.example.to_string(), part.layer.to_string());
                    for ty in [NeuronType::AllShared, NeuronType::PartialShared, NeuronType::NonActivated] {
                        csv.write_record([&result.task, &s, &l, ty.as_str(), "", &part.count(ty).to_string()])?;
                    }
                    for (tag, set) in result.languages.iter().zip(&part.specific) {
                        csv.write_record([&result.task, &s, &l, "specific", tag, &set.len().to_string()])?;
                    }
                }
                csv.flush()?;
                Ok(())
            })?;
            Ok(())
        }
    }
}

fn cmd_patterns(
    trace_path: &Path,
    anchor: Option<&str>,
    denominator: Denominator,
    sharing_out: Option<&Path>,
    common: &Common,
) -> CliResult {
    let trace = load_trace(trace_path)?;
    let result = classify_trace(&trace)?;
    let ratios = patterns::aggregate_ratios(&result);
    let mode = match denominator {
        Denominator::AnchorActive => SharingDenominator::AnchorActive,
        Denominator::AllPartial => SharingDenominator::AllPartial,
    };
    let sharing = anchor
        .map(|a| patterns::sharing_report(&trace, &result, a, mode))
        .transpose()?;
    let task = &trace.header.task;
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            if let Some(report) = &sharing {
                let path = sharing_out
                    .ok_or_else(|| Failure::Usage("--anchor with CSV output needs --sharing-out".into()))?;
                write_atomic(path, |w| patterns::write_sharing_csv(task, report, w))?;
            }
            write_atomic(&common.out, |w| patterns::write_ratios_csv(task, &ratios, w))?;
        }
        Format::Json => {
            let doc = json!({
                "task": task,
                "ratios": ratios,
                "sharing": sharing,
                "specific_share": patterns::specific_share_by_language(&result),
            });
            write_text(&common.out, &serde_json::to_string_pretty(&doc).map_err(Error::from)?)?;
        }
    }
    Ok(())
}

fn cmd_gis(
    trace_path: &Path,
    sidecar_path: &Path,
    language: Option<&str>,
    classification: Option<&Path>,
    common: &Common,
) -> CliResult {
    let trace = load_trace(trace_path)?;
    let sidecar = trace::read_sidecar(open_read(sidecar_path)?)?;
    let result = classification_for(&trace, classification)?;
    let p = match language {
        Some(tag) => trace.header.language_index(tag)?,
        None => 0,
    };
    let curves = impact::gis_type_curves(&trace, &sidecar, &result, p)?;
    let task = &trace.header.task;
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => write_atomic(&common.out, |w| impact::write_gis_csv(task, &curves, w))?,
        Format::Json => {
            let layers: Vec<_> = curves
                .iter()
                .enumerate()
                .map(|(l, row)| {
                    json!({
                        "layer": l,
                        "all-shared": row[0],
                        "partial-shared": row[1],
                        "specific": row[2],
                        "non-activated": row[3],
                    })
                })
                .collect();
            let doc = json!({"task": task, "language": trace.header.languages[p], "mean_gis": layers});
            write_text(&common.out, &serde_json::to_string_pretty(&doc).map_err(Error::from)?)?;
        }
    }
    Ok(())
}

fn cmd_cis(
    trace_path: &Path,
    sidecar_path: &Path,
    answers_path: &Path,
    classification: Option<&Path>,
    answer_mode: CliAnswerMode,
    sample_variance: bool,
    common: &Common,
) -> CliResult {
    let trace = load_trace(trace_path)?;
    let sidecar = trace::read_sidecar(open_read(sidecar_path)?)?;
    let answers = trace::read_answers(open_read(answers_path)?)?;
    if let Some(v) = answers.violations(Some(&sidecar)).first() {
        return Err(Error::InvalidData(v.to_string()).into());
    }
    let result = classification_for(&trace, classification)?;
    let mode = match answer_mode {
        CliAnswerMode::FirstToken => AnswerMode::FirstToken,
        CliAnswerMode::MeanOfTokens => AnswerMode::MeanOfTokens,
    };
    let var_mode = if sample_variance {
        VarianceMode::Sample
    } else {
        VarianceMode::Population
    };
    let rows = trace
        .header
        .languages
        .iter()
        .enumerate()
        .map(|(p, tag)| {
            let cis = impact::cis_for_language(&trace, &sidecar, &answers, p, mode)?;
            Ok((tag.clone(), impact::cis_summary(&cis, &result, var_mode)?))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let task = &trace.header.task;
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => write_atomic(&common.out, |w| impact::write_cis_csv(task, &rows, w))?,
        Format::Json => {
            let doc = json!({
                "task": task,
                "answer_mode": mode.as_str(),
                "variance": if sample_variance { "sample" } else { "population" },
                "languages": rows.iter().map(|(t, s)| json!({"language": t, "summary": s})).collect::<Vec<_>>(),
            });
            write_text(&common.out, &serde_json::to_string_pretty(&doc).map_err(Error::from)?)?;
        }
    }
    Ok(())
}

fn cmd_mask_typed(
    classification: Option<&Path>,
    trace_path: Option<&Path>,
    neuron_type: &str,
    language: Option<&str>,
    scope: &str,
    common: &Common,
) -> CliResult {
    json_only(common, "mask")?;
    let ty: NeuronType = neuron_type.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let scope: MaskScope = scope.parse().map_err(|e: Error| Failure::Usage(e.to_string()))?;
    let result = match (classification, trace_path) {
        (Some(c), _) => load_classification(c)?,
        (None, Some(t)) => classify_trace(&load_trace(t)?)?,
        (None, None) => return Err(Failure::Usage("need --classification or --trace".into())),
    };
    let mask = intervention::build_typed_mask(&result, ty, language, scope)?;
    intervention::write_mask(&mask, &common.out)?;
    Ok(())
}

fn parse_dims(dims: &str) -> CliResult<(usize, usize)> {
    let bad = || Failure::Usage(format!("--dims must look like LxD_M, got {dims:?}"));
    let (l, d) = dims.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((l.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?))
}

fn cmd_mask_random(pct: f64, dims: &str, common: &Common) -> CliResult {
    json_only(common, "mask")?;
    let (layers, d_m) = parse_dims(dims)?;
    let mask = intervention::build_random_mask(pct, layers, d_m, common.seed.unwrap_or(0))?;
    intervention::write_mask(&mask, &common.out)?;
    Ok(())
}

fn cmd_sim_run(
    config_path: &Path,
    spec: &SyntheticInputSpec,
    mask_path: Option<&Path>,
    sidecar_out: Option<&Path>,
    answers_out: Option<&Path>,
    common: &Common,
) -> CliResult {
    let config: ToyConfig = read_json(config_path)?;
    let model = ToyModel::init(&config)?;
    let mask = mask_path.map(intervention::read_mask).transpose()?;
    let trace = toysim::run_suite(&model, spec, mask.as_ref())?;
    write_atomic(&common.out, |w| trace::write_trace(&trace, w).map(|_| ()))?;
    if let Some(path) = sidecar_out {
        let sc = model.to_sidecar(true, true)?;
        write_atomic(path, |w| trace::write_sidecar(&sc, w).map(|_| ()))?;
    }
    if let Some(path) = answers_out {
        let answers = toysim::predicted_answers(&model, spec)?;
        write_atomic(path, |w| trace::write_answers(&answers, w).map(|_| ()))?;
    }
    Ok(())
}

fn cmd_deltas(accuracy: &Path, mode: CliDeltaMode, both: bool, common: &Common) -> CliResult {
    let table = AccuracyTable::from_csv(open_read(accuracy)?)?;
    let mode = match mode {
        CliDeltaMode::MacroMean => DeltaMode::MacroMean,
        CliDeltaMode::PerLanguage => DeltaMode::PerLanguage,
    };
    let primary = report::summarize_deltas(&table, mode)?;
    let alternate = if both {
        let other = match mode {
            DeltaMode::MacroMean => DeltaMode::PerLanguage,
            DeltaMode::PerLanguage => DeltaMode::MacroMean,
        };
        Some(report::summarize_deltas(&table, other)?)
    } else {
        None
    };
    // with --both, columns are always macro-mean then per-language
    let (first, second) = match (mode, alternate) {
        (DeltaMode::PerLanguage, Some(alt)) => (alt, Some(primary)),
        (_, alt) => (primary, alt),
    };
    match common.format.unwrap_or(Format::Csv) {
        Format::Csv => write_atomic(&common.out, |w| report::write_deltas_csv(&first, second.as_deref(), w))?,
        Format::Json => {
            let doc = json!({"rows": first, "alternate": second});
            write_text(&common.out, &serde_json::to_string_pretty(&doc).map_err(Error::from)?)?;
        }
    }
    Ok(())
}

fn cmd_validate(trace_path: &Path, sidecar: Option<&Path>, answers: Option<&Path>) -> CliResult {
    let trace = load_trace(trace_path)?;
    let sidecar = sidecar
        .map(|p| -> CliResult<_> { Ok(trace::read_sidecar(open_read(p)?)?) })
        .transpose()?;
    let mut violations = trace::validate(&trace, sidecar.as_ref());
    if let Some(p) = answers {
        let a = trace::read_answers(open_read(p)?)?;
        violations.extend(a.violations(sidecar.as_ref()));
    }
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        println!("ok");
        Ok(())
    } else {
        Err(Error::InvalidData(format!("{} violation(s)", violations.len())).into())
    }
}
