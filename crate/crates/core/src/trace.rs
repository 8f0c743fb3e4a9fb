// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation traces and their companion files.
//!
//! Three little-endian binary formats share one header discipline:
//!
//! - `MNTR`: last-token FFN activations laid out `[example][language][layer][neuron]`.
//! - `MNSC`: model sidecar with per-neuron value norms, optionally the value
//!   vectors themselves and the output embedding.
//! - `MNAN`: per (example, language) answer, either an embedding or token ids.
//!
//! Integers are little-endian, strings are a `u16` byte length followed by UTF-8.

use std::fmt;
use std::io::{Read, Write};

use crate::binio::{self, CountingWriter};
use crate::error::{Error, Result};

pub const TRACE_MAGIC: &[u8; 4] = b"MNTR";
pub const SIDECAR_MAGIC: &[u8; 4] = b"MNSC";
pub const ANSWER_MAGIC: &[u8; 4] = b"MNAN";
pub const FORMAT_VERSION: u32 = 1;

/// Relative tolerance between stored value norms and norms recomputed from the value matrix.
pub const NORM_REL_TOLERANCE: f64 = 1e-5;

const SIDECAR_HAS_VALUES: u8 = 0b01;
const SIDECAR_HAS_EMBEDDING: u8 = 0b10;

const ANSWER_EMBEDDING: u8 = 0;
const ANSWER_TOKENS: u8 = 1;

/// Header of an `MNTR` trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceHeader {
    pub num_layers: usize,
    pub neurons_per_layer: usize,
    pub languages: Vec<String>,
    pub num_examples: usize,
    pub task: String,
}

impl TraceHeader {
    pub fn num_languages(&self) -> usize {
        self.languages.len()
    }

    /// Number of `f32` values in the payload.
    pub fn payload_len(&self) -> usize {
        self.num_examples * self.num_languages() * self.num_layers * self.neurons_per_layer
    }

    /// Flat offset of `(s, p, l, i)` in the payload.
    #[inline]
    pub fn offset(&self, s: usize, p: usize, l: usize, i: usize) -> usize {
        ((s * self.num_languages() + p) * self.num_layers + l) * self.neurons_per_layer + i
    }

    /// Inverse of [`TraceHeader::offset`].
    pub fn unravel(&self, offset: usize) -> (usize, usize, usize, usize) {
        let i = offset % self.neurons_per_layer;
        let rest = offset / self.neurons_per_layer;
        let l = rest % self.num_layers;
        let rest = rest / self.num_layers;
        let p = rest % self.num_languages();
        (rest / self.num_languages(), p, l, i)
    }

    pub fn language_index(&self, tag: &str) -> Result<usize> {
        self.languages
            .iter()
            .position(|t| t == tag)
            .ok_or_else(|| Error::UnknownLanguage(tag.to_owned()))
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        if self.num_layers == 0 {
            out.push(Violation::new("num_layers", None, "must be at least 1"));
        }
        if self.neurons_per_layer == 0 {
            out.push(Violation::new("neurons_per_layer", None, "must be at least 1"));
        }
        if self.num_examples == 0 {
            out.push(Violation::new("num_examples", None, "must be at least 1"));
        }
        if self.languages.len() < 2 {
            out.push(Violation::new(
                "language_tags",
                None,
                format!("need at least 2 languages, found {}", self.languages.len()),
            ));
        }
        if self.languages.len() > u16::MAX as usize {
            out.push(Violation::new("language_tags", None, "more than 65535 languages"));
        }
        for (k, tag) in self.languages.iter().enumerate() {
            if tag.is_empty() {
                out.push(Violation::new("language_tags", Some(k.to_string()), "empty language tag"));
            }
            if tag.len() > u16::MAX as usize {
                out.push(Violation::new("language_tags", Some(k.to_string()), "tag too long"));
            }
            if self.languages[..k].contains(tag) {
                out.push(Violation::new(
                    "language_tags",
                    Some(k.to_string()),
                    format!("duplicate language tag {tag:?}"),
                ));
            }
        }
        if self.task.len() > u16::MAX as usize {
            out.push(Violation::new("task_label", None, "label too long"));
        }
        for (name, v) in [
            ("num_layers", self.num_layers),
            ("neurons_per_layer", self.neurons_per_layer),
            ("num_examples", self.num_examples),
        ] {
            if u32::try_from(v).is_err() {
                out.push(Violation::new(name, None, "does not fit in u32"));
            }
        }
    }

    fn check(&self) -> Result<()> {
        let mut v = Vec::new();
        self.violations(&mut v);
        match v.first() {
            Some(first) => Err(Error::InvalidHeader(first.to_string())),
            None => Ok(()),
        }
    }
}

/// Last-token activations for every (example, language, layer, neuron).
///
/// A loaded trace is immutable in practice and can be shared freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub header: TraceHeader,
    pub activations: Vec<f32>,
}

impl TraceSet {
    /// Builds a trace, rejecting any invariant violation.
    pub fn new(header: TraceHeader, activations: Vec<f32>) -> Result<Self> {
        let trace = Self { header, activations };
        trace.check()?;
        Ok(trace)
    }

    /// Activation vector of one (example, language, layer).
    pub fn vector(&self, s: usize, p: usize, l: usize) -> &[f32] {
        let start = self.header.offset(s, p, l, 0);
        &self.activations[start..start + self.header.neurons_per_layer]
    }

    pub fn vector_mut(&mut self, s: usize, p: usize, l: usize) -> &mut [f32] {
        let start = self.header.offset(s, p, l, 0);
        let d_m = self.header.neurons_per_layer;
        &mut self.activations[start..start + d_m]
    }

    /// Per-language activation vectors of one (example, layer) cell.
    pub fn cell(&self, s: usize, l: usize) -> Vec<&[f32]> {
        (0..self.header.num_languages())
            .map(|p| self.vector(s, p, l))
            .collect()
    }

    pub fn get(&self, s: usize, p: usize, l: usize, i: usize) -> f32 {
        self.activations[self.header.offset(s, p, l, i)]
    }

    /// A copy of the trace with examples reordered so that new example `k` is old `order[k]`.
    pub fn permute_examples(&self, order: &[usize]) -> Result<Self> {
        let h = &self.header;
        if order.len() != h.num_examples {
            return Err(Error::InvalidArgument(format!(
                "permutation has {} entries, trace has {} examples",
                order.len(),
                h.num_examples
            )));
        }
        let block = h.num_languages() * h.num_layers * h.neurons_per_layer;
        let mut activations = Vec::with_capacity(self.activations.len());
        for &old in order {
            if old >= h.num_examples {
                return Err(Error::InvalidArgument(format!("example {old} out of range")));
            }
            activations.extend_from_slice(&self.activations[old * block..(old + 1) * block]);
        }
        Ok(Self {
            header: h.clone(),
            activations,
        })
    }

    fn check(&self) -> Result<()> {
        self.header.check()?;
        let expected = self.header.payload_len();
        if self.activations.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "payload holds {} values, header implies {expected}",
                self.activations.len()
            )));
        }
        if let Some(off) = self.activations.iter().position(|v| !v.is_finite()) {
            let (s, p, l, i) = self.header.unravel(off);
            return Err(Error::NonFinite {
                value: self.activations[off],
                s,
                p,
                l,
                i,
            });
        }
        Ok(())
    }
}

/// One invariant violation, naming the field and (where applicable) the index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub index: Option<String>,
    pub message: String,
}

impl Violation {
    fn new(field: &str, index: Option<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.to_owned(),
            index,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.index {
            Some(idx) => write!(f, "{}[{}]: {}", self.field, idx, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Writes header then payload. Returns the number of bytes written.
pub fn write_trace<W: Write>(trace: &TraceSet, sink: W) -> Result<u64> {
    trace.check()?;
    let h = &trace.header;
    let mut w = CountingWriter::new(sink);
    w.bytes(TRACE_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.u32(binio::to_u32(h.num_layers, "num_layers")?)?;
    w.u32(binio::to_u32(h.neurons_per_layer, "neurons_per_layer")?)?;
    w.u16(binio::to_u16(h.num_languages(), "num_languages")?)?;
    w.u32(binio::to_u32(h.num_examples, "num_examples")?)?;
    for tag in &h.languages {
        w.str(tag)?;
    }
    w.str(&h.task)?;
    w.f32s(&trace.activations)?;
    Ok(w.finish()?)
}

/// Reads and validates a trace. Either the whole trace is returned or an error.
pub fn read_trace<R: Read>(source: R) -> Result<TraceSet> {
    let mut r = source;
    binio::read_magic(&mut r, TRACE_MAGIC)?;
    binio::read_version(&mut r, FORMAT_VERSION)?;
    let num_layers = binio::read_u32(&mut r, "num_layers")? as usize;
    let neurons_per_layer = binio::read_u32(&mut r, "neurons_per_layer")? as usize;
    let num_languages = binio::read_u16(&mut r, "num_languages")? as usize;
    let num_examples = binio::read_u32(&mut r, "num_examples")? as usize;
    let mut languages = Vec::with_capacity(num_languages);
    for _ in 0..num_languages {
        languages.push(binio::read_str(&mut r, "language tag")?);
    }
    let task = binio::read_str(&mut r, "task label")?;
    let header = TraceHeader {
        num_layers,
        neurons_per_layer,
        languages,
        num_examples,
        task,
    };
    header.check()?;
    let activations = binio::read_f32s(&mut r, header.payload_len())?;
    binio::expect_eof(&mut r)?;
    TraceSet::new(header, activations)
}

/// Lists every invariant violation of a trace and, optionally, a sidecar checked against it.
///
/// Returns an empty list iff everything is consistent.
pub fn validate(trace: &TraceSet, sidecar: Option<&ModelSidecar>) -> Vec<Violation> {
    let mut out = Vec::new();
    let h = &trace.header;
    h.violations(&mut out);
    let expected = h.payload_len();
    if trace.activations.len() != expected {
        out.push(Violation::new(
            "activations",
            None,
            format!(
                "payload length mismatch: {} values, expected {expected}",
                trace.activations.len()
            ),
        ));
    } else if h.num_languages() > 0 && h.num_layers > 0 && h.neurons_per_layer > 0 {
        for (off, v) in trace.activations.iter().enumerate() {
            if !v.is_finite() {
                let (s, p, l, i) = h.unravel(off);
                out.push(Violation::new(
                    "activations",
                    Some(format!("{s},{p},{l},{i}")),
                    format!("non-finite value {v}"),
                ));
            }
        }
    }
    if let Some(sc) = sidecar {
        if sc.num_layers != h.num_layers {
            out.push(Violation::new(
                "sidecar.num_layers",
                None,
                format!("layer count mismatch: sidecar {} vs trace {}", sc.num_layers, h.num_layers),
            ));
        }
        if sc.d_m != h.neurons_per_layer {
            out.push(Violation::new(
                "sidecar.d_m",
                None,
                format!(
                    "neuron count mismatch: sidecar {} vs trace {}",
                    sc.d_m, h.neurons_per_layer
                ),
            ));
        }
        out.extend(sc.violations());
    }
    out
}

/// Per-model data needed for impact scores and vocabulary projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSidecar {
    pub num_layers: usize,
    pub d_m: usize,
    /// Hidden size.
    pub d: usize,
    /// Vocabulary size; 0 when no embedding is attached.
    pub vocab: usize,
    /// `[layer][neuron]` L2 norms of the value vectors.
    pub value_norms: Vec<f32>,
    /// `[layer][neuron][d]` value vectors.
    pub value_matrix: Option<Vec<f32>>,
    /// `[vocab][d]` output embedding rows.
    pub embedding: Option<Vec<f32>>,
}

impl ModelSidecar {
    /// Builds a sidecar from value vectors, deriving the norms.
    pub fn from_values(
        num_layers: usize,
        d_m: usize,
        d: usize,
        value_matrix: Vec<f32>,
        embedding: Option<Vec<f32>>,
    ) -> Result<Self> {
        if value_matrix.len() != num_layers * d_m * d {
            return Err(Error::DimensionMismatch(format!(
                "value matrix has {} entries, expected {}",
                value_matrix.len(),
                num_layers * d_m * d
            )));
        }
        let value_norms = value_matrix
            .chunks_exact(d)
            .map(|v| l2_norm(v) as f32)
            .collect();
        let vocab = embedding.as_ref().map_or(0, |e| e.len() / d.max(1));
        let sc = Self {
            num_layers,
            d_m,
            d,
            vocab,
            value_norms,
            value_matrix: Some(value_matrix),
            embedding,
        };
        sc.check()?;
        Ok(sc)
    }

    pub fn layer_norms(&self, l: usize) -> &[f32] {
        &self.value_norms[l * self.d_m..(l + 1) * self.d_m]
    }

    /// `[neuron][d]` value vectors of layer `l`.
    pub fn layer_values(&self, l: usize) -> Result<&[f32]> {
        let m = self.value_matrix.as_ref().ok_or(Error::MissingValueMatrix)?;
        let n = self.d_m * self.d;
        Ok(&m[l * n..(l + 1) * n])
    }

    pub fn value_vector(&self, l: usize, i: usize) -> Result<&[f32]> {
        let layer = self.layer_values(l)?;
        Ok(&layer[i * self.d..(i + 1) * self.d])
    }

    pub fn embedding(&self) -> Result<&[f32]> {
        self.embedding.as_deref().ok_or(Error::MissingEmbedding)
    }

    pub fn embedding_row(&self, token: u32) -> Result<&[f32]> {
        let e = self.embedding()?;
        let w = token as usize;
        if w >= self.vocab {
            return Err(Error::TokenOutOfRange {
                id: token,
                vocab: self.vocab,
            });
        }
        Ok(&e[w * self.d..(w + 1) * self.d])
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.num_layers == 0 || self.d_m == 0 || self.d == 0 {
            out.push(Violation::new("sidecar", None, "num_layers, d_m and d must be at least 1"));
            return out;
        }
        if self.value_norms.len() != self.num_layers * self.d_m {
            out.push(Violation::new(
                "sidecar.value_norms",
                None,
                format!(
                    "length mismatch: {} values, expected {}",
                    self.value_norms.len(),
                    self.num_layers * self.d_m
                ),
            ));
            return out;
        }
        for (k, n) in self.value_norms.iter().enumerate() {
            if !n.is_finite() || *n < 0.0 {
                out.push(Violation::new(
                    "sidecar.value_norms",
                    Some(format!("{},{}", k / self.d_m, k % self.d_m)),
                    format!("norm must be finite and non-negative, found {n}"),
                ));
            }
        }
        if let Some(m) = &self.value_matrix {
            if m.len() != self.num_layers * self.d_m * self.d {
                out.push(Violation::new(
                    "sidecar.value_matrix",
                    None,
                    format!(
                        "length mismatch: {} values, expected {}",
                        m.len(),
                        self.num_layers * self.d_m * self.d
                    ),
                ));
            } else {
                for (k, (col, stored)) in m.chunks_exact(self.d).zip(&self.value_norms).enumerate() {
                    if col.iter().any(|v| !v.is_finite()) {
                        out.push(Violation::new(
                            "sidecar.value_matrix",
                            Some(format!("{},{}", k / self.d_m, k % self.d_m)),
                            "non-finite value",
                        ));
                        continue;
                    }
                    let computed = l2_norm(col);
                    let stored = f64::from(*stored);
                    let scale = computed.abs().max(stored.abs());
                    if (computed - stored).abs() > NORM_REL_TOLERANCE * scale {
                        out.push(Violation::new(
                            "sidecar.value_norms",
                            Some(format!("{},{}", k / self.d_m, k % self.d_m)),
                            format!("norm mismatch: stored {stored}, value column has {computed}"),
                        ));
                    }
                }
            }
        }
        if let Some(e) = &self.embedding {
            if self.vocab == 0 || e.len() != self.vocab * self.d {
                out.push(Violation::new(
                    "sidecar.embedding",
                    None,
                    format!(
                        "length mismatch: {} values, expected vocab {} x d {}",
                        e.len(),
                        self.vocab,
                        self.d
                    ),
                ));
            } else if let Some(k) = e.iter().position(|v| !v.is_finite()) {
                out.push(Violation::new(
                    "sidecar.embedding",
                    Some(format!("{},{}", k / self.d, k % self.d)),
                    "non-finite value",
                ));
            }
        }
        out
    }

    fn check(&self) -> Result<()> {
        match self.violations().first() {
            Some(v) => Err(Error::InvalidData(v.to_string())),
            None => Ok(()),
        }
    }
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt()
}

pub fn write_sidecar<W: Write>(sidecar: &ModelSidecar, sink: W) -> Result<u64> {
    sidecar.check()?;
    let mut w = CountingWriter::new(sink);
    w.bytes(SIDECAR_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.u32(binio::to_u32(sidecar.num_layers, "num_layers")?)?;
    w.u32(binio::to_u32(sidecar.d_m, "d_m")?)?;
    w.u32(binio::to_u32(sidecar.d, "d")?)?;
    w.u32(binio::to_u32(sidecar.vocab, "vocab")?)?;
    let mut flags = 0u8;
    if sidecar.value_matrix.is_some() {
        flags |= SIDECAR_HAS_VALUES;
    }
    if sidecar.embedding.is_some() {
        flags |= SIDECAR_HAS_EMBEDDING;
    }
    w.u8(flags)?;
    w.f32s(&sidecar.value_norms)?;
    if let Some(m) = &sidecar.value_matrix {
        w.f32s(m)?;
    }
    if let Some(e) = &sidecar.embedding {
        w.f32s(e)?;
    }
    Ok(w.finish()?)
}

pub fn read_sidecar<R: Read>(source: R) -> Result<ModelSidecar> {
    let mut r = source;
    binio::read_magic(&mut r, SIDECAR_MAGIC)?;
    binio::read_version(&mut r, FORMAT_VERSION)?;
    let num_layers = binio::read_u32(&mut r, "num_layers")? as usize;
    let d_m = binio::read_u32(&mut r, "d_m")? as usize;
    let d = binio::read_u32(&mut r, "d")? as usize;
    let vocab = binio::read_u32(&mut r, "vocab")? as usize;
    let flags = binio::read_u8(&mut r, "flags")?;
    if flags & !(SIDECAR_HAS_VALUES | SIDECAR_HAS_EMBEDDING) != 0 {
        return Err(Error::InvalidHeader(format!("unknown sidecar flags {flags:#04x}")));
    }
    if num_layers == 0 || d_m == 0 || d == 0 {
        return Err(Error::InvalidHeader("num_layers, d_m and d must be at least 1".into()));
    }
    let value_norms = binio::read_f32s(&mut r, num_layers * d_m)?;
    let value_matrix = if flags & SIDECAR_HAS_VALUES != 0 {
        Some(binio::read_f32s(&mut r, num_layers * d_m * d)?)
    } else {
        None
    };
    let embedding = if flags & SIDECAR_HAS_EMBEDDING != 0 {
        Some(binio::read_f32s(&mut r, vocab * d)?)
    } else {
        None
    };
    binio::expect_eof(&mut r)?;
    let sc = ModelSidecar {
        num_layers,
        d_m,
        d,
        vocab,
        value_norms,
        value_matrix,
        embedding,
    };
    sc.check()?;
    Ok(sc)
}

/// The correct answer for one (example, language).
#[derive(Debug, Clone, PartialEq)]
pub enum Answer {
    /// Answer embedding `E_r` of length `d`.
    Embedding(Vec<f32>),
    /// Answer token ids, resolved against the sidecar embedding.
    Tokens(Vec<u32>),
}

/// How multi-token answers are reduced to one embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnswerMode {
    #[default]
    FirstToken,
    MeanOfTokens,
}

impl AnswerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AnswerMode::FirstToken => "first-token",
            AnswerMode::MeanOfTokens => "mean-of-tokens",
        }
    }
}

/// Answers indexed `[example][language]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerSet {
    pub num_examples: usize,
    pub num_languages: usize,
    pub d: usize,
    pub answers: Vec<Answer>,
}

impl AnswerSet {
    pub fn get(&self, s: usize, p: usize) -> &Answer {
        &self.answers[s * self.num_languages + p]
    }

    /// Resolves the answer of `(s, p)` to an embedding vector `E_r`.
    pub fn resolve(
        &self,
        s: usize,
        p: usize,
        sidecar: Option<&ModelSidecar>,
        mode: AnswerMode,
    ) -> Result<Vec<f64>> {
        match self.get(s, p) {
            Answer::Embedding(e) => Ok(e.iter().map(|v| f64::from(*v)).collect()),
            Answer::Tokens(ids) => {
                let sc = sidecar.ok_or(Error::MissingEmbedding)?;
                let first = *ids.first().ok_or_else(|| {
                    Error::InvalidData(format!("answer ({s},{p}) has no tokens"))
                })?;
                match mode {
                    AnswerMode::FirstToken => {
                        Ok(sc.embedding_row(first)?.iter().map(|v| f64::from(*v)).collect())
                    }
                    AnswerMode::MeanOfTokens => {
                        let mut acc = vec![0.0f64; sc.d];
                        for id in ids {
                            for (a, v) in acc.iter_mut().zip(sc.embedding_row(*id)?) {
                                *a += f64::from(*v);
                            }
                        }
                        let n = ids.len() as f64;
                        acc.iter_mut().for_each(|a| *a /= n);
                        Ok(acc)
                    }
                }
            }
        }
    }

    pub fn violations(&self, sidecar: Option<&ModelSidecar>) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.answers.len() != self.num_examples * self.num_languages {
            out.push(Violation::new(
                "answers",
                None,
                format!(
                    "{} answers, expected {}",
                    self.answers.len(),
                    self.num_examples * self.num_languages
                ),
            ));
            return out;
        }
        if let Some(sc) = sidecar {
            if sc.d != self.d {
                out.push(Violation::new(
                    "answers.d",
                    None,
                    format!("hidden size mismatch: answers {} vs sidecar {}", self.d, sc.d),
                ));
            }
        }
        for (k, a) in self.answers.iter().enumerate() {
            let idx = Some(format!("{},{}", k / self.num_languages.max(1), k % self.num_languages.max(1)));
            match a {
                Answer::Embedding(e) => {
                    if e.len() != self.d {
                        out.push(Violation::new(
                            "answers",
                            idx,
                            format!("embedding length {} != d {}", e.len(), self.d),
                        ));
                    } else if e.iter().any(|v| !v.is_finite()) {
                        out.push(Violation::new("answers", idx, "non-finite embedding value"));
                    }
                }
                Answer::Tokens(ids) => {
                    if ids.is_empty() {
                        out.push(Violation::new("answers", idx, "empty token list"));
                    } else if let Some(sc) = sidecar {
                        if let Some(bad) = ids.iter().find(|id| **id as usize >= sc.vocab) {
                            out.push(Violation::new(
                                "answers",
                                idx,
                                format!("token id {bad} >= vocab {}", sc.vocab),
                            ));
                        }
                    }
                }
            }
        }
        out
    }
}

pub fn write_answers<W: Write>(answers: &AnswerSet, sink: W) -> Result<u64> {
    if let Some(v) = answers.violations(None).first() {
        return Err(Error::InvalidData(v.to_string()));
    }
    let mut w = CountingWriter::new(sink);
    w.bytes(ANSWER_MAGIC)?;
    w.u32(FORMAT_VERSION)?;
    w.u32(binio::to_u32(answers.num_examples, "num_examples")?)?;
    w.u16(binio::to_u16(answers.num_languages, "num_languages")?)?;
    w.u32(binio::to_u32(answers.d, "d")?)?;
    for a in &answers.answers {
        match a {
            Answer::Embedding(e) => {
                w.u8(ANSWER_EMBEDDING)?;
                w.f32s(e)?;
            }
            Answer::Tokens(ids) => {
                w.u8(ANSWER_TOKENS)?;
                w.u16(binio::to_u16(ids.len(), "token count")?)?;
                for id in ids {
                    w.u32(*id)?;
                }
            }
        }
    }
    Ok(w.finish()?)
}

pub fn read_answers<R: Read>(source: R) -> Result<AnswerSet> {
    let mut r = source;
    binio::read_magic(&mut r, ANSWER_MAGIC)?;
    binio::read_version(&mut r, FORMAT_VERSION)?;
    let num_examples = binio::read_u32(&mut r, "num_examples")? as usize;
    let num_languages = binio::read_u16(&mut r, "num_languages")? as usize;
    let d = binio::read_u32(&mut r, "d")? as usize;
    let mut answers = Vec::with_capacity(num_examples * num_languages);
    for _ in 0..num_examples * num_languages {
        let kind = binio::read_u8(&mut r, "answer kind")?;
        answers.push(match kind {
            ANSWER_EMBEDDING => Answer::Embedding(binio::read_f32s(&mut r, d)?),
            ANSWER_TOKENS => {
                let n = binio::read_u16(&mut r, "token count")? as usize;
                let mut ids = Vec::with_capacity(n);
                for _ in 0..n {
                    ids.push(binio::read_u32(&mut r, "token id")?);
                }
                Answer::Tokens(ids)
            }
            other => return Err(Error::InvalidData(format!("unknown answer kind {other}"))),
        });
    }
    binio::expect_eof(&mut r)?;
    let set = AnswerSet {
        num_examples,
        num_languages,
        d,
        answers,
    };
    if let Some(v) = set.violations(None).first() {
        return Err(Error::InvalidData(v.to_string()));
    }
    Ok(set)
}
