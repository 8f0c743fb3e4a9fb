// SPDX-License-Identifier: MIT OR Apache-2.0

//! Python bindings: traces, classification, ratios, impact scores, masks,
//! the toy simulator and ablation deltas.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};

use neurotype::classifier::{self, ClassificationResult, NeuronType};
use neurotype::impact;
use neurotype::intervention::{self, MaskScope, MaskSet};
use neurotype::patterns;
use neurotype::report::{self, AccuracyTable, DeltaMode};
use neurotype::toysim::{self, Activation, OffsetKind, SyntheticInputSpec, ToyConfig, ToyModel};
use neurotype::trace::{self, ModelSidecar, TraceHeader, TraceSet};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: neurotype::Error) -> PyErr {
    match e {
        neurotype::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| PyValueError::new_err(e.to_string()))
}

fn open(path: &str) -> PyResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?))
}

fn create(path: &str) -> PyResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?))
}

/// Activation trace `[S][P][L][d_m]`.
#[pyclass(name = "Trace", module = "neurotype_py")]
#[derive(Clone)]
pub struct PyTrace {
    inner: TraceSet,
}

#[pymethods]
impl PyTrace {
    #[new]
    #[pyo3(signature = (languages, num_examples, num_layers, d_m, activations, task = "task".to_string()))]
    fn new(
        languages: Vec<String>,
        num_examples: usize,
        num_layers: usize,
        d_m: usize,
        activations: Vec<f32>,
        task: String,
    ) -> PyResult<Self> {
        let header = TraceHeader {
            num_layers,
            neurons_per_layer: d_m,
            languages,
            num_examples,
            task,
        };
        Ok(Self {
            inner: TraceSet::new(header, activations).map_err(err)?,
        })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: trace::read_trace(open(path)?).map_err(err)?,
        })
    }

    fn write(&self, path: &str) -> PyResult<u64> {
        trace::write_trace(&self.inner, create(path)?).map_err(err)
    }

    #[getter]
    fn languages(&self) -> Vec<String> {
        self.inner.header.languages.clone()
    }
    #[getter]
    fn num_examples(&self) -> usize {
        self.inner.header.num_examples
    }
    #[getter]
    fn num_layers(&self) -> usize {
        self.inner.header.num_layers
    }
    #[getter]
    fn d_m(&self) -> usize {
        self.inner.header.neurons_per_layer
    }
    #[getter]
    fn task(&self) -> String {
        self.inner.header.task.clone()
    }

    fn vector(&self, s: usize, p: usize, l: usize) -> PyResult<Vec<f32>> {
        let h = &self.inner.header;
        if s >= h.num_examples || p >= h.num_languages() || l >= h.num_layers {
            return Err(PyValueError::new_err(format!("index ({s}, {p}, {l}) out of range")));
        }
        Ok(self.inner.vector(s, p, l).to_vec())
    }

    /// Invariant violations as strings; empty when the trace is valid.
    #[pyo3(signature = (sidecar = None))]
    fn validate(&self, sidecar: Option<&PySidecar>) -> Vec<String> {
        trace::validate(&self.inner, sidecar.map(|s| &s.inner))
            .iter()
            .map(ToString::to_string)
            .collect()
    }

    fn __repr__(&self) -> String {
        let h = &self.inner.header;
        format!(
            "Trace(task={:?}, S={}, P={}, L={}, d_m={})",
            h.task,
            h.num_examples,
            h.num_languages(),
            h.num_layers,
            h.neurons_per_layer
        )
    }
}

/// Value-vector norms, optional value matrix and embedding.
#[pyclass(name = "Sidecar", module = "neurotype_py")]
#[derive(Clone)]
pub struct PySidecar {
    inner: ModelSidecar,
}

#[pymethods]
impl PySidecar {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: trace::read_sidecar(open(path)?).map_err(err)?,
        })
    }

    fn write(&self, path: &str) -> PyResult<u64> {
        trace::write_sidecar(&self.inner, create(path)?).map_err(err)
    }

    fn layer_norms(&self, l: usize) -> PyResult<Vec<f32>> {
        if l >= self.inner.num_layers {
            return Err(PyValueError::new_err(format!("layer {l} out of range")));
        }
        Ok(self.inner.layer_norms(l).to_vec())
    }

    fn value_vector(&self, l: usize, i: usize) -> PyResult<Vec<f32>> {
        if l >= self.inner.num_layers || i >= self.inner.d_m {
            return Err(PyValueError::new_err(format!("neuron ({l}, {i}) out of range")));
        }
        Ok(self.inner.value_vector(l, i).map_err(err)?.to_vec())
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }
    #[getter]
    fn vocab(&self) -> usize {
        self.inner.vocab
    }
}

/// Per (example, layer) neuron partitions.
#[pyclass(name = "Classification", module = "neurotype_py")]
#[derive(Clone)]
pub struct PyClassification {
    inner: ClassificationResult,
}

#[pymethods]
impl PyClassification {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ClassificationResult::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    /// Neuron sets of one cell; `specific` maps language tag to indices.
    fn cell(&self, py: Python<'_>, s: usize, l: usize) -> PyResult<PyObject> {
        if s >= self.inner.num_examples || l >= self.inner.num_layers {
            return Err(PyValueError::new_err(format!("cell ({s}, {l}) out of range")));
        }
        let part = self.inner.cell(s, l);
        let spec: BTreeMap<String, Vec<u32>> = self
            .inner
            .languages
            .iter()
            .cloned()
            .zip(part.specific.iter().cloned())
            .collect();
        let d = pyo3::types::PyDict::new(py);
        d.set_item("all-shared", part.all_shared.clone())?;
        d.set_item("partial-shared", part.partial_shared.clone())?;
        d.set_item("specific", spec)?;
        d.set_item("non-activated", part.non_activated.clone())?;
        Ok(d.into_any().unbind())
    }

    /// Per-layer mean type ratios (percent), keyed by type name.
    fn aggregate_ratios(&self) -> Vec<BTreeMap<&'static str, f64>> {
        patterns::aggregate_ratios(&self.inner).iter().map(ratio_map).collect()
    }

    /// Type ratios of every cell, in `s * L + l` order.
    fn type_ratios(&self) -> Vec<BTreeMap<&'static str, f64>> {
        self.inner
            .partitions
            .iter()
            .map(|p| ratio_map(&patterns::type_ratios(p)))
            .collect()
    }

    #[getter]
    fn languages(&self) -> Vec<String> {
        self.inner.languages.clone()
    }
}

fn ratio_map(r: &patterns::TypeRatios) -> BTreeMap<&'static str, f64> {
    NeuronType::ALL.iter().map(|t| (t.as_str(), r.get(*t))).collect()
}

#[pyfunction]
fn classify(trace: &PyTrace) -> PyResult<PyClassification> {
    Ok(PyClassification {
        inner: classifier::classify_trace(&trace.inner).map_err(err)?,
    })
}

/// Partition of one layer from per-language activation vectors.
#[pyfunction]
fn classify_layer(py: Python<'_>, acts: Vec<Vec<f32>>) -> PyResult<PyObject> {
    let refs: Vec<&[f32]> = acts.iter().map(Vec::as_slice).collect();
    let part = classifier::classify_layer(&refs).map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("all-shared", part.all_shared)?;
    d.set_item("partial-shared", part.partial_shared)?;
    d.set_item("specific", part.specific)?;
    d.set_item("non-activated", part.non_activated)?;
    Ok(d.into_any().unbind())
}

/// Returns `(gis, degenerate)`.
#[pyfunction]
fn generation_impact(acts: Vec<f32>, norms: Vec<f32>) -> PyResult<(Vec<f64>, bool)> {
    let g = impact::generation_impact(&acts, &norms).map_err(err)?;
    Ok((g.values, g.degenerate))
}

/// `values` is the flattened `[d_m][d]` value matrix of the layer.
#[pyfunction]
fn correctness_impact(acts: Vec<f32>, values: Vec<f32>, answer: Vec<f64>) -> PyResult<Vec<f64>> {
    impact::correctness_impact(&acts, &values, &answer).map_err(err)
}

/// Returns `(scores, ranking)` of `contribution` against the flattened `[vocab][d]` embedding.
#[pyfunction]
fn vocab_projection(contribution: Vec<f64>, embedding: Vec<f32>) -> PyResult<(Vec<f64>, Vec<u32>)> {
    let p = impact::vocab_projection(&contribution, &embedding).map_err(err)?;
    Ok((p.scores, p.ranking))
}

/// Per-layer mean GIS by type for one language; `None` where a type never occurs.
#[pyfunction]
#[pyo3(signature = (trace, sidecar, language, classification = None))]
fn gis_type_curves(
    trace: &PyTrace,
    sidecar: &PySidecar,
    language: &str,
    classification: Option<&PyClassification>,
) -> PyResult<Vec<BTreeMap<&'static str, Option<f64>>>> {
    let p = trace.inner.header.language_index(language).map_err(err)?;
    let owned;
    let result = match classification {
        Some(c) => &c.inner,
        None => {
            owned = classifier::classify_trace(&trace.inner).map_err(err)?;
            &owned
        }
    };
    let curves = impact::gis_type_curves(&trace.inner, &sidecar.inner, result, p).map_err(err)?;
    Ok(curves
        .iter()
        .map(|c| NeuronType::ALL.iter().zip(c).map(|(t, v)| (t.as_str(), *v)).collect())
        .collect())
}

/// Deactivation mask.
#[pyclass(name = "Mask", module = "neurotype_py")]
#[derive(Clone)]
pub struct PyMask {
    inner: MaskSet,
}

#[pymethods]
impl PyMask {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: intervention::read_mask(std::path::Path::new(path)).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: MaskSet::from_json(text).map_err(err)?,
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        intervention::write_mask(&self.inner, std::path::Path::new(path)).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    /// Percentage of neurons deactivated, averaged over layers (and examples).
    fn pct(&self) -> PyResult<f64> {
        intervention::mask_pct(&self.inner, self.inner.num_layers, self.inner.d_m).map_err(err)
    }

    /// `(s, l, neurons)` triples; `s` is `None` for corpus-level masks.
    fn entries(&self) -> Vec<(Option<usize>, usize, Vec<u32>)> {
        self.inner.entries.iter().map(|e| (e.s, e.l, e.neurons.clone())).collect()
    }

    #[getter]
    fn scope(&self) -> String {
        self.inner.scope.as_str().to_owned()
    }
}

#[pyfunction]
#[pyo3(signature = (classification, neuron_type, language = None, scope = "per-example"))]
fn build_typed_mask(
    classification: &PyClassification,
    neuron_type: &str,
    language: Option<&str>,
    scope: &str,
) -> PyResult<PyMask> {
    let ty: NeuronType = parse(neuron_type)?;
    let scope: MaskScope = parse(scope)?;
    Ok(PyMask {
        inner: intervention::build_typed_mask(&classification.inner, ty, language, scope).map_err(err)?,
    })
}

#[pyfunction]
fn build_random_mask(pct: f64, num_layers: usize, d_m: usize, seed: u64) -> PyResult<PyMask> {
    Ok(PyMask {
        inner: intervention::build_random_mask(pct, num_layers, d_m, seed).map_err(err)?,
    })
}

/// Residual-stream toy model with FFN blocks.
#[pyclass(name = "ToyModel", module = "neurotype_py")]
pub struct PyToyModel {
    inner: ToyModel,
}

#[pymethods]
impl PyToyModel {
    #[new]
    #[pyo3(signature = (num_layers, d, d_m, vocab, act = "gelu", seed = 0))]
    fn new(num_layers: usize, d: usize, d_m: usize, vocab: usize, act: &str, seed: u64) -> PyResult<Self> {
        let act: Activation = parse(act)?;
        let config = ToyConfig {
            num_layers,
            d,
            d_m,
            vocab,
            act,
            seed,
        };
        Ok(Self {
            inner: ToyModel::init(&config).map_err(err)?,
        })
    }

    /// Returns `(hidden, activations)`; `masks` holds one neuron list per layer.
    #[pyo3(signature = (x, masks = None))]
    fn forward(&self, x: Vec<f64>, masks: Option<Vec<Vec<u32>>>) -> PyResult<(Vec<f64>, Vec<Vec<f32>>)> {
        let refs: Option<Vec<&[u32]>> = masks.as_ref().map(|m| m.iter().map(Vec::as_slice).collect());
        let pass = self.inner.forward(&x, refs.as_deref()).map_err(err)?;
        Ok((pass.hidden, pass.activations))
    }

    /// Returns `(Σ A_i v_i, A)` for one layer.
    #[pyo3(signature = (layer, x, mask = None))]
    fn ffn_forward(&self, layer: usize, x: Vec<f64>, mask: Option<Vec<u32>>) -> PyResult<(Vec<f64>, Vec<f32>)> {
        self.inner.ffn_forward(layer, &x, mask.as_deref()).map_err(err)
    }

    fn logits(&self, hidden: Vec<f64>) -> PyResult<Vec<f64>> {
        if hidden.len() != self.inner.config.d {
            return Err(PyValueError::new_err("hidden state has the wrong size"));
        }
        Ok(self.inner.logits(&hidden))
    }

    fn value(&self, layer: usize, i: usize) -> PyResult<Vec<f32>> {
        let c = &self.inner.config;
        if layer >= c.num_layers || i >= c.d_m {
            return Err(PyValueError::new_err(format!("neuron ({layer}, {i}) out of range")));
        }
        Ok(self.inner.value(layer, i).to_vec())
    }

    /// Flattened `[vocab][d]` output embedding.
    #[getter]
    fn embedding(&self) -> Vec<f32> {
        self.inner.embedding.clone()
    }

    fn to_sidecar(&self) -> PyResult<PySidecar> {
        Ok(PySidecar {
            inner: self.inner.to_sidecar(true, true).map_err(err)?,
        })
    }

    /// Runs synthetic multilingual inputs and records the activations as a trace.
    #[pyo3(signature = (languages, num_examples, seed = 0, mask = None, base_scale = 1.0,
                        offset_scale = 0.5, noise_scale = 0.1, orthogonal = false, task = "synthetic"))]
    #[allow(clippy::too_many_arguments)]
    fn run_suite(
        &self,
        languages: Vec<String>,
        num_examples: usize,
        seed: u64,
        mask: Option<&PyMask>,
        base_scale: f64,
        offset_scale: f64,
        noise_scale: f64,
        orthogonal: bool,
        task: &str,
    ) -> PyResult<PyTrace> {
        let spec = SyntheticInputSpec {
            languages,
            num_examples,
            base_scale,
            offset_scale,
            noise_scale,
            offsets: if orthogonal { OffsetKind::Orthogonal } else { OffsetKind::Random },
            seed,
            task: task.to_owned(),
        };
        Ok(PyTrace {
            inner: toysim::run_suite(&self.inner, &spec, mask.map(|m| &m.inner)).map_err(err)?,
        })
    }
}

/// `rows` are `(setting, language, accuracy)`; returns `(setting, mean_acc, delta)` per setting.
#[pyfunction]
#[pyo3(signature = (rows, mode = "macro-mean"))]
fn summarize_deltas(rows: Vec<(String, String, f64)>, mode: &str) -> PyResult<Vec<(String, f64, f64)>> {
    let mode = match mode {
        "macro-mean" => DeltaMode::MacroMean,
        "per-language" => DeltaMode::PerLanguage,
        other => return Err(PyValueError::new_err(format!("unknown delta mode {other:?}"))),
    };
    let mut table = AccuracyTable::new();
    for (setting, language, acc) in &rows {
        table.insert(setting, language, *acc).map_err(err)?;
    }
    Ok(report::summarize_deltas(&table, mode)
        .map_err(err)?
        .into_iter()
        .map(|r| (r.setting, r.mean_acc, r.delta))
        .collect())
}

#[pymodule]
pub fn neurotype_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrace>()?;
    m.add_class::<PySidecar>()?;
    m.add_class::<PyClassification>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyToyModel>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(classify_layer, m)?)?;
    m.add_function(wrap_pyfunction!(generation_impact, m)?)?;
    m.add_function(wrap_pyfunction!(correctness_impact, m)?)?;
    m.add_function(wrap_pyfunction!(vocab_projection, m)?)?;
    m.add_function(wrap_pyfunction!(gis_type_curves, m)?)?;
    m.add_function(wrap_pyfunction!(build_typed_mask, m)?)?;
    m.add_function(wrap_pyfunction!(build_random_mask, m)?)?;
    m.add_function(wrap_pyfunction!(summarize_deltas, m)?)?;
    Ok(())
}
