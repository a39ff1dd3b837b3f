use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyTuple};

use spiketext::ann::CnnConfig;
use spiketext::checkpoint::{Bundle, Kind};
use spiketext::config::PipelineConfig;
use spiketext::encoder::{encode_keyed, EncodeKey};
use spiketext::energy::count_flops;
use spiketext::eval::EvalReport;
use spiketext::pipeline::{self, SweepParam};
use spiketext::rng::Purpose;
use spiketext::snn::{lif_step, LifConfig, LifState};
use spiketext::synth::{synthetic_corpus, SynthSpec};
use spiketext::training::{grad_check_relaxed, random_tiny_case, SurrogateConfig};

create_exception!(spiketext, SpikeTextError, PyException);

fn err(e: spiketext::Error) -> PyErr {
    SpikeTextError::new_err(e.to_string())
}

/// Config values as the text parser expects them: lists comma-joined,
/// booleans lowercase.
fn value_text(value: &Bound<'_, PyAny>) -> PyResult<String> {
    if value.is_instance_of::<PyBool>() {
        return Ok(if value.extract::<bool>()? { "true" } else { "false" }.into());
    }
    if value.is_instance_of::<PyList>() || value.is_instance_of::<PyTuple>() {
        let parts: Vec<String> = value
            .try_iter()?
            .map(|v| Ok(v?.str()?.to_string()))
            .collect::<PyResult<_>>()?;
        return Ok(parts.join(","));
    }
    if value.is_none() {
        return Ok(String::new());
    }
    Ok(value.str()?.to_string())
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("accuracy_mean", r.mean)?;
    d.set_item("accuracy_std", r.std)?;
    d.set_item("trial_accuracies", r.trial_accuracies.clone())?;
    let a = &r.activity;
    d.set_item("active", a.active)?;
    d.set_item("conv_active", a.conv_active)?;
    d.set_item("out_active", a.out_active)?;
    d.set_item("input_rate", a.input_rate)?;
    d.set_item("conv_rate", a.conv_rate)?;
    d.set_item("out_rate", a.out_rate)?;
    Ok(d)
}

/// Pipeline settings. Keyword arguments use the configuration-file keys.
#[pyclass(name = "Config", module = "spiketext")]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = PipelineConfig::from_env().map_err(err)?;
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                inner.set(&k.extract::<String>()?, &value_text(&v)?).map_err(err)?;
            }
        }
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let mut inner = PipelineConfig::from_env().map_err(err)?;
        inner.apply_file(&path).map_err(err)?;
        Ok(PyConfig { inner })
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        self.inner.set(key, &value_text(value)?).map_err(err)
    }

    fn get(&self, key: &str) -> PyResult<String> {
        self.inner
            .to_text()
            .lines()
            .find_map(|l| l.split_once(" = ").filter(|(k, _)| *k == key).map(|(_, v)| v.to_string()))
            .ok_or_else(|| SpikeTextError::new_err(format!("unknown configuration key `{key}`")))
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(seed={}, dim={}, time_steps={}, out_dir={:?})",
            self.inner.seed,
            self.inner.dim,
            self.inner.time_steps,
            self.inner.out_dir.display().to_string()
        )
    }
}

/// A saved model: prepared data, ANN, or spiking network.
#[pyclass(name = "Checkpoint", module = "spiketext")]
struct PyCheckpoint {
    inner: Bundle,
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCheckpoint {
            inner: Bundle::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.inner.kind {
            Kind::Prepared => "prepared",
            Kind::Ann => "ann",
            Kind::Snn => "snn",
        }
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab.len()
    }

    #[getter]
    fn max_len(&self) -> usize {
        self.inner.max_len
    }

    #[getter]
    fn embed_dim(&self) -> usize {
        self.inner.table.dim
    }

    /// `(beta, threshold, time_steps)` of a spiking checkpoint, else `None`.
    #[getter]
    fn lif(&self) -> Option<(f64, f64, usize)> {
        self.inner.lif.map(|l| (l.beta, l.threshold, l.time_steps))
    }

    #[getter]
    fn notes(&self) -> Vec<(String, String)> {
        self.inner.notes.clone()
    }

    /// Copy with some neuron parameters replaced.
    #[pyo3(signature = (beta=None, threshold=None, time_steps=None))]
    fn with_lif(&self, beta: Option<f64>, threshold: Option<f64>, time_steps: Option<usize>) -> PyResult<Self> {
        let mut lif = self
            .inner
            .lif
            .ok_or_else(|| SpikeTextError::new_err("not a spiking checkpoint"))?;
        lif.beta = beta.unwrap_or(lif.beta);
        lif.threshold = threshold.unwrap_or(lif.threshold);
        lif.time_steps = time_steps.unwrap_or(lif.time_steps);
        lif.validate().map_err(err)?;
        let mut inner = self.inner.clone();
        inner.lif = Some(lif);
        Ok(PyCheckpoint { inner })
    }

    /// Accuracy on a `label<TAB>text` file.
    #[pyo3(signature = (path, trials=5, seed=0))]
    fn evaluate<'py>(&self, py: Python<'py>, path: PathBuf, trials: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let bundle = &self.inner;
        let report = py
            .detach(|| {
                let data = pipeline::read_split(&path, bundle)?;
                pipeline::evaluate_bundle(bundle, &data, trials, seed)
            })
            .map_err(err)?;
        report_dict(py, &report)
    }

    /// Tab-separated per-layer energy table measured on a labelled file.
    #[pyo3(signature = (path, seed=0))]
    fn energy_report(&self, py: Python<'_>, path: PathBuf, seed: u64) -> PyResult<String> {
        let bundle = &self.inner;
        py.detach(|| {
            let data = pipeline::read_split(&path, bundle)?;
            Ok(pipeline::energy_stage(bundle, &data, 1, seed)?.to_table())
        })
        .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Checkpoint(kind={:?}, vocab_size={})", self.kind(), self.vocab_size())
    }
}

/// Writes `corpus.tsv` and `vectors.txt` into `out_dir` and returns both paths.
#[pyfunction]
#[pyo3(signature = (out_dir, examples=2000, dim=16, seed=7))]
fn synth_corpus(out_dir: PathBuf, examples: usize, dim: usize, seed: u64) -> PyResult<(PathBuf, PathBuf)> {
    let corpus = synthetic_corpus(&SynthSpec {
        examples,
        dim,
        seed,
        ..Default::default()
    });
    std::fs::create_dir_all(&out_dir)?;
    let tsv = out_dir.join("corpus.tsv");
    let vectors = out_dir.join("vectors.txt");
    std::fs::write(&tsv, corpus.tsv)?;
    std::fs::write(&vectors, corpus.vectors)?;
    Ok((tsv, vectors))
}

/// Runs every stage and returns the evaluation summary.
#[pyfunction]
fn run_pipeline<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let s = py.detach(|| pipeline::run_pipeline(&cfg)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("ann", report_dict(py, &s.ann)?)?;
    d.set_item("converted", report_dict(py, &s.converted)?)?;
    match &s.finetuned {
        Some(f) => d.set_item("finetuned", report_dict(py, f)?)?,
        None => d.set_item("finetuned", py.None())?,
    }
    d.set_item("ann_mj", s.energy.ann_mj)?;
    d.set_item("snn_mj", s.energy.snn_mj)?;
    d.set_item("reduction", s.energy.reduction)?;
    d.set_item("out_dir", s.out_dir)?;
    Ok(d)
}

/// Tab-separated table of accuracy and activity for each value of `param`
/// (`h`, `beta`, `u_thr` or `T`).
#[pyfunction]
fn sweep(py: Python<'_>, config: &PyConfig, param: &str, values: Vec<f64>) -> PyResult<String> {
    let p: SweepParam = param.parse().map_err(err)?;
    let cfg = config.inner.clone();
    let rows = py.detach(|| pipeline::sweep(&cfg, p, &values)).map_err(err)?;
    Ok(pipeline::sweep_table(param, &rows))
}

/// Drives one LIF neuron with `currents`; returns spikes and membrane potentials.
#[pyfunction]
#[pyo3(signature = (currents, threshold=1.0, beta=1.0))]
fn lif_run(currents: Vec<f64>, threshold: f64, beta: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let lif = LifConfig {
        beta,
        threshold,
        ..LifConfig::default()
    };
    lif.validate().map_err(err)?;
    let mut state = LifState::<f64>::zeros(1);
    let (mut spikes, mut potential) = (Vec::new(), Vec::new());
    for i in currents {
        let (s, next) = lif_step(&state, &[i], &lif).map_err(err)?;
        spikes.push(s[0]);
        potential.push(next.potential[0]);
        state = next;
    }
    Ok((spikes, potential))
}

/// Bernoulli spike train for firing probabilities `rates` (row-major
/// `length × dim`). Returns `steps` lists of `length × dim` bits.
#[pyfunction]
#[pyo3(signature = (rates, length, dim, steps, seed=0))]
fn poisson_encode(rates: Vec<f32>, length: usize, dim: usize, steps: usize, seed: u64) -> PyResult<Vec<Vec<u8>>> {
    let key = EncodeKey::evaluation(seed, Purpose::Evaluate, 0, 0);
    let train = encode_keyed(&rates, length, dim, steps, key).map_err(err)?;
    Ok((0..steps).map(|t| train.step(t).to_vec()).collect())
}

/// Largest relative error between BPTT and finite-difference gradients over
/// `cases` random tiny networks.
#[pyfunction]
#[pyo3(signature = (cases=5, seed=0, step=1e-5, surrogate_k=25.0))]
fn gradcheck(py: Python<'_>, cases: u64, seed: u64, step: f64, surrogate_k: f64) -> PyResult<f64> {
    let s = SurrogateConfig {
        slope: surrogate_k,
        ..SurrogateConfig::default()
    };
    py.detach(|| {
        let mut worst = 0.0f64;
        for i in 0..cases {
            let case = random_tiny_case(seed + i);
            let r = grad_check_relaxed(&case.model, &case.spikes, case.target, &s, step)?;
            worst = worst.max(r.max_rel_error);
        }
        Ok(worst)
    })
    .map_err(err)
}

/// Per-layer FLOPs of one forward pass as `(layer, flops)` pairs.
#[pyfunction]
#[pyo3(signature = (embed_dim, length, filter_widths=vec![3, 4, 5], feature_maps=100, num_classes=2, neurons_per_class=10))]
fn layer_flops(
    embed_dim: usize,
    length: usize,
    filter_widths: Vec<usize>,
    feature_maps: usize,
    num_classes: usize,
    neurons_per_class: usize,
) -> PyResult<Vec<(String, f64)>> {
    let config = CnnConfig {
        filter_widths,
        feature_maps,
        neurons_per_class,
        ..CnnConfig::tailored(embed_dim, num_classes)
    };
    let layers = count_flops(&config, length).map_err(err)?;
    Ok(layers.into_iter().map(|l| (l.name, l.flops)).collect())
}

#[pymodule]
#[pyo3(name = "spiketext")]
fn spiketext_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SpikeTextError", m.py().get_type::<SpikeTextError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(lif_run, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_encode, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(layer_flops, m)?)?;
    Ok(())
}
