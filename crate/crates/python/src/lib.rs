//! Python bindings: datasets, models, training runs and the analysis helpers.

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stragglers_core::dataio::{self, IndexSet, Source, Split};
use stragglers_core::dynamics::{self, InversionReport, RunSpec, StopRule, TestEval, TrainConfig, TrajectoryLog};
use stragglers_core::error::Error;
use stragglers_core::experiment::{self, ExperimentConfig};
use stragglers_core::geometry;
use stragglers_core::network::{Activation, InitConfig, MlpModel};
use stragglers_core::optim::{OptimizerConfig, OptimizerKind};
use stragglers_core::scaling;
use stragglers_core::stragglers::OverlapStats;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::NoManifests(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn activation(name: &str) -> PyResult<Activation> {
    Activation::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown activation `{name}`")))
}

/// A standardized binary (parity) dataset.
#[pyclass(name = "Dataset", module = "stragglers", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset(dataio::Dataset);

#[pymethods]
impl PyDataset {
    /// Clustered synthetic digits, standardized.
    #[staticmethod]
    #[pyo3(signature = (size, dim=64, spread=0.3, seed=0))]
    fn synthetic(size: usize, dim: usize, spread: f64, seed: u64) -> PyResult<Self> {
        let raw = dataio::synthetic_digits(size, dim, spread, seed);
        Ok(Self(dataio::standardize(&raw, None).map_err(err)?))
    }

    /// A contiguous chunk of `size` examples from an MNIST-format directory.
    #[staticmethod]
    #[pyo3(signature = (dir, size=None, chunk=0, split="train", source="mnist"))]
    fn mnist(dir: &str, size: Option<usize>, chunk: usize, split: &str, source: &str) -> PyResult<Self> {
        let split = match split {
            "train" => Split::Train,
            "test" => Split::Test,
            other => return Err(PyValueError::new_err(format!("unknown split `{other}`"))),
        };
        let source = match source {
            "mnist" => Source::Mnist,
            "fashion" => Source::Fashion,
            "kmnist" => Source::Kmnist,
            other => return Err(PyValueError::new_err(format!("unknown source `{other}`"))),
        };
        let raw = dataio::load_mnist_family(dir, split, source).map_err(err)?;
        let raw = match size {
            Some(n) => dataio::subsample(&raw, n, chunk).map_err(err)?,
            None => raw,
        };
        Ok(Self(dataio::standardize(&raw, None).map_err(err)?))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(len={}, dim={})", self.0.len(), self.0.input_dim())
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    #[getter]
    fn labels(&self) -> Vec<i8> {
        self.0.labels.clone()
    }

    #[getter]
    fn source_index(&self) -> Vec<usize> {
        self.0.source_index.clone()
    }

    fn inputs(&self) -> Vec<Vec<f64>> {
        self.0.inputs.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    fn digest(&self) -> String {
        self.0.digest()
    }

    fn randomize_labels(&self, seed: u64) -> Self {
        Self(dataio::randomize_labels(&self.0, seed))
    }

    fn add_noise(&self, sigma: f64, seed: u64) -> PyResult<Self> {
        Ok(Self(dataio::add_noise(&self.0, sigma, seed).map_err(err)?))
    }

    /// Drops the examples whose source index is in `removed`.
    fn prune(&self, removed: Vec<usize>) -> PyResult<Self> {
        let set: IndexSet = removed.into_iter().collect();
        Ok(Self(dataio::prune(&self.0, &set).map_err(err)?))
    }
}

/// A fully connected network with a two-logit readout.
#[pyclass(name = "Model", module = "stragglers", skip_from_py_object)]
#[derive(Clone)]
struct PyModel(MlpModel);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (sizes, activation="tanh", seed=0))]
    fn new(sizes: Vec<usize>, activation: &str, seed: u64) -> PyResult<Self> {
        let act = self::activation(activation)?;
        Ok(Self(MlpModel::init(&sizes, act, &InitConfig::with_seed(seed)).map_err(err)?))
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.0.sizes()
    }

    fn parameter_count(&self) -> usize {
        self.0.parameter_count()
    }

    /// Summed loss over the batch.
    fn loss(&self, x: Vec<Vec<f64>>, labels: Vec<i8>) -> PyResult<f64> {
        self.0.loss(matrix(x)?.view(), &labels).map_err(err)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<i8>> {
        Ok(self.0.forward_batch(matrix(x)?.view()).map_err(err)?.predictions())
    }

    fn error_rate(&self, ds: &PyDataset) -> PyResult<f64> {
        dynamics::error_rate(&self.0, &ds.0).map_err(err)
    }

    /// `(R+, R-, D)` of the class manifolds at hidden `layer` (1-based).
    #[pyo3(signature = (ds, layer=1))]
    fn metrics(&self, ds: &PyDataset, layer: usize) -> PyResult<(f64, f64, f64)> {
        let m = geometry::metric_triple(&self.0, &ds.0, layer).map_err(err)?;
        Ok((m.r_plus, m.r_minus, m.d))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save_checkpoint(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self(MlpModel::load_checkpoint(path).map_err(err)?))
    }
}

/// Per-epoch record of one training run.
#[pyclass(name = "Trajectory", module = "stragglers")]
struct PyTrajectory(TrajectoryLog);

fn report_dict<'py>(py: Python<'py>, r: &InversionReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("phi", r.phi)?;
    d.set_item("converged", r.converged)?;
    d.set_item("t_r_plus", r.r_plus.epoch)?;
    d.set_item("t_r_minus", r.r_minus.epoch)?;
    d.set_item("t_d", r.d.epoch)?;
    d.set_item("straggler_epoch", r.straggler_epoch)?;
    d.set_item("stragglers", r.stragglers.iter().collect::<Vec<_>>())?;
    Ok(d)
}

#[pymethods]
impl PyTrajectory {
    fn __len__(&self) -> usize {
        self.0.records.len()
    }

    #[getter]
    fn epochs(&self) -> Vec<usize> {
        self.0.records.iter().map(|r| r.epoch).collect()
    }

    #[getter]
    fn eps_tr(&self) -> Vec<f64> {
        self.0.records.iter().map(|r| r.eps_tr).collect()
    }

    #[getter]
    fn eps_test(&self) -> Vec<Option<f64>> {
        self.0.records.iter().map(|r| r.eps_test).collect()
    }

    #[getter]
    fn r_plus(&self) -> Vec<Option<f64>> {
        self.0.records.iter().map(|r| r.metrics.map(|m| m.r_plus)).collect()
    }

    #[getter]
    fn r_minus(&self) -> Vec<Option<f64>> {
        self.0.records.iter().map(|r| r.metrics.map(|m| m.r_minus)).collect()
    }

    #[getter]
    fn d(&self) -> Vec<Option<f64>> {
        self.0.records.iter().map(|r| r.metrics.map(|m| m.d)).collect()
    }

    /// Extrema of the three metrics and the straggler set at the `R+` minimum.
    #[pyo3(signature = (min_prominence=dynamics::DEFAULT_MIN_PROMINENCE))]
    fn inversion<'py>(&self, py: Python<'py>, min_prominence: f64) -> PyResult<Bound<'py, PyDict>> {
        let r = dynamics::detect_inversion_with(&self.0, min_prominence).map_err(err)?;
        report_dict(py, &r)
    }

    /// Source indices misclassified at `epoch`.
    fn misclassified(&self, epoch: usize) -> PyResult<Vec<usize>> {
        self.0
            .misclassified_at(epoch)
            .map(|s| s.iter().collect())
            .ok_or_else(|| PyValueError::new_err(format!("no record for epoch {epoch}")))
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.0.write_csv(path).map_err(err)
    }
}

fn optimizer(kind: &str, lr: f64, mu: f64, weight_decay: f64, batch_size: Option<usize>) -> PyResult<OptimizerConfig> {
    let kind = match kind {
        "gd" => OptimizerKind::Gd,
        "momentum" => OptimizerKind::Momentum { mu },
        "weight_decay" => OptimizerKind::WeightDecay {
            lambda: weight_decay,
            decay_biases: true,
        },
        "sgd" => OptimizerKind::Sgd {
            batch_size: batch_size.ok_or_else(|| PyValueError::new_err("sgd needs batch_size"))?,
        },
        "adam" => OptimizerKind::adam(),
        other => return Err(PyValueError::new_err(format!("unknown optimizer `{other}`"))),
    };
    Ok(OptimizerConfig::with_kind(kind, lr))
}

/// Trains one network and returns `(model, trajectory)`. Releases the GIL.
#[pyfunction]
#[pyo3(signature = (
    train_set, hidden, activation="tanh", optimizer="gd", learning_rate=0.2, epochs=150, seed=0,
    test_set=None, mu=0.9, weight_decay=0.0, batch_size=None, stop_at_zero_error=false
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    train_set: &PyDataset,
    hidden: Vec<usize>,
    activation: &str,
    optimizer: &str,
    learning_rate: f64,
    epochs: usize,
    seed: u64,
    test_set: Option<&PyDataset>,
    mu: f64,
    weight_decay: f64,
    batch_size: Option<usize>,
    stop_at_zero_error: bool,
) -> PyResult<(PyModel, PyTrajectory)> {
    let mut cfg = TrainConfig::new(self::optimizer(optimizer, learning_rate, mu, weight_decay, batch_size)?, epochs);
    if !stop_at_zero_error {
        cfg.stop_rule = StopRule::MaxEpochs;
    }
    if test_set.is_none() {
        cfg.test_eval = TestEval::Never;
    }
    let spec = RunSpec {
        hidden,
        activation: self::activation(activation)?,
        init: InitConfig::default(),
        train: cfg,
    };
    let (train_ds, test_ds) = (&train_set.0, test_set.map(|t| &t.0));
    let (model, log) = py.detach(|| spec.run(train_ds, test_ds, seed)).map_err(err)?;
    Ok((PyModel(model), PyTrajectory(log)))
}

/// `(R+, R-, D)` of raw hidden representations with `+1/-1` labels.
#[pyfunction]
fn metrics_from_hidden(hidden: Vec<Vec<f64>>, labels: Vec<i8>) -> PyResult<(f64, f64, f64)> {
    let m = geometry::metrics_from_hidden(matrix(hidden)?.view(), &labels).map_err(err)?;
    Ok((m.r_plus, m.r_minus, m.d))
}

/// Overlap statistics of straggler-set pairs against a size-matched random null.
#[pyfunction]
#[pyo3(signature = (pairs, population, null_draws=10_000, seed=0))]
fn overlap_stats<'py>(
    py: Python<'py>,
    pairs: Vec<(Vec<usize>, Vec<usize>)>,
    population: usize,
    null_draws: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let sets: Vec<(IndexSet, IndexSet)> = pairs
        .into_iter()
        .map(|(a, b)| (a.into_iter().collect(), b.into_iter().collect()))
        .collect();
    let st = OverlapStats::from_sets(&sets, population, null_draws, seed);
    let d = PyDict::new(py);
    d.set_item("mean_m", st.mean_m)?;
    d.set_item("sd_m", st.sd_m)?;
    d.set_item("mean_null", st.mean_null)?;
    d.set_item("analytic_null_mean", st.analytic_null_mean())?;
    d.set_item("z", st.z)?;
    Ok(d)
}

/// Fits `phi(P) = phi_inf * (1 - (P / p0)^-gamma)` to `(P, phi, sigma)` triples.
#[pyfunction]
#[pyo3(signature = (points, restarts=scaling::DEFAULT_RESTARTS, seed=0))]
fn fit_phi<'py>(
    py: Python<'py>,
    points: Vec<(f64, f64, Option<f64>)>,
    restarts: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let fit = scaling::fit_phi(&points, restarts, seed).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("phi_inf", fit.phi_inf)?;
    d.set_item("p0", fit.p0)?;
    d.set_item("gamma", fit.gamma)?;
    d.set_item("sum_sq_residual", fit.sum_sq_residual)?;
    d.set_item("weighted", fit.weighted)?;
    Ok(d)
}

/// Runs the experiment in a TOML config and returns its output directory.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_path: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::load(config_path).map_err(err)?;
    let outcome = py.detach(|| experiment::run_experiment(&cfg)).map_err(err)?;
    Ok(outcome.dir.display().to_string())
}

/// Text summary of every experiment directory under `dir`.
#[pyfunction]
fn summarize(dir: &str) -> PyResult<String> {
    Ok(experiment::summarize(dir).map_err(err)?.0)
}

#[pymodule]
fn stragglers(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_from_hidden, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_stats, m)?)?;
    m.add_function(wrap_pyfunction!(fit_phi, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    Ok(())
}
