//! Declarative experiment configuration (TOML).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{hex, Source};
use crate::dynamics::{RunSpec, StopRule, TestEval, TrainConfig, DEFAULT_MAX_EPOCHS, DEFAULT_MIN_PROMINENCE};
use crate::error::{Error, Result};
use crate::network::{Activation, InitConfig};
use crate::optim::OptimizerConfig;
use crate::stragglers::PruneMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Trajectory,
    OptimizerSweep,
    SubsampleSweep,
    RandomLabels,
    PruneRetrain,
    Zscore,
    NoisyTest,
    PhiScaling,
    ArchSweep,
    ActivationSweep,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 10] = [
        ExperimentKind::Trajectory,
        ExperimentKind::OptimizerSweep,
        ExperimentKind::SubsampleSweep,
        ExperimentKind::RandomLabels,
        ExperimentKind::PruneRetrain,
        ExperimentKind::Zscore,
        ExperimentKind::NoisyTest,
        ExperimentKind::PhiScaling,
        ExperimentKind::ArchSweep,
        ExperimentKind::ActivationSweep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Trajectory => "trajectory",
            ExperimentKind::OptimizerSweep => "optimizer-sweep",
            ExperimentKind::SubsampleSweep => "subsample-sweep",
            ExperimentKind::RandomLabels => "random-labels",
            ExperimentKind::PruneRetrain => "prune-retrain",
            ExperimentKind::Zscore => "zscore",
            ExperimentKind::NoisyTest => "noisy-test",
            ExperimentKind::PhiScaling => "phi-scaling",
            ExperimentKind::ArchSweep => "arch-sweep",
            ExperimentKind::ActivationSweep => "activation-sweep",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: Source,
    /// Directory with the IDX files (or CIFAR-10 batches). Unused for `synthetic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Training-set size P.
    pub size: usize,
    #[serde(default)]
    pub chunk: usize,
    /// Gaussian pixel-noise levels applied to the standardized test set.
    #[serde(default = "zero_noise")]
    pub noise_sigmas: Vec<f64>,
    /// Number of test examples to use; all when absent. Zero disables the test set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,
    /// Dimension of the generated inputs when `source = "synthetic"`.
    #[serde(default = "synthetic_dim")]
    pub synthetic_dim: usize,
    /// Standardized datasets are cached here when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

fn zero_noise() -> Vec<f64> {
    vec![0.0]
}

fn synthetic_dim() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Widths of the hidden layers.
    pub hidden: Vec<usize>,
    #[serde(default = "tanh")]
    pub activation: String,
    /// Negative-side slope for `leaky_relu`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leaky_slope: Option<f64>,
    #[serde(default)]
    pub init: InitConfig,
    /// Hidden layer whose class manifolds are measured, counted from 1.
    #[serde(default = "one")]
    pub metric_layer: usize,
}

fn tanh() -> String {
    "tanh".into()
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Number of seeds, taken sequentially from `seed_root`.
    #[serde(default = "one")]
    pub seeds: usize,
    #[serde(default)]
    pub seed_root: u64,
    #[serde(default = "max_epochs")]
    pub max_epochs: usize,
    #[serde(default)]
    pub stop_rule: StopRule,
    #[serde(default)]
    pub test_eval: TestEval,
    /// Relative prominence an extremum needs to count as an inversion.
    #[serde(default = "min_prominence")]
    pub min_prominence: f64,
    /// Also write the misclassified set of every epoch for every run.
    #[serde(default)]
    pub write_misclassified: bool,
    pub output_dir: PathBuf,
}

fn max_epochs() -> usize {
    DEFAULT_MAX_EPOCHS
}

fn min_prominence() -> f64 {
    DEFAULT_MIN_PROMINENCE
}

/// Parameters of the individual experiment kinds; each reads only its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub optimizers: Vec<OptimizerConfig>,
    #[serde(default)]
    pub chunks: Vec<usize>,
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Training-error levels for pruning and conservation.
    #[serde(default)]
    pub error_grid: Vec<f64>,
    /// Also evaluate at each run's own inversion point.
    #[serde(default = "yes")]
    pub include_inversion: bool,
    #[serde(default = "both_modes")]
    pub prune_modes: Vec<PruneMode>,
    #[serde(default)]
    pub architectures: Vec<Vec<usize>>,
    #[serde(default)]
    pub activations: Vec<String>,
    #[serde(default = "pairs")]
    pub pairs: usize,
    #[serde(default = "null_draws")]
    pub null_draws: usize,
    #[serde(default = "restarts")]
    pub restarts: usize,
}

fn yes() -> bool {
    true
}

fn both_modes() -> Vec<PruneMode> {
    vec![PruneMode::Straggler, PruneMode::Random]
}

fn pairs() -> usize {
    20
}

fn null_draws() -> usize {
    10_000
}

fn restarts() -> usize {
    crate::scaling::DEFAULT_RESTARTS
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            optimizers: Vec::new(),
            chunks: Vec::new(),
            sizes: Vec::new(),
            error_grid: Vec::new(),
            include_inversion: true,
            prune_modes: both_modes(),
            architectures: Vec::new(),
            activations: Vec::new(),
            pairs: pairs(),
            null_draws: null_draws(),
            restarts: restarts(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn bad<T>(field: &str, msg: impl Into<String>) -> Result<T> {
    Err(Error::config(field, msg))
}

pub fn parse_activation(name: &str, leaky_slope: Option<f64>, field: &str) -> Result<Activation> {
    let act = Activation::from_name(name)
        .ok_or_else(|| Error::config(field, format!("unknown activation `{name}`")))?;
    Ok(match (act, leaky_slope) {
        (Activation::LeakyRelu { .. }, Some(slope)) => Activation::LeakyRelu { slope },
        (a, _) => a,
    })
}

impl ExperimentConfig {
    /// Parses TOML; type errors carry the path of the offending field.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(&path, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    /// SHA-256 of the canonical JSON form; independent of key order in the source.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex(&Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn activation(&self) -> Result<Activation> {
        parse_activation(&self.model.activation, self.model.leaky_slope, "model.activation")
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.run.seeds as u64).map(|k| self.run.seed_root + k).collect()
    }

    pub fn train_config(&self, optimizer: OptimizerConfig) -> TrainConfig {
        TrainConfig {
            optimizer,
            max_epochs: self.run.max_epochs,
            stop_rule: self.run.stop_rule,
            metric_layer: self.model.metric_layer,
            test_eval: self.run.test_eval,
        }
    }

    pub fn run_spec(&self) -> Result<RunSpec> {
        Ok(RunSpec {
            hidden: self.model.hidden.clone(),
            activation: self.activation()?,
            init: self.model.init,
            train: self.train_config(self.optimizer),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.size < 2 {
            return bad("dataset.size", "must be at least 2");
        }
        if d.source != Source::Synthetic && d.path.is_none() {
            return bad("dataset.path", format!("required for source `{}`", d.source));
        }
        if let Some(s) = d.noise_sigmas.iter().find(|s| !(**s >= 0.0)) {
            return bad("dataset.noise_sigmas", format!("noise level {s} is negative"));
        }
        if d.synthetic_dim == 0 {
            return bad("dataset.synthetic_dim", "must be positive");
        }
        let m = &self.model;
        if m.hidden.is_empty() || m.hidden.contains(&0) {
            return bad("model.hidden", "needs at least one layer, all widths positive");
        }
        self.activation()?;
        if m.metric_layer == 0 || m.metric_layer > m.hidden.len() {
            return bad("model.metric_layer", format!("must lie in 1..={}", m.hidden.len()));
        }
        if !(m.init.variance_scale > 0.0) {
            return bad("model.init.variance_scale", "must be positive");
        }
        self.optimizer
            .validate(usize::MAX)
            .or_else(|e| bad("optimizer", e.to_string()))?;
        let r = &self.run;
        if r.seeds == 0 {
            return bad("run.seeds", "must be at least 1");
        }
        if r.max_epochs == 0 {
            return bad("run.max_epochs", "must be at least 1");
        }
        if !(0.0..1.0).contains(&r.min_prominence) {
            return bad("run.min_prominence", "must lie in [0, 1)");
        }
        let s = &self.sweep;
        for (k, o) in s.optimizers.iter().enumerate() {
            o.validate(usize::MAX)
                .or_else(|e| bad(&format!("sweep.optimizers[{k}]"), e.to_string()))?;
        }
        for (k, a) in s.activations.iter().enumerate() {
            parse_activation(a, m.leaky_slope, &format!("sweep.activations[{k}]"))?;
        }
        for (k, h) in s.architectures.iter().enumerate() {
            if h.is_empty() || h.contains(&0) {
                return bad(&format!("sweep.architectures[{k}]"), "needs positive widths");
            }
        }
        if let Some(e) = s.error_grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return bad("sweep.error_grid", format!("error level {e} outside [0, 1]"));
        }
        let need = |ok: bool, field: &str, msg: &str| if ok { Ok(()) } else { bad(field, msg) };
        match self.experiment {
            ExperimentKind::OptimizerSweep => need(!s.optimizers.is_empty(), "sweep.optimizers", "list at least one optimizer"),
            ExperimentKind::SubsampleSweep => need(!s.chunks.is_empty(), "sweep.chunks", "list at least one chunk"),
            ExperimentKind::PhiScaling => need(!s.sizes.is_empty(), "sweep.sizes", "list at least one size"),
            ExperimentKind::ArchSweep => need(!s.architectures.is_empty(), "sweep.architectures", "list at least one architecture"),
            ExperimentKind::ActivationSweep => need(!s.activations.is_empty(), "sweep.activations", "list at least one activation"),
            ExperimentKind::PruneRetrain | ExperimentKind::NoisyTest => {
                need(!s.prune_modes.is_empty(), "sweep.prune_modes", "list at least one mode")?;
                need(s.include_inversion || !s.error_grid.is_empty(), "sweep.error_grid", "no levels to prune at")
            }
            ExperimentKind::Zscore => {
                need(s.pairs >= 2, "sweep.pairs", "need at least 2 run pairs")?;
                need(s.null_draws > 0, "sweep.null_draws", "must be positive")
            }
            _ => Ok(()),
        }
    }
}
