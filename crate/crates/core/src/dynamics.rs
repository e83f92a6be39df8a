//! Instrumented training: every epoch records the train/test error, the
//! metric triple of the first hidden layer and the set of misclassified
//! training examples. The log is then reparameterized by training error and
//! scanned for the inversion epoch.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, IndexSet};
use crate::error::{Error, Result};
use crate::geometry::{metrics_from_hidden, Metric, MetricTriple};
use crate::io::write_atomic;
use crate::network::{loss_from_logits, Activation, InitConfig, MlpModel};
use crate::optim::{run_epoch, OptimizerConfig, OptimizerState};

/// Fixed-size bitset over positions in the training set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitset {
    words: Vec<u64>,
    len: usize,
}

impl Bitset {
    pub fn new(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(k, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(k * 64 + bit)
            })
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub eps_tr: f64,
    /// `None` when the test set was not evaluated at this epoch.
    pub eps_test: Option<f64>,
    /// `None` flags an epoch whose representations contained a zero vector.
    pub metrics: Option<MetricTriple>,
    /// Positions (not source indices) of misclassified training examples.
    pub misclassified: Bitset,
    /// Summed training loss.
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    MaxEpochs,
    /// Stop after this many consecutive records at zero training error.
    ZeroError { patience: usize },
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule::ZeroError { patience: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestEval {
    #[default]
    EveryEpoch,
    FinalOnly,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub max_epochs: usize,
    #[serde(default)]
    pub stop_rule: StopRule,
    /// Hidden layer whose representations are measured, counted from 1.
    #[serde(default = "first_layer")]
    pub metric_layer: usize,
    #[serde(default)]
    pub test_eval: TestEval,
}

fn first_layer() -> usize {
    1
}

pub const DEFAULT_MAX_EPOCHS: usize = 5000;

impl TrainConfig {
    pub fn new(optimizer: OptimizerConfig, max_epochs: usize) -> Self {
        Self {
            optimizer,
            max_epochs,
            stop_rule: StopRule::default(),
            metric_layer: 1,
            test_eval: TestEval::EveryEpoch,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub seed: u64,
    pub config_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    ZeroError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<EpochRecord>,
    /// `source_index` of each training position.
    pub index_map: Vec<usize>,
    pub meta: RunMeta,
    pub stop_reason: StopReason,
}

impl TrajectoryLog {
    pub fn train_size(&self) -> usize {
        self.index_map.len()
    }

    pub fn final_record(&self) -> &EpochRecord {
        self.records.last().expect("logs always hold the epoch-0 record")
    }

    pub fn record_at(&self, epoch: usize) -> Option<&EpochRecord> {
        self.records
            .binary_search_by_key(&epoch, |r| r.epoch)
            .ok()
            .map(|i| &self.records[i])
    }

    /// Misclassified source indices at `epoch`.
    pub fn misclassified_at(&self, epoch: usize) -> Option<IndexSet> {
        self.record_at(epoch).map(|r| {
            r.misclassified
                .iter_ones()
                .map(|pos| self.index_map[pos])
                .collect()
        })
    }

    /// Epochs whose metrics could not be computed.
    pub fn flagged_epochs(&self) -> Vec<usize> {
        self.records
            .iter()
            .filter(|r| r.metrics.is_none())
            .map(|r| r.epoch)
            .collect()
    }

    pub fn min_eps_tr(&self) -> f64 {
        self.records.iter().map(|r| r.eps_tr).fold(f64::INFINITY, f64::min)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("epoch,eps_tr,eps_test,r_plus,r_minus,d\n");
        let num = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.16e}"));
        for r in &self.records {
            let m = r.metrics;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch,
                num(Some(r.eps_tr)),
                num(r.eps_test),
                num(m.map(|m| m.r_plus)),
                num(m.map(|m| m.r_minus)),
                num(m.map(|m| m.d)),
            )
            .unwrap();
        }
        write_atomic(path, out.as_bytes())
    }

    /// One line per record: the epoch followed by the sorted misclassified
    /// source indices, space separated.
    pub fn write_misclassified(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for r in &self.records {
            let mut ids: Vec<usize> = r.misclassified.iter_ones().map(|p| self.index_map[p]).collect();
            ids.sort_unstable();
            write!(out, "{}", r.epoch).unwrap();
            for i in ids {
                write!(out, " {i}").unwrap();
            }
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }
}

struct Evaluation {
    eps: f64,
    misclassified: Bitset,
    metrics: Option<MetricTriple>,
    loss: f64,
}

fn evaluate_pass(
    pass: &crate::network::ForwardPass,
    labels: &[i8],
    metric_layer: Option<usize>,
) -> Evaluation {
    let mut misclassified = Bitset::new(labels.len());
    for (i, (p, &y)) in pass.predictions().into_iter().zip(labels).enumerate() {
        if p != y {
            misclassified.set(i);
        }
    }
    let eps = misclassified.count_ones() as f64 / labels.len() as f64;
    let metrics = metric_layer.and_then(|l| metrics_from_hidden(pass.hidden[l - 1].view(), labels).ok());
    Evaluation {
        eps,
        misclassified,
        metrics,
        loss: loss_from_logits(&pass.logits, labels),
    }
}

/// Error rate of `model` on `ds` by direct prediction counting.
pub fn error_rate(model: &MlpModel, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let pass = model.forward_batch(ds.inputs.view())?;
    Ok(evaluate_pass(&pass, &ds.labels, None).eps)
}

/// Trains `model` on `train`, recording epoch 0 (before any update) and every
/// epoch after it until `max_epochs` or the stop rule fires.
pub fn train(
    mut model: MlpModel,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &TrainConfig,
    meta: RunMeta,
) -> Result<(MlpModel, TrajectoryLog)> {
    if cfg.max_epochs == 0 {
        return Err(Error::config("max_epochs", "must be at least 1"));
    }
    if train.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if train.input_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: train.input_dim(),
        });
    }
    if let Some(t) = test {
        if t.input_dim() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                found: t.input_dim(),
            });
        }
    }
    if cfg.metric_layer == 0 || cfg.metric_layer > model.hidden_layers() {
        return Err(Error::LayerOutOfRange {
            layer: cfg.metric_layer,
            hidden: model.hidden_layers(),
        });
    }
    cfg.optimizer.validate(train.len())?;

    let mut state = OptimizerState::new(&model, &cfg.optimizer);
    let mut records = Vec::with_capacity(cfg.max_epochs.min(DEFAULT_MAX_EPOCHS) + 1);
    let mut zero_streak = 0usize;
    let mut epoch = 0usize;
    let stop_reason = loop {
        let pass = model.forward_batch(train.inputs.view())?;
        let eval = evaluate_pass(&pass, &train.labels, Some(cfg.metric_layer));
        if !eval.loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: eval.loss,
            });
        }
        zero_streak = if eval.eps == 0.0 { zero_streak + 1 } else { 0 };
        let stop = match cfg.stop_rule {
            StopRule::ZeroError { patience } if patience > 0 && zero_streak >= patience => {
                Some(StopReason::ZeroError)
            }
            _ if epoch >= cfg.max_epochs => Some(StopReason::MaxEpochs),
            _ => None,
        };
        let eps_test = match (test, cfg.test_eval) {
            (Some(t), TestEval::EveryEpoch) => Some(error_rate(&model, t)?),
            (Some(t), TestEval::FinalOnly) if stop.is_some() => Some(error_rate(&model, t)?),
            _ => None,
        };
        records.push(EpochRecord {
            epoch,
            eps_tr: eval.eps,
            eps_test,
            metrics: eval.metrics,
            misclassified: eval.misclassified,
            loss: eval.loss,
        });
        if let Some(reason) = stop {
            break reason;
        }
        run_epoch(
            &mut model,
            train.inputs.view(),
            &train.labels,
            &mut state,
            &cfg.optimizer,
            epoch as u64,
            Some(&pass),
        )?;
        epoch += 1;
    };

    Ok((
        model,
        TrajectoryLog {
            records,
            index_map: train.source_index.clone(),
            meta,
            stop_reason,
        },
    ))
}

/// Architecture, initialization and training settings of one run; the seed
/// is supplied per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init: InitConfig,
    pub train: TrainConfig,
}

impl RunSpec {
    /// Builds the model for `seed` and trains it. The seed drives both the
    /// initialization and the minibatch shuffles.
    pub fn run(&self, train_set: &Dataset, test_set: Option<&Dataset>, seed: u64) -> Result<(MlpModel, TrajectoryLog)> {
        let mut sizes = vec![train_set.input_dim()];
        sizes.extend(&self.hidden);
        sizes.push(2);
        let init = InitConfig { seed, ..self.init };
        let model = MlpModel::init(&sizes, self.activation, &init)?;
        let mut cfg = self.train;
        cfg.optimizer.shuffle_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ self.train.optimizer.shuffle_seed;
        train(model, train_set, test_set, &cfg, RunMeta { seed, config_digest: String::new() })
    }

    /// Runs every seed, in parallel when the global thread pool allows it.
    /// Results come back in seed order.
    pub fn run_seeds(
        &self,
        train_set: &Dataset,
        test_set: Option<&Dataset>,
        seeds: &[u64],
    ) -> Vec<Result<(MlpModel, TrajectoryLog)>> {
        seeds
            .par_iter()
            .map(|&s| self.run(train_set, test_set, s))
            .collect()
    }
}

/// Centered moving average over `window` points; the window shrinks at the
/// ends so the output has the input's length.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let half_lo = (window - 1) / 2;
    let half_hi = window / 2;
    (0..xs.len())
        .map(|i| {
            let lo = i.saturating_sub(half_lo);
            let hi = (i + half_hi + 1).min(xs.len());
            xs[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Every interior local minimum of `values` whose topographic prominence,
/// relative to the range of `values`, is at least `min_prominence`.
/// Returns `(index, relative prominence)` pairs. Plateaus count once, at
/// their first point.
pub fn interior_minima(values: &[f64], min_prominence: f64) -> Vec<(usize, f64)> {
    let n = values.len();
    if n < 3 {
        return Vec::new();
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    // Highest point passed before reaching terrain lower than `v`; `None` if
    // the side never drops below `v`.
    let col = |side: &mut dyn Iterator<Item = f64>, v: f64| -> (f64, bool) {
        let mut peak = v;
        for x in side {
            if x < v {
                return (peak, true);
            }
            peak = peak.max(x);
        }
        (peak, false)
    };
    let mut out = Vec::new();
    for i in 1..n - 1 {
        let v = values[i];
        if !(v < values[i - 1]) {
            continue;
        }
        let mut j = i + 1;
        while j < n && values[j] == v {
            j += 1;
        }
        if j == n || values[j] < v {
            continue;
        }
        let (left, left_lower) = col(&mut values[..i].iter().rev().copied(), v);
        let (right, right_lower) = col(&mut values[j..].iter().copied(), v);
        let key = match (left_lower, right_lower) {
            (true, true) => left.min(right),
            (true, false) => left,
            (false, true) => right,
            (false, false) => left.min(right),
        };
        let prominence = (key - v) / range;
        if prominence >= min_prominence {
            out.push((i, prominence));
        }
    }
    out
}

/// Fraction of consecutive steps with `x[i+1] >= x[i]`.
pub fn nondecreasing_fraction(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 1.0;
    }
    let up = xs.windows(2).filter(|w| w[1] >= w[0]).count();
    up as f64 / (xs.len() - 1) as f64
}

/// First epoch whose training error is at most `eps`.
pub fn epoch_at_error(log: &TrajectoryLog, eps: f64) -> Result<usize> {
    log.records
        .iter()
        .find(|r| r.eps_tr <= eps)
        .map(|r| r.epoch)
        .ok_or(Error::NotReached {
            target: eps,
            minimum: log.min_eps_tr(),
        })
}

/// Smallest prominence, relative to the metric's range, for an extremum to
/// count as an inversion rather than noise.
pub const DEFAULT_MIN_PROMINENCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremum {
    pub metric: Metric,
    pub epoch: usize,
    pub eps_tr: f64,
    pub value: f64,
    /// Depth of the extremum below (or above) the lower of its two flanking
    /// peaks, divided by the range of the series. Zero at a boundary.
    pub prominence: f64,
    pub interior: bool,
}

impl Extremum {
    pub fn qualifies(&self, min_prominence: f64) -> bool {
        self.interior && self.prominence >= min_prominence
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionReport {
    pub r_plus: Extremum,
    pub r_minus: Extremum,
    pub d: Extremum,
    /// Mean training error at the three extrema.
    pub phi: f64,
    /// Epoch at which `stragglers` was taken (the `R+` extremum).
    pub straggler_epoch: usize,
    pub stragglers: IndexSet,
    /// False when any extremum sits on the boundary or fails the prominence guard.
    pub converged: bool,
}

impl InversionReport {
    pub fn extrema(&self) -> [&Extremum; 3] {
        [&self.r_plus, &self.r_minus, &self.d]
    }

    pub fn qualifies(&self, min_prominence: f64) -> bool {
        self.extrema().iter().all(|e| e.qualifies(min_prominence))
    }
}

/// Locates the global extremum of one metric series (minimum for the radii,
/// maximum for the distance), ties going to the earliest epoch.
pub fn find_extremum(log: &TrajectoryLog, metric: Metric) -> Result<Extremum> {
    let series: Vec<(usize, f64, f64)> = log
        .records
        .iter()
        .filter_map(|r| r.metrics.map(|m| (r.epoch, r.eps_tr, m.get(metric))))
        .collect();
    if series.len() < 3 {
        return Err(Error::ShortTrajectory(series.len()));
    }
    // Work with a series to be minimised.
    let sign = if metric == Metric::D { -1.0 } else { 1.0 };
    let values: Vec<f64> = series.iter().map(|s| sign * s.2).collect();
    let mut k = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[k] {
            k = i;
        }
    }
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - values[k];
    let interior = k > 0 && k + 1 < values.len();
    let prominence = if interior && range > 0.0 {
        let left = values[..=k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let right = values[k..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (left.min(right) - values[k]) / range
    } else {
        0.0
    };
    Ok(Extremum {
        metric,
        epoch: series[k].0,
        eps_tr: series[k].1,
        value: series[k].2,
        prominence,
        interior,
    })
}

pub fn detect_inversion(log: &TrajectoryLog) -> Result<InversionReport> {
    detect_inversion_with(log, DEFAULT_MIN_PROMINENCE)
}

pub fn detect_inversion_with(log: &TrajectoryLog, min_prominence: f64) -> Result<InversionReport> {
    let r_plus = find_extremum(log, Metric::RPlus)?;
    let r_minus = find_extremum(log, Metric::RMinus)?;
    let d = find_extremum(log, Metric::D)?;
    let phi = (r_plus.eps_tr + r_minus.eps_tr + d.eps_tr) / 3.0;
    let stragglers = log
        .misclassified_at(r_plus.epoch)
        .expect("extremum epochs come from the log");
    let converged = [r_plus, r_minus, d].iter().all(|e| e.qualifies(min_prominence));
    Ok(InversionReport {
        r_plus,
        r_minus,
        d,
        phi,
        straggler_epoch: r_plus.epoch,
        stragglers,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub eps_tr: f64,
    pub epoch: usize,
    pub metrics: Option<MetricTriple>,
}

/// Metrics as a step function of training error: one point per distinct
/// error level reached, taken at the first epoch reaching that level.
/// Sorted by decreasing error.
pub fn reparameterize(log: &TrajectoryLog) -> Vec<CurvePoint> {
    let mut levels: Vec<f64> = log.records.iter().map(|r| r.eps_tr).collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    levels
        .into_iter()
        .map(|eps| {
            let r = log
                .records
                .iter()
                .find(|r| r.eps_tr <= eps)
                .expect("level comes from the log");
            CurvePoint {
                eps_tr: eps,
                epoch: r.epoch,
                metrics: r.metrics,
            }
        })
        .collect()
}
