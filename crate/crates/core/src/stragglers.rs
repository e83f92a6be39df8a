//! Straggler sets and the experiments built on them: conservation of their
//! identity across runs against a hypergeometric null, retraining on pruned
//! training sets, and their position relative to the class centres.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataio::{add_noise, prune, Dataset, IndexSet};
use crate::dynamics::{detect_inversion, epoch_at_error, error_rate, InversionReport, RunSpec, TrajectoryLog};
use crate::error::{Error, Result};
use crate::geometry::MetricTriple;
use crate::io::write_atomic;

/// Where along a trajectory a misclassified set is taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum At {
    Epoch(usize),
    /// First epoch whose training error is at most this level.
    Error(f64),
    /// The run's own inversion epoch.
    Inversion,
}

/// Misclassified source indices of `log` at the requested point.
pub fn straggler_set(log: &TrajectoryLog, at: At) -> Result<IndexSet> {
    let epoch = match at {
        At::Epoch(e) => e,
        At::Error(eps) => epoch_at_error(log, eps)?,
        At::Inversion => detect_inversion(log)?.straggler_epoch,
    };
    log.misclassified_at(epoch).ok_or(Error::NotReached {
        target: epoch as f64,
        minimum: log.final_record().epoch as f64,
    })
}

/// Sorted, newline-delimited source indices, named after the dataset digest
/// and the level tag (e.g. `eps0.0950`).
pub fn write_straggler_list(dir: impl AsRef<Path>, dataset_digest: &str, level: &str, set: &IndexSet) -> Result<PathBuf> {
    let path = dir.as_ref().join(format!("stragglers_{}_{level}.txt", &dataset_digest[..dataset_digest.len().min(16)]));
    let mut body = String::new();
    for i in set.iter() {
        body.push_str(&i.to_string());
        body.push('\n');
    }
    write_atomic(&path, body.as_bytes())?;
    Ok(path)
}

pub fn read_straggler_list(path: impl AsRef<Path>) -> Result<IndexSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<usize>()
                .map_err(|e| Error::Cache(format!("{}: {e}", path.display())))
        })
        .collect()
}

pub fn overlap(a: &IndexSet, b: &IndexSet) -> usize {
    a.intersection_len(b)
}

/// Overlap of two uniform random subsets of `0..population` with the given sizes.
pub fn null_overlap(population: usize, size_a: usize, size_b: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut marked = vec![false; population];
    for i in sample(rng, population, size_a.min(population)) {
        marked[i] = true;
    }
    sample(rng, population, size_b.min(population))
        .into_iter()
        .filter(|&i| marked[i])
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    /// `|S0 ∩ S1|` for each run pair.
    pub m_samples: Vec<usize>,
    /// Overlaps of size-matched random subsets.
    pub null_samples: Vec<usize>,
    /// `(|S0|, |S1|)` for each run pair.
    pub set_sizes: Vec<(usize, usize)>,
    pub population: usize,
    pub mean_m: f64,
    pub sd_m: f64,
    pub mean_null: f64,
    pub sd_null: f64,
    /// `(<M> - <M^>) / sd(M)`; `None` when `sd(M) = 0`.
    pub z: Option<f64>,
}

fn mean_sd(xs: &[usize]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl OverlapStats {
    /// Null draws cycle through the pairs' set sizes.
    pub fn from_sets(pairs: &[(IndexSet, IndexSet)], population: usize, null_draws: usize, seed: u64) -> Self {
        let m_samples: Vec<usize> = pairs.iter().map(|(a, b)| overlap(a, b)).collect();
        let set_sizes: Vec<(usize, usize)> = pairs.iter().map(|(a, b)| (a.len(), b.len())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let null_samples: Vec<usize> = if set_sizes.is_empty() {
            Vec::new()
        } else {
            (0..null_draws)
                .map(|k| {
                    let (a, b) = set_sizes[k % set_sizes.len()];
                    null_overlap(population, a, b, &mut rng)
                })
                .collect()
        };
        let (mean_m, sd_m) = mean_sd(&m_samples);
        let (mean_null, sd_null) = mean_sd(&null_samples);
        let z = (sd_m > 0.0).then(|| (mean_m - mean_null) / sd_m);
        Self {
            m_samples,
            null_samples,
            set_sizes,
            population,
            mean_m,
            sd_m,
            mean_null,
            sd_null,
            z,
        }
    }

    /// Exact expectation of the null overlap under the draw schedule,
    /// `|S0| |S1| / P` averaged over the draws.
    pub fn analytic_null_mean(&self) -> f64 {
        let n = self.null_samples.len();
        if n == 0 || self.population == 0 {
            return f64::NAN;
        }
        let k = self.set_sizes.len();
        (0..n)
            .map(|d| {
                let (a, b) = self.set_sizes[d % k];
                (a * b) as f64 / self.population as f64
            })
            .sum::<f64>()
            / n as f64
    }

    pub fn null_standard_error(&self) -> f64 {
        self.sd_null / (self.null_samples.len() as f64).sqrt()
    }

    pub fn mean_set_size(&self) -> f64 {
        let n = self.set_sizes.len() as f64;
        self.set_sizes.iter().map(|&(a, b)| (a + b) as f64 / 2.0).sum::<f64>() / n
    }
}

/// Overlap statistics from already-trained run pairs.
pub fn overlap_from_logs(
    pairs: &[(&TrajectoryLog, &TrajectoryLog)],
    at: At,
    null_draws: usize,
    seed: u64,
) -> Result<OverlapStats> {
    if pairs.is_empty() {
        return Err(Error::Degenerate("no run pairs".into()));
    }
    let population = pairs[0].0.train_size();
    let sets = pairs
        .iter()
        .map(|(a, b)| Ok((straggler_set(a, at)?, straggler_set(b, at)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(OverlapStats::from_sets(&sets, population, null_draws, seed))
}

/// Trains `2 * n_pairs` runs with seeds `seed_root..` and compares the
/// misclassified sets of consecutive runs.
pub fn overlap_experiment(
    ds: &Dataset,
    spec: &RunSpec,
    n_pairs: usize,
    at: At,
    null_draws: usize,
    seed_root: u64,
) -> Result<OverlapStats> {
    if n_pairs < 2 {
        return Err(Error::Degenerate("need at least two run pairs".into()));
    }
    let seeds: Vec<u64> = (0..2 * n_pairs as u64).map(|k| seed_root + k).collect();
    let logs = spec
        .run_seeds(ds, None, &seeds)
        .into_iter()
        .map(|r| r.map(|(_, log)| log))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = logs.chunks_exact(2).map(|c| (&c[0], &c[1])).collect();
    let stats = overlap_from_logs(&pairs, at, null_draws, seed_root ^ 0x5eed)?;
    if stats.z.is_none() {
        return Err(Error::Degenerate("overlap has zero spread across pairs".into()));
    }
    Ok(stats)
}

/// Conservation z-score at each requested error level, from shared run pairs.
pub fn zscore_curve(
    pairs: &[(&TrajectoryLog, &TrajectoryLog)],
    grid: &[f64],
    null_draws: usize,
    seed: u64,
) -> Result<Vec<(f64, OverlapStats)>> {
    grid.iter()
        .map(|&eps| Ok((eps, overlap_from_logs(pairs, At::Error(eps), null_draws, seed)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    /// Remove the misclassified set.
    Straggler,
    /// Remove a uniformly random set of the same size.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneCurvePoint {
    pub base_run: usize,
    pub level: At,
    /// Training error of the base run at the epoch the set was taken.
    pub eps_tr_target: f64,
    pub removed_count: usize,
    pub mode: PruneMode,
    /// Metrics of the retrained model at the end of training.
    pub metrics: Option<MetricTriple>,
    /// `(sigma, test error)` of the retrained model per noise level.
    pub eps_test: Vec<(f64, f64)>,
    /// Inversion analysis of the retrained run.
    pub retrained: Option<InversionReport>,
    /// Metrics of the retrained run at every epoch.
    pub curve: Vec<Option<MetricTriple>>,
    /// Set when the removal was empty and no retraining was done.
    pub no_op: bool,
}

#[derive(Debug, Clone)]
pub struct PruneJob<'a> {
    pub train: &'a Dataset,
    pub base_logs: &'a [TrajectoryLog],
    pub spec: &'a RunSpec,
    pub levels: &'a [At],
    pub mode: PruneMode,
    /// Test sets already carrying their noise, keyed by sigma.
    pub noisy_tests: &'a [(f64, Dataset)],
    pub seed_root: u64,
}

/// Builds the noisy copies of a standardized test set.
pub fn noisy_test_sets(test: &Dataset, sigmas: &[f64], seed: u64) -> Result<Vec<(f64, Dataset)>> {
    sigmas
        .iter()
        .enumerate()
        .map(|(k, &s)| Ok((s, add_noise(test, s, seed.wrapping_add(k as u64))?)))
        .collect()
}

/// For each base run and level, removes the chosen set, retrains from a fresh
/// seed and records the asymptotic metrics and test errors.
pub fn prune_retrain(job: &PruneJob<'_>) -> Result<Vec<PruneCurvePoint>> {
    let tasks: Vec<(usize, usize)> = (0..job.base_logs.len())
        .flat_map(|r| (0..job.levels.len()).map(move |g| (r, g)))
        .collect();
    tasks
        .par_iter()
        .map(|&(r, g)| prune_point(job, r, g))
        .collect()
}

fn prune_point(job: &PruneJob<'_>, run: usize, grid: usize) -> Result<PruneCurvePoint> {
    let log = &job.base_logs[run];
    let level = job.levels[grid];
    let epoch = match level {
        At::Epoch(e) => e,
        At::Error(eps) => epoch_at_error(log, eps)?,
        At::Inversion => detect_inversion(log)?.straggler_epoch,
    };
    let record = log.record_at(epoch).ok_or(Error::NotReached {
        target: epoch as f64,
        minimum: log.final_record().epoch as f64,
    })?;
    let stragglers = log.misclassified_at(epoch).expect("record exists");
    let fresh_seed = job.seed_root + 1_000 * run as u64 + grid as u64;
    let removed = match job.mode {
        PruneMode::Straggler => stragglers,
        PruneMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(fresh_seed ^ 0xA11CE);
            sample(&mut rng, job.train.len(), stragglers.len())
                .into_iter()
                .map(|pos| job.train.source_index[pos])
                .collect()
        }
    };
    let mut point = PruneCurvePoint {
        base_run: run,
        level,
        eps_tr_target: record.eps_tr,
        removed_count: removed.len(),
        mode: job.mode,
        metrics: None,
        eps_test: Vec::new(),
        retrained: None,
        curve: Vec::new(),
        no_op: removed.is_empty(),
    };
    if point.no_op {
        return Ok(point);
    }
    let pruned = prune(job.train, &removed)?;
    if pruned.is_degenerate() {
        return Err(Error::Degenerate(format!(
            "pruning {} examples leaves an unusable training set",
            removed.len()
        )));
    }
    let (model, retrained) = job.spec.run(&pruned, None, fresh_seed)?;
    point.metrics = retrained.final_record().metrics;
    point.retrained = detect_inversion(&retrained).ok();
    point.curve = retrained.records.iter().map(|r| r.metrics).collect();
    point.eps_test = job
        .noisy_tests
        .iter()
        .map(|(s, t)| Ok((*s, error_rate(&model, t)?)))
        .collect::<Result<_>>()?;
    Ok(point)
}

/// Input-space distances of each example to the centroid of its own class
/// (all ten classes), split into stragglers and the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterOffsets {
    pub straggler: Vec<f64>,
    pub rest: Vec<f64>,
    pub straggler_mean: Option<f64>,
    pub rest_mean: Option<f64>,
    /// One-sided rank-sum p-value for "stragglers are further away".
    pub p_value: Option<f64>,
}

pub fn class_center_offsets(ds: &Dataset, stragglers: &IndexSet) -> Result<CenterOffsets> {
    if ds.is_empty() {
        return Err(Error::EmptySet);
    }
    let dim = ds.input_dim();
    let mut sums = vec![vec![0.0; dim]; 10];
    let mut counts = [0usize; 10];
    for (row, &c) in ds.inputs.rows().into_iter().zip(&ds.class_ids) {
        let c = usize::from(c);
        if c > 9 {
            return Err(Error::ClassOutOfRange(c as u8));
        }
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    let mut out = CenterOffsets {
        straggler: Vec::new(),
        rest: Vec::new(),
        straggler_mean: None,
        rest_mean: None,
        p_value: None,
    };
    for ((row, &c), &idx) in ds.inputs.rows().into_iter().zip(&ds.class_ids).zip(&ds.source_index) {
        let centre = &sums[usize::from(c)];
        let d = row
            .iter()
            .zip(centre)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if stragglers.contains(idx) {
            out.straggler.push(d);
        } else {
            out.rest.push(d);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    out.straggler_mean = mean(&out.straggler);
    out.rest_mean = mean(&out.rest);
    if !out.straggler.is_empty() && !out.rest.is_empty() {
        out.p_value = Some(rank_sum_greater(&out.straggler, &out.rest));
    }
    Ok(out)
}

/// One-sided Mann-Whitney U test that `a` tends to exceed `b`, normal
/// approximation with tie and continuity corrections.
pub fn rank_sum_greater(a: &[f64], b: &[f64]) -> f64 {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut all: Vec<(f64, bool)> = a
        .iter()
        .map(|&v| (v, true))
        .chain(b.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += all[i..=j].iter().filter(|x| x.1).count() as f64 * avg_rank;
        i = j + 1;
    }
    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let mu = n1 * n2 / 2.0;
    let nn = n as f64;
    let var = n1 * n2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = (u - mu - 0.5) / var.sqrt();
    1.0 - Normal::standard().cdf(z)
}
