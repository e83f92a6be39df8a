//! Config-driven experiment runner. Every experiment writes into a fresh
//! timestamped directory: the effective config, a JSON manifest, one
//! directory per training run, and plot-ready CSV tables.

mod config;
mod summary;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{parse_activation, DatasetConfig, ExperimentConfig, ExperimentKind, ModelConfig, RunConfig, SweepConfig};
pub use summary::{summarize, GroupSummary};

use crate::dataio::{
    load_cifar10, load_mnist_family, randomize_labels, read_cache, standardize, subsample, synthetic_digits,
    write_cache, Dataset, RawDataset, Source, Split,
};
use crate::dynamics::{
    detect_inversion_with, error_rate, moving_average, nondecreasing_fraction, reparameterize, InversionReport,
    RunSpec, StopReason, TrajectoryLog,
};
use crate::error::{Error, Result};
use crate::geometry::Metric;
use crate::io::write_atomic;
use crate::network::MlpModel;
use crate::scaling::{aggregate_sizes, fit_size_points, write_fit_report, SizePoint};
use crate::stragglers::{
    class_center_offsets, noisy_test_sets, overlap_from_logs, prune_retrain, write_straggler_list, At, PruneCurvePoint,
    PruneJob, PruneMode,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
const MANIFEST_FORMAT: &str = "stragglers-manifest";
const SYNTHETIC_SPREAD: f64 = 0.3;
const SYNTHETIC_TEST: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionSummary {
    pub t_r_plus: usize,
    pub t_r_minus: usize,
    pub t_d: usize,
    pub phi: f64,
    pub n_stragglers: usize,
    pub converged: bool,
}

impl From<&InversionReport> for InversionSummary {
    fn from(r: &InversionReport) -> Self {
        Self {
            t_r_plus: r.r_plus.epoch,
            t_r_minus: r.r_minus.epoch,
            t_d: r.d.epoch,
            phi: r.phi,
            n_stragglers: r.stragglers.len(),
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub train_size: usize,
    pub epochs: usize,
    /// `max_epochs`, `zero_error` or `diverged`.
    pub stop_reason: String,
    pub final_eps_tr: f64,
    pub final_eps_test: Option<f64>,
    pub flagged_epochs: usize,
    pub inversion: Option<InversionSummary>,
    /// Run directory relative to the experiment directory.
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub format: String,
    pub version: u32,
    pub experiment: ExperimentKind,
    pub config_digest: String,
    pub dataset_digest: String,
    pub created: String,
    pub runs: Vec<RunRecord>,
    /// Experiment-specific aggregates.
    pub results: serde_json::Value,
    pub warnings: Vec<String>,
}

impl ExperimentManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub manifest: ExperimentManifest,
}

/// `YYYYMMDDTHHMMSSZ` for a Unix time.
pub fn utc_stamp(secs: u64) -> String {
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + i64::from(month <= 2);
    format!(
        "{year:04}{month:02}{day:02}T{:02}{:02}{:02}Z",
        rem / 3600,
        rem % 3600 / 60,
        rem % 60
    )
}

fn fresh_dir(root: &Path, experiment: ExperimentKind) -> Result<(PathBuf, String)> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let stamp = utc_stamp(secs);
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for k in 0.. {
        let name = if k == 0 {
            format!("{experiment}-{stamp}")
        } else {
            format!("{experiment}-{stamp}-{k}")
        };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok((dir, stamp)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

/// Source data of an experiment: raw training images and the standardized test set.
pub struct SourceData {
    pub train: RawDataset,
    pub test: Option<Dataset>,
}

/// Loads the configured source. `train_rows` is the number of training rows
/// the experiment needs (only relevant for generated data).
pub fn load_source(cfg: &DatasetConfig, train_rows: usize) -> Result<SourceData> {
    let (train, test_raw) = match cfg.source {
        Source::Synthetic => {
            let n_test = cfg.test_size.unwrap_or(SYNTHETIC_TEST);
            let all = synthetic_digits(train_rows + n_test, cfg.synthetic_dim, SYNTHETIC_SPREAD, 0x5EED);
            let train = subsample(&all, train_rows, 0)?;
            let test = RawDataset {
                images: all.images.slice(ndarray::s![train_rows.., ..]).to_owned(),
                class_ids: all.class_ids[train_rows..].to_vec(),
                source_index: (0..n_test).collect(),
                split: Split::Test,
                source: Source::Synthetic,
            };
            (train, test)
        }
        Source::Cifar10 => {
            let dir = cfg.path.as_ref().expect("validated");
            let train_files: Vec<PathBuf> = (1..=5).map(|k| dir.join(format!("data_batch_{k}.bin"))).collect();
            (
                load_cifar10(&train_files, Split::Train)?,
                load_cifar10(&[dir.join("test_batch.bin")], Split::Test)?,
            )
        }
        source => {
            let dir = cfg.path.as_ref().expect("validated");
            (
                load_mnist_family(dir, Split::Train, source)?,
                load_mnist_family(dir, Split::Test, source)?,
            )
        }
    };
    let n_test = cfg.test_size.unwrap_or(test_raw.len()).min(test_raw.len());
    let test = if n_test >= 2 {
        Some(standardize(&subsample(&test_raw, n_test, 0)?, None)?)
    } else {
        None
    };
    Ok(SourceData { train, test })
}

/// Standardized training set of `size` rows from `chunk`, through the cache when configured.
pub fn training_set(cfg: &DatasetConfig, raw: &RawDataset, size: usize, chunk: usize) -> Result<Dataset> {
    let cache_path = cfg
        .cache_dir
        .as_ref()
        .map(|d| d.join(format!("{}-train-{size}-{chunk}.bin", cfg.source)));
    if let Some(p) = &cache_path {
        if p.exists() {
            return read_cache(p);
        }
    }
    let ds = standardize(&subsample(raw, size, chunk)?, None)?;
    if let Some(p) = &cache_path {
        write_cache(&ds, p)?;
    }
    Ok(ds)
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    runs: Vec<RunRecord>,
    warnings: Vec<String>,
    results: serde_json::Map<String, serde_json::Value>,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn inversion(&self, log: &TrajectoryLog) -> Option<InversionReport> {
        detect_inversion_with(log, self.cfg.run.min_prominence).ok()
    }

    /// Writes the run's files and appends its record.
    fn record(
        &mut self,
        label: &str,
        seed: u64,
        ds: &Dataset,
        outcome: Result<(MlpModel, TrajectoryLog)>,
    ) -> Result<Option<(MlpModel, TrajectoryLog)>> {
        let (model, log) = match outcome {
            Ok(v) => v,
            Err(Error::Diverged { epoch, loss }) => {
                self.warnings
                    .push(format!("{label} seed {seed}: diverged at epoch {epoch} (loss {loss})"));
                self.runs.push(RunRecord {
                    label: label.into(),
                    seed,
                    train_size: ds.len(),
                    epochs: epoch,
                    stop_reason: "diverged".into(),
                    final_eps_tr: f64::NAN,
                    final_eps_test: None,
                    flagged_epochs: 0,
                    inversion: None,
                    dir: None,
                });
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let rel = format!("runs/{label}-seed{seed}");
        let run_dir = self.dir.join(&rel);
        log.write_csv(run_dir.join("trajectory.csv"))?;
        if self.cfg.run.write_misclassified {
            log.write_misclassified(run_dir.join("misclassified.txt"))?;
        }
        let inversion = self.inversion(&log);
        match &inversion {
            Some(r) => {
                write_straggler_list(&run_dir, &ds.digest(), &format!("eps{:.4}", r.phi), &r.stragglers)?;
                if !r.converged {
                    self.warnings
                        .push(format!("{label} seed {seed}: no interior, prominent inversion"));
                }
            }
            None => self.warnings.push(format!("{label} seed {seed}: inversion undetectable")),
        }
        let last = log.final_record();
        self.runs.push(RunRecord {
            label: label.into(),
            seed,
            train_size: ds.len(),
            epochs: last.epoch,
            stop_reason: match log.stop_reason {
                StopReason::MaxEpochs => "max_epochs".into(),
                StopReason::ZeroError => "zero_error".into(),
            },
            final_eps_tr: last.eps_tr,
            final_eps_test: last.eps_test,
            flagged_epochs: log.flagged_epochs().len(),
            inversion: inversion.as_ref().map(InversionSummary::from),
            dir: Some(rel),
        });
        Ok(Some((model, log)))
    }

    fn run_all(
        &mut self,
        label: &str,
        spec: &RunSpec,
        ds: &Dataset,
        test: Option<&Dataset>,
        seeds: &[u64],
    ) -> Result<Vec<(u64, MlpModel, TrajectoryLog)>> {
        let mut out = Vec::new();
        for (&seed, outcome) in seeds.iter().zip(spec.run_seeds(ds, test, seeds)) {
            if let Some((m, l)) = self.record(label, seed, ds, outcome)? {
                out.push((seed, m, l));
            }
        }
        Ok(out)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("nan".into(), |x| format!("{x:.6}"))
}

fn inversion_table(runs: &[RunRecord]) -> String {
    let mut s = String::from(
        "label,seed,train_size,t_r_plus,t_r_minus,t_d,phi,n_stragglers,converged,epochs,final_eps_tr,final_eps_test\n",
    );
    for r in runs {
        let inv = r.inversion.as_ref();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{:.6},{}",
            r.label,
            r.seed,
            r.train_size,
            inv.map_or("nan".into(), |i| i.t_r_plus.to_string()),
            inv.map_or("nan".into(), |i| i.t_r_minus.to_string()),
            inv.map_or("nan".into(), |i| i.t_d.to_string()),
            fmt_opt(inv.map(|i| i.phi)),
            inv.map_or(0, |i| i.n_stragglers),
            inv.is_some_and(|i| i.converged),
            r.epochs,
            r.final_eps_tr,
            fmt_opt(r.final_eps_test),
        );
    }
    s
}

fn curve_table(log: &TrajectoryLog) -> String {
    let mut s = String::from("eps_tr,epoch,r_plus,r_minus,d\n");
    for p in reparameterize(log) {
        let m = p.metrics;
        let _ = writeln!(
            s,
            "{:.6},{},{},{},{}",
            p.eps_tr,
            p.epoch,
            fmt_opt(m.map(|m| m.r_plus)),
            fmt_opt(m.map(|m| m.r_minus)),
            fmt_opt(m.map(|m| m.d))
        );
    }
    s
}

/// Mean and sample standard deviation of converged `phi` per label.
fn phi_by_label(runs: &[RunRecord]) -> serde_json::Value {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in runs {
        if let Some(i) = r.inversion.as_ref().filter(|i| i.converged) {
            groups.entry(&r.label).or_default().push(i.phi);
        }
    }
    let mut out = serde_json::Map::new();
    for (label, v) in groups {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = (v.len() > 1).then(|| (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        out.insert(label.into(), json!({ "phi_mean": mean, "phi_sd": sd, "runs": v.len() }));
    }
    serde_json::Value::Object(out)
}

fn levels(cfg: &ExperimentConfig) -> Vec<At> {
    let mut v: Vec<At> = cfg.sweep.error_grid.iter().map(|&e| At::Error(e)).collect();
    if cfg.sweep.include_inversion {
        v.push(At::Inversion);
    }
    v
}

fn level_name(at: At) -> String {
    match at {
        At::Epoch(e) => format!("epoch{e}"),
        At::Error(e) => format!("{e:.4}"),
        At::Inversion => "inversion".into(),
    }
}

/// Rows of training data needed from the source for this config.
fn train_rows(cfg: &ExperimentConfig) -> usize {
    let d = &cfg.dataset;
    match cfg.experiment {
        ExperimentKind::SubsampleSweep => d.size * (cfg.sweep.chunks.iter().max().copied().unwrap_or(0) + 1),
        ExperimentKind::PhiScaling => cfg.sweep.sizes.iter().max().copied().unwrap_or(d.size) * (d.chunk + 1),
        _ => d.size * (d.chunk + 1),
    }
}

/// Runs the configured experiment into a new directory under `run.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let data = load_source(&cfg.dataset, train_rows(cfg))?;
    let (dir, created) = fresh_dir(&cfg.run.output_dir, cfg.experiment)?;
    write_atomic(dir.join(CONFIG_FILE), cfg.to_toml().as_bytes())?;
    let mut ctx = Ctx {
        cfg,
        dir,
        runs: Vec::new(),
        warnings: Vec::new(),
        results: serde_json::Map::new(),
    };
    let base = || training_set(&cfg.dataset, &data.train, cfg.dataset.size, cfg.dataset.chunk);
    let test = data.test.as_ref();
    let seeds = cfg.seeds();
    let mut dataset_digest = String::new();

    match cfg.experiment {
        ExperimentKind::Trajectory => {
            let ds = base()?;
            dataset_digest = ds.digest();
            ctx.run_all("base", &cfg.run_spec()?, &ds, test, &seeds)?;
        }
        ExperimentKind::OptimizerSweep => {
            let ds = base()?;
            dataset_digest = ds.digest();
            let base_spec = cfg.run_spec()?;
            for (k, opt) in cfg.sweep.optimizers.iter().enumerate() {
                let spec = RunSpec {
                    train: cfg.train_config(*opt),
                    ..base_spec.clone()
                };
                let label = format!("{}-{k}", opt.kind.name());
                for (seed, _, log) in ctx.run_all(&label, &spec, &ds, test, &seeds)? {
                    let p = ctx.path(&format!("runs/{label}-seed{seed}/curve.csv"));
                    write_atomic(&p, curve_table(&log).as_bytes())?;
                }
            }
        }
        ExperimentKind::SubsampleSweep => {
            let spec = cfg.run_spec()?;
            for &chunk in &cfg.sweep.chunks {
                let ds = training_set(&cfg.dataset, &data.train, cfg.dataset.size, chunk)?;
                if chunk == cfg.sweep.chunks[0] {
                    dataset_digest = ds.digest();
                }
                for (seed, _, log) in ctx.run_all(&format!("chunk{chunk}"), &spec, &ds, test, &seeds)? {
                    let p = ctx.path(&format!("runs/chunk{chunk}-seed{seed}/curve.csv"));
                    write_atomic(&p, curve_table(&log).as_bytes())?;
                }
            }
        }
        ExperimentKind::RandomLabels => random_labels(&mut ctx, &base()?, &seeds, &mut dataset_digest)?,
        ExperimentKind::PruneRetrain | ExperimentKind::NoisyTest => {
            let ds = base()?;
            dataset_digest = ds.digest();
            prune_experiment(&mut ctx, &ds, test, &seeds)?;
        }
        ExperimentKind::Zscore => {
            let ds = base()?;
            dataset_digest = ds.digest();
            zscore_experiment(&mut ctx, &ds)?;
        }
        ExperimentKind::PhiScaling => {
            let spec = cfg.run_spec()?;
            let mut points = Vec::new();
            for &size in &cfg.sweep.sizes {
                let ds = training_set(&cfg.dataset, &data.train, size, cfg.dataset.chunk)?;
                if size == cfg.sweep.sizes[0] {
                    dataset_digest = ds.digest();
                }
                let mut point = SizePoint {
                    size,
                    phi: f64::NAN,
                    sigma: None,
                    runs: Vec::new(),
                    excluded: Vec::new(),
                };
                for (seed, _, log) in ctx.run_all(&format!("p{size}"), &spec, &ds, test, &seeds)? {
                    match ctx.inversion(&log) {
                        Some(r) if r.converged => point.runs.push(r.phi),
                        _ => point.excluded.push(seed),
                    }
                }
                points.push(point);
            }
            let points = aggregate_sizes(&points);
            let mut table = String::from("size,phi,sigma,runs,excluded\n");
            for p in &points {
                let _ = writeln!(
                    table,
                    "{},{},{},{},{}",
                    p.size,
                    fmt_opt((!p.runs.is_empty()).then_some(p.phi)),
                    fmt_opt(p.sigma),
                    p.runs.len(),
                    p.excluded.len()
                );
            }
            write_atomic(ctx.path("phi_scaling.csv"), table.as_bytes())?;
            ctx.results.insert("sizes".into(), json!(points));
            match fit_size_points(&points, cfg.sweep.restarts, cfg.run.seed_root) {
                Ok(fit) => {
                    let rows: Vec<_> = points
                        .iter()
                        .filter(|p| !p.runs.is_empty())
                        .map(|p| (p.size as f64, p.phi, p.sigma))
                        .collect();
                    write_fit_report(ctx.path("fit.txt"), &fit, &rows)?;
                    ctx.results.insert("fit".into(), json!(fit));
                }
                Err(e) => ctx.warnings.push(format!("scaling fit failed: {e}")),
            }
        }
        ExperimentKind::ArchSweep => {
            let ds = base()?;
            dataset_digest = ds.digest();
            let base_spec = cfg.run_spec()?;
            for hidden in &cfg.sweep.architectures {
                let mut spec = RunSpec {
                    hidden: hidden.clone(),
                    ..base_spec.clone()
                };
                spec.train.metric_layer = spec.train.metric_layer.min(hidden.len());
                let label = format!(
                    "h{}",
                    hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join("x")
                );
                ctx.run_all(&label, &spec, &ds, test, &seeds)?;
            }
        }
        ExperimentKind::ActivationSweep => {
            let ds = base()?;
            dataset_digest = ds.digest();
            let base_spec = cfg.run_spec()?;
            for (k, name) in cfg.sweep.activations.iter().enumerate() {
                let spec = RunSpec {
                    activation: parse_activation(name, cfg.model.leaky_slope, &format!("sweep.activations[{k}]"))?,
                    ..base_spec.clone()
                };
                ctx.run_all(name, &spec, &ds, test, &seeds)?;
            }
        }
    }

    if !ctx.runs.is_empty() {
        write_atomic(ctx.path("inversion.csv"), inversion_table(&ctx.runs).as_bytes())?;
        ctx.results.entry("phi_by_label").or_insert(phi_by_label(&ctx.runs));
    }
    let manifest = ExperimentManifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        experiment: cfg.experiment,
        config_digest: cfg.digest(),
        dataset_digest,
        created,
        runs: ctx.runs,
        results: serde_json::Value::Object(ctx.results),
        warnings: ctx.warnings,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(ctx.dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(ExperimentOutcome { dir: ctx.dir, manifest })
}

fn random_labels(ctx: &mut Ctx<'_>, ds: &Dataset, seeds: &[u64], digest: &mut String) -> Result<()> {
    let spec = ctx.cfg.run_spec()?;
    let mut table = String::from("seed,r_plus_interior_min,r_minus_interior_min,d_nondecreasing_fraction\n");
    let mut rows = Vec::new();
    for &seed in seeds {
        let shuffled = randomize_labels(ds, seed ^ 0x1AB_E15);
        if digest.is_empty() {
            *digest = shuffled.digest();
        }
        let outcome = spec.run(&shuffled, None, seed);
        let Some((_, log)) = ctx.record("random", seed, &shuffled, outcome)? else {
            continue;
        };
        let prominence = ctx.cfg.run.min_prominence;
        let (rp, rm) = match ctx.inversion(&log) {
            Some(r) => (r.r_plus.qualifies(prominence), r.r_minus.qualifies(prominence)),
            None => (false, false),
        };
        let d: Vec<f64> = log
            .records
            .iter()
            .filter_map(|r| r.metrics.map(|m| m.get(Metric::D)))
            .collect();
        let frac = nondecreasing_fraction(&moving_average(&d, 5));
        let _ = writeln!(table, "{seed},{rp},{rm},{frac:.6}");
        rows.push(json!({ "seed": seed, "r_plus_interior_min": rp, "r_minus_interior_min": rm, "d_nondecreasing_fraction": frac }));
    }
    write_atomic(ctx.path("random_labels.csv"), table.as_bytes())?;
    ctx.results.insert("random_labels".into(), json!(rows));
    Ok(())
}

fn prune_experiment(ctx: &mut Ctx<'_>, ds: &Dataset, test: Option<&Dataset>, seeds: &[u64]) -> Result<()> {
    let cfg = ctx.cfg;
    let spec = cfg.run_spec()?;
    let base = ctx.run_all("base", &spec, ds, None, seeds)?;
    let sigmas = &cfg.dataset.noise_sigmas;
    let noisy = match test {
        Some(t) => noisy_test_sets(t, sigmas, cfg.run.seed_root ^ 0x0015E)?,
        None => {
            ctx.warnings.push("no test set: test errors are not reported".into());
            Vec::new()
        }
    };
    // Baseline test errors of the unpruned models, per sigma.
    let mut baseline: Vec<Vec<f64>> = vec![Vec::new(); noisy.len()];
    for (_, model, _) in &base {
        for (k, (_, t)) in noisy.iter().enumerate() {
            baseline[k].push(error_rate(model, t)?);
        }
    }
    let logs: Vec<TrajectoryLog> = base.into_iter().map(|(_, _, l)| l).collect();
    let lv = levels(cfg);
    let mut points: Vec<PruneCurvePoint> = Vec::new();
    for &mode in &cfg.sweep.prune_modes {
        let job = PruneJob {
            train: ds,
            base_logs: &logs,
            spec: &spec,
            levels: &lv,
            mode,
            noisy_tests: &noisy,
            seed_root: cfg.run.seed_root + 10_000 * (1 + mode as u64),
        };
        points.extend(prune_retrain(&job)?);
    }
    let mut table = String::from("mode,base_seed,level,eps_tr_target,removed,r_plus,r_minus,d,retrained_inversion,no_op");
    for s in sigmas {
        let _ = write!(table, ",eps_test_sigma{s}");
    }
    table.push('\n');
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    for (r, log) in logs.iter().enumerate() {
        let _ = write!(table, "none,{},none,nan,0,nan,nan,nan,false,true", log.meta.seed);
        for b in &baseline {
            let _ = write!(table, ",{:.6}", b[r]);
        }
        table.push('\n');
    }
    for p in &points {
        let m = p.metrics;
        let _ = write!(
            table,
            "{},{},{},{:.6},{},{},{},{},{},{}",
            match p.mode {
                PruneMode::Straggler => "straggler",
                PruneMode::Random => "random",
            },
            logs[p.base_run].meta.seed,
            level_name(p.level),
            p.eps_tr_target,
            p.removed_count,
            fmt_opt(m.map(|m| m.r_plus)),
            fmt_opt(m.map(|m| m.r_minus)),
            fmt_opt(m.map(|m| m.d)),
            p.retrained.as_ref().is_some_and(|r| r.qualifies(cfg.run.min_prominence)),
            p.no_op
        );
        for (_, e) in &p.eps_test {
            let _ = write!(table, ",{e:.6}");
        }
        table.push('\n');
        if p.no_op {
            ctx.warnings.push(format!(
                "base seed {} at {}: nothing to remove",
                logs[p.base_run].meta.seed,
                level_name(p.level)
            ));
        }
    }
    write_atomic(ctx.path("prune.csv"), table.as_bytes())?;

    // Mean test error per (mode, level, sigma) and, per level, the smallest
    // sigma at which straggler removal beats the unpruned models.
    let mut summary = Vec::new();
    for &level in &lv {
        let mut entry = json!({ "level": level_name(level) });
        for &mode in &cfg.sweep.prune_modes {
            let sel: Vec<&PruneCurvePoint> = points
                .iter()
                .filter(|p| p.level == level && p.mode == mode && !p.no_op)
                .collect();
            let per_sigma: Vec<Option<f64>> = (0..noisy.len())
                .map(|k| (!sel.is_empty()).then(|| mean(&sel.iter().map(|p| p.eps_test[k].1).collect::<Vec<_>>())))
                .collect();
            let inversions = sel
                .iter()
                .filter(|p| p.retrained.as_ref().is_some_and(|r| r.qualifies(cfg.run.min_prominence)))
                .count();
            let key = match mode {
                PruneMode::Straggler => "straggler",
                PruneMode::Random => "random",
            };
            entry[key] = json!({
                "runs": sel.len(),
                "mean_eps_test": per_sigma,
                "retrained_with_inversion": inversions,
            });
            if mode == PruneMode::Straggler && !baseline.is_empty() && !logs.is_empty() {
                let crossover = sigmas
                    .iter()
                    .zip(&per_sigma)
                    .zip(&baseline)
                    .find(|((_, s), b)| s.is_some_and(|s| s < mean(b)))
                    .map(|((sig, _), _)| *sig);
                entry["crossover_sigma"] = json!(crossover);
            }
        }
        summary.push(entry);
    }
    if !logs.is_empty() {
        ctx.results.insert(
            "baseline_mean_eps_test".into(),
            json!(baseline.iter().map(|b| mean(b)).collect::<Vec<_>>()),
        );
    }
    ctx.results.insert("noise_sigmas".into(), json!(sigmas));
    ctx.results.insert("levels".into(), json!(summary));
    Ok(())
}

fn zscore_experiment(ctx: &mut Ctx<'_>, ds: &Dataset) -> Result<()> {
    let cfg = ctx.cfg;
    let spec = cfg.run_spec()?;
    let seeds: Vec<u64> = (0..2 * cfg.sweep.pairs as u64).map(|k| cfg.run.seed_root + k).collect();
    let runs = ctx.run_all("pair", &spec, ds, None, &seeds)?;
    if runs.len() < 4 {
        return Err(Error::Degenerate("fewer than two usable run pairs".into()));
    }
    let logs: Vec<&TrajectoryLog> = runs.iter().map(|(_, _, l)| l).collect();
    let pairs: Vec<_> = logs.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let mut table = String::from("level,pairs,mean_set_size,mean_m,sd_m,mean_null,sd_null,analytic_null,z\n");
    let mut rows = Vec::new();
    for level in levels(cfg) {
        let stats = match overlap_from_logs(&pairs, level, cfg.sweep.null_draws, cfg.run.seed_root ^ 0x2_5C0E) {
            Ok(s) => s,
            Err(e) => {
                ctx.warnings.push(format!("level {}: {e}", level_name(level)));
                continue;
            }
        };
        let _ = writeln!(
            table,
            "{},{},{:.3},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            level_name(level),
            stats.m_samples.len(),
            stats.mean_set_size(),
            stats.mean_m,
            stats.sd_m,
            stats.mean_null,
            stats.sd_null,
            stats.analytic_null_mean(),
            fmt_opt(stats.z)
        );
        rows.push(json!({
            "level": level_name(level),
            "mean_set_size": stats.mean_set_size(),
            "mean_m": stats.mean_m,
            "sd_m": stats.sd_m,
            "mean_null": stats.mean_null,
            "sd_null": stats.sd_null,
            "analytic_null": stats.analytic_null_mean(),
            "z": stats.z,
        }));
    }
    write_atomic(ctx.path("zscore.csv"), table.as_bytes())?;
    ctx.results.insert("zscore".into(), json!(rows));
    if let Ok(r) = detect_inversion_with(logs[0], cfg.run.min_prominence) {
        let off = class_center_offsets(ds, &r.stragglers)?;
        ctx.results.insert(
            "class_center_offsets".into(),
            json!({
                "straggler_mean": off.straggler_mean,
                "rest_mean": off.rest_mean,
                "p_value": off.p_value,
                "n_stragglers": off.straggler.len(),
            }),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utc_stamps() {
        assert_eq!(utc_stamp(0), "19700101T000000Z");
        assert_eq!(utc_stamp(951_782_400), "20000229T000000Z");
        assert_eq!(utc_stamp(1_700_000_000), "20231114T221320Z");
    }
}
