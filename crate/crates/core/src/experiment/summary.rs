//! Human-readable aggregation of experiment directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ExperimentConfig, ExperimentManifest, RunRecord, CONFIG_FILE, MANIFEST_FILE};
use crate::error::{Error, Result};

/// Aggregates of all runs sharing one config digest and label.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub experiment: String,
    pub config_digest: String,
    pub label: String,
    pub runs: usize,
    pub converged: usize,
    pub phi: Stat,
    pub t_r_plus: Stat,
    pub t_r_minus: Stat,
    pub t_d: Stat,
    /// `label seed` of every run without a converged inversion.
    pub unconverged: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    /// `None` for fewer than two values.
    pub sd: Option<f64>,
}

impl Stat {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Self { n, mean, sd }
    }

    fn show(&self, digits: usize) -> String {
        if self.n == 0 {
            return "n/a".into();
        }
        match self.sd {
            Some(sd) => format!("{:.*} ± {:.*}", digits, self.mean, digits, sd),
            None => format!("{:.*} ± n/a", digits, self.mean),
        }
    }
}

fn find_manifests(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            find_manifests(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == MANIFEST_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

fn group(experiment: &str, digest: &str, label: &str, runs: &[&RunRecord]) -> GroupSummary {
    let conv: Vec<_> = runs
        .iter()
        .filter_map(|r| r.inversion.as_ref().filter(|i| i.converged))
        .collect();
    let stat = |f: &dyn Fn(&super::InversionSummary) -> f64| Stat::of(&conv.iter().map(|i| f(i)).collect::<Vec<_>>());
    GroupSummary {
        experiment: experiment.into(),
        config_digest: digest.into(),
        label: label.into(),
        runs: runs.len(),
        converged: conv.len(),
        phi: stat(&|i| i.phi),
        t_r_plus: stat(&|i| i.t_r_plus as f64),
        t_r_minus: stat(&|i| i.t_r_minus as f64),
        t_d: stat(&|i| i.t_d as f64),
        unconverged: runs
            .iter()
            .filter(|r| !r.inversion.as_ref().is_some_and(|i| i.converged))
            .map(|r| format!("{} seed {}", r.label, r.seed))
            .collect(),
    }
}

/// Reads every manifest under `dir` and renders one section per config
/// digest, with one line group per run label.
pub fn summarize(dir: impl AsRef<Path>) -> Result<(String, Vec<GroupSummary>)> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    find_manifests(dir, &mut paths)?;
    if paths.is_empty() {
        return Err(Error::NoManifests(dir.to_path_buf()));
    }
    let mut by_digest: BTreeMap<String, Vec<(PathBuf, ExperimentManifest)>> = BTreeMap::new();
    for p in paths {
        let m = ExperimentManifest::load(&p)?;
        by_digest.entry(m.config_digest.clone()).or_default().push((p, m));
    }

    let mut text = String::new();
    let mut groups = Vec::new();
    for (digest, manifests) in &by_digest {
        let experiment = manifests[0].1.experiment.name();
        let _ = writeln!(
            text,
            "== {experiment} [{}] ({} director{})",
            &digest[..12.min(digest.len())],
            manifests.len(),
            if manifests.len() == 1 { "y" } else { "ies" }
        );
        for (path, m) in manifests {
            let config_path = path.with_file_name(CONFIG_FILE);
            match ExperimentConfig::load(&config_path) {
                Ok(c) if c.digest() == m.config_digest => {}
                Ok(_) => {
                    let _ = writeln!(text, "   ! stored config does not match digest in {}", path.display());
                }
                Err(e) => {
                    let _ = writeln!(text, "   ! cannot re-hash {}: {e}", config_path.display());
                }
            }
        }
        let runs: Vec<&RunRecord> = manifests.iter().flat_map(|(_, m)| &m.runs).collect();
        let mut labels: Vec<&str> = Vec::new();
        for r in &runs {
            if !labels.contains(&r.label.as_str()) {
                labels.push(&r.label);
            }
        }
        for label in labels {
            let sel: Vec<&RunRecord> = runs.iter().copied().filter(|r| r.label == label).collect();
            let g = group(experiment, digest, label, &sel);
            let _ = writeln!(
                text,
                "   {label}: {} runs, {} with inversion; phi {}; t* r+ {}, r- {}, d {}",
                g.runs,
                g.converged,
                g.phi.show(4),
                g.t_r_plus.show(1),
                g.t_r_minus.show(1),
                g.t_d.show(1)
            );
            if !g.unconverged.is_empty() {
                let _ = writeln!(text, "      unconverged: {}", g.unconverged.join(", "));
            }
            groups.push(g);
        }
        for (_, m) in manifests {
            if let Some(rows) = m.results.get("zscore").and_then(|v| v.as_array()) {
                for row in rows {
                    let z = row.get("z").and_then(|v| v.as_f64());
                    let _ = writeln!(
                        text,
                        "   z at {}: {}",
                        row.get("level").and_then(|v| v.as_str()).unwrap_or("?"),
                        z.map_or("n/a".into(), |z| format!("{z:.2}"))
                    );
                }
            }
            if let Some(fit) = m.results.get("fit") {
                let get = |k: &str| fit.get(k).and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
                let _ = writeln!(
                    text,
                    "   fit: phi_inf {:.4}, p0 {:.1}, gamma {:.3}",
                    get("phi_inf"),
                    get("p0"),
                    get("gamma")
                );
            }
            for w in &m.warnings {
                let _ = writeln!(text, "   warning: {w}");
            }
        }
    }
    Ok((text, groups))
}
