//! Large-dataset extrapolation of the straggler fraction through the form
//! `phi(P) = phi_inf * (1 - (P / p0)^(-gamma))`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::{hex, standardize, subsample, RawDataset};
use crate::dynamics::{detect_inversion, RunSpec};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const DEFAULT_RESTARTS: usize = 10;

/// Observed straggler fraction at one training-set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePoint {
    pub size: usize,
    pub phi: f64,
    /// Across-seed standard deviation; `None` with fewer than two runs.
    pub sigma: Option<f64>,
    /// Per-run values that entered the mean.
    pub runs: Vec<f64>,
    /// Seeds whose run had no detectable inversion.
    pub excluded: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub phi_inf: f64,
    pub p0: f64,
    pub gamma: f64,
    pub sum_sq_residual: f64,
    pub restarts: usize,
    pub weighted: bool,
}

impl ScalingFit {
    pub fn predict(&self, p: f64) -> f64 {
        model(self.phi_inf, self.p0, self.gamma, p)
    }
}

fn model(phi_inf: f64, p0: f64, gamma: f64, p: f64) -> f64 {
    phi_inf * (1.0 - (p / p0).powf(-gamma))
}

/// Minimizes `f` with the Nelder-Mead simplex method. Returns the best point,
/// its value and whether the tolerance was met within `max_iter`.
pub fn nelder_mead<F>(f: F, start: &[f64], step: &[f64], max_iter: usize, tol: f64) -> (Vec<f64>, f64, bool)
where
    F: Fn(&[f64]) -> f64,
{
    let n = start.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() { v } else { f64::INFINITY }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), eval(start)));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += step[i];
        let v = eval(&x);
        simplex.push((x, v));
    }
    let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect()
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        let spread = simplex
            .iter()
            .skip(1)
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        // Either the simplex has collapsed or its values agree to `tol`.
        if spread <= tol.sqrt() * 1e-2 || (worst - best).abs() <= tol * best.abs() {
            return (simplex[0].0.clone(), best, true);
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst_x = simplex[n].0.clone();
        let reflected = blend(&centroid, &worst_x, -1.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = blend(&centroid, &worst_x, -2.0);
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = if fr < simplex[n].1 {
                blend(&centroid, &reflected, 0.5)
            } else {
                blend(&centroid, &worst_x, 0.5)
            };
            let fc = eval(&contracted);
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (contracted, fc);
            } else {
                let best_x = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    *x = blend(&best_x, x, 0.5);
                    *v = eval(x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0.clone(), simplex[0].1, false)
}

/// Weighted least-squares fit of the scaling form; unweighted unless every
/// point carries a positive `sigma`. Parameters are searched as
/// `(phi_inf, ln p0, ln gamma)`.
pub fn fit_phi(points: &[(f64, f64, Option<f64>)], restarts: usize, seed: u64) -> Result<ScalingFit> {
    let mut sizes: Vec<f64> = points.iter().map(|p| p.0).collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 distinct sizes, got {}",
            sizes.len()
        )));
    }
    if points.iter().any(|p| !(p.0 > 0.0 && p.1.is_finite())) {
        return Err(Error::Degenerate("sizes must be positive and fractions finite".into()));
    }
    let first = points[0].1;
    if points.iter().all(|p| p.1 == first) {
        return Err(Error::Degenerate("all fractions equal; gamma is unidentifiable".into()));
    }
    let weighted = points.iter().all(|p| matches!(p.2, Some(s) if s > 0.0));
    let weights: Vec<f64> = points
        .iter()
        .map(|p| if weighted { 1.0 / p.2.unwrap() } else { 1.0 })
        .collect();
    let objective = |x: &[f64]| -> f64 {
        let (phi_inf, p0, gamma) = (x[0], x[1].exp(), x[2].exp());
        points
            .iter()
            .zip(&weights)
            .map(|(&(p, phi, _), w)| ((model(phi_inf, p0, gamma, p) - phi) * w).powi(2))
            .sum()
    };
    let max_phi = points.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let min_p = sizes[0];
    let init = [1.05 * max_phi, min_p.ln(), 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Each start is polished by re-seeding the simplex at its own minimum.
    let solve = |start: &[f64]| -> (Vec<f64>, f64, bool) {
        let mut x = start.to_vec();
        let mut converged = false;
        let mut value = f64::INFINITY;
        for _ in 0..6 {
            let step = [0.1 * x[0].abs().max(1e-3), 0.5, 0.3];
            let (nx, nv, ok) = nelder_mead(objective, &x, &step, 20_000, 1e-15);
            let stalled = nv >= value;
            x = nx;
            value = value.min(nv);
            converged = ok;
            if stalled {
                break;
            }
        }
        (x, value, converged)
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_converged = false;
    for k in 0..=restarts {
        let start: Vec<f64> = if k == 0 {
            init.to_vec()
        } else {
            vec![
                init[0] * rng.random_range(0.8..1.5),
                init[1] + rng.random_range(-2.0..2.0),
                rng.random_range(-1.5..1.0),
            ]
        };
        let (x, v, ok) = solve(&start);
        any_converged |= ok;
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.1) {
            best = Some((x, v));
        }
    }
    match best {
        Some((x, v)) if any_converged => Ok(ScalingFit {
            phi_inf: x[0],
            p0: x[1].exp(),
            gamma: x[2].exp(),
            sum_sq_residual: v,
            restarts,
            weighted,
        }),
        _ => Err(Error::NoConvergence { restarts }),
    }
}

/// Merges entries that share a size, pooling their per-run values.
pub fn aggregate_sizes(points: &[SizePoint]) -> Vec<SizePoint> {
    let mut merged: Vec<SizePoint> = Vec::new();
    for p in points {
        match merged.iter_mut().find(|m| m.size == p.size) {
            Some(m) => {
                m.runs.extend(&p.runs);
                m.excluded.extend(&p.excluded);
            }
            None => merged.push(p.clone()),
        }
    }
    for m in &mut merged {
        let (phi, sigma) = mean_sd(&m.runs);
        m.phi = phi;
        m.sigma = sigma;
    }
    merged.sort_by_key(|m| m.size);
    merged
}

fn mean_sd(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, sd)
}

/// Trains every seed at every size (first `size` examples of `raw`) and
/// collects the straggler fraction of each run with a detected inversion.
pub fn phi_vs_size(raw: &RawDataset, sizes: &[usize], spec: &RunSpec, seeds: &[u64]) -> Result<Vec<SizePoint>> {
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let ds = standardize(&subsample(raw, size, 0)?, None)?;
        let mut point = SizePoint {
            size,
            phi: f64::NAN,
            sigma: None,
            runs: Vec::new(),
            excluded: Vec::new(),
        };
        for (&seed, result) in seeds.iter().zip(spec.run_seeds(&ds, None, seeds)) {
            let (_, log) = result?;
            match detect_inversion(&log) {
                Ok(r) if r.converged => point.runs.push(r.phi),
                _ => point.excluded.push(seed),
            }
        }
        out.push(point);
    }
    Ok(aggregate_sizes(&out))
}

/// Fits the points that have at least one usable run, weighting only when
/// every size has a spread.
pub fn fit_size_points(points: &[SizePoint], restarts: usize, seed: u64) -> Result<ScalingFit> {
    let rows: Vec<(f64, f64, Option<f64>)> = points
        .iter()
        .filter(|p| !p.runs.is_empty())
        .map(|p| (p.size as f64, p.phi, p.sigma))
        .collect();
    fit_phi(&rows, restarts, seed)
}

pub fn table_digest(points: &[(f64, f64, Option<f64>)]) -> String {
    let mut h = Sha256::new();
    for (p, phi, s) in points {
        h.update(p.to_le_bytes());
        h.update(phi.to_le_bytes());
        h.update(s.unwrap_or(f64::NAN).to_le_bytes());
    }
    hex(&h.finalize())
}

/// Plain `key = value` report of a fit and the table it came from.
pub fn write_fit_report(path: impl AsRef<Path>, fit: &ScalingFit, points: &[(f64, f64, Option<f64>)]) -> Result<()> {
    let mut s = String::new();
    s.push_str(&format!("phi_inf = {:.10}\n", fit.phi_inf));
    s.push_str(&format!("p0 = {:.10}\n", fit.p0));
    s.push_str(&format!("gamma = {:.10}\n", fit.gamma));
    s.push_str(&format!("sum_sq_residual = {:.6e}\n", fit.sum_sq_residual));
    s.push_str(&format!("restarts = {}\n", fit.restarts));
    s.push_str(&format!("weighting = \"{}\"\n", if fit.weighted { "inverse_sd" } else { "none" }));
    s.push_str(&format!("table_digest = \"{}\"\n", table_digest(points)));
    s.push_str("# size phi sigma\n");
    for (p, phi, sigma) in points {
        let sigma = sigma.map_or("nan".to_string(), |v| format!("{v:.6}"));
        s.push_str(&format!("# {p} {phi:.6} {sigma}\n"));
    }
    write_atomic(path.as_ref(), s.as_bytes())
}
