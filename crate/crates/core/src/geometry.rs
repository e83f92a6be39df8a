//! Class manifolds on the unit sphere and their three metric quantities: the
//! gyration radius of each class and the distance between class centroids.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::network::MlpModel;

/// Projected representations of the `+1` and `-1` training examples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassManifolds {
    pub plus: Array2<f64>,
    pub minus: Array2<f64>,
    pub epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub r_plus: f64,
    pub r_minus: f64,
    pub d: f64,
}

impl MetricTriple {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::RPlus => self.r_plus,
            Metric::RMinus => self.r_minus,
            Metric::D => self.d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    RPlus,
    RMinus,
    D,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::RPlus, Metric::RMinus, Metric::D];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::RPlus => "r_plus",
            Metric::RMinus => "r_minus",
            Metric::D => "d",
        }
    }
}

pub fn project_unit(h: ArrayView1<f64>) -> Result<Array1<f64>> {
    let norm = h.dot(&h).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(h.mapv(|v| v / norm))
}

/// Projects every row onto the unit sphere.
pub fn project_rows(h: ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut out = h.to_owned();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(out)
}

fn centroid(points: ArrayView2<f64>) -> Result<Array1<f64>> {
    points.mean_axis(Axis(0)).ok_or(Error::EmptySet)
}

/// Root of `1/(2n^2) sum_{x,y} |x-y|^2`, evaluated through the equivalent
/// mean squared distance to the centroid.
pub fn gyration_radius(points: ArrayView2<f64>) -> Result<f64> {
    let c = centroid(points)?;
    let n = points.nrows() as f64;
    let ss: f64 = points
        .rows()
        .into_iter()
        .map(|p| p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok((ss / n).sqrt())
}

/// Euclidean distance between the two centroids.
pub fn centroid_distance(plus: ArrayView2<f64>, minus: ArrayView2<f64>) -> Result<f64> {
    let diff = centroid(plus)? - centroid(minus)?;
    Ok(diff.dot(&diff).sqrt())
}

/// Splits projected representations by true label.
pub fn manifolds_from_hidden(hidden: ArrayView2<f64>, labels: &[i8], epoch: usize) -> Result<ClassManifolds> {
    if hidden.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: hidden.nrows(),
            found: labels.len(),
        });
    }
    let projected = project_rows(hidden)?;
    let rows = |sign: i8| -> Vec<usize> {
        labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == sign)
            .map(|(i, _)| i)
            .collect()
    };
    Ok(ClassManifolds {
        plus: projected.select(Axis(0), &rows(1)),
        minus: projected.select(Axis(0), &rows(-1)),
        epoch,
    })
}

/// Class manifolds at hidden layer `layer` (counted from 1).
pub fn manifolds(model: &MlpModel, ds: &Dataset, layer: usize) -> Result<ClassManifolds> {
    if ds.is_empty() {
        return Err(Error::EmptySet);
    }
    if layer == 0 || layer > model.hidden_layers() {
        return Err(Error::LayerOutOfRange {
            layer,
            hidden: model.hidden_layers(),
        });
    }
    let pass = model.forward_batch(ds.inputs.view())?;
    manifolds_from_hidden(pass.hidden[layer - 1].view(), &ds.labels, 0)
}

impl ClassManifolds {
    pub fn metrics(&self) -> Result<MetricTriple> {
        Ok(MetricTriple {
            r_plus: gyration_radius(self.plus.view())?,
            r_minus: gyration_radius(self.minus.view())?,
            d: centroid_distance(self.plus.view(), self.minus.view())?,
        })
    }
}

/// Metric triple straight from a hidden-activation matrix without keeping
/// the partition around.
pub fn metrics_from_hidden(hidden: ArrayView2<f64>, labels: &[i8]) -> Result<MetricTriple> {
    if hidden.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: hidden.nrows(),
            found: labels.len(),
        });
    }
    let dim = hidden.ncols();
    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    let mut unit = vec![0.0; dim];
    let unit_rows = |row: ArrayView1<f64>, unit: &mut [f64]| -> Result<()> {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        for (u, &v) in unit.iter_mut().zip(row) {
            *u = v / norm;
        }
        Ok(())
    };
    for (row, &l) in hidden.rows().into_iter().zip(labels) {
        unit_rows(row, &mut unit)?;
        let k = usize::from(l < 0);
        counts[k] += 1;
        for (s, u) in sums[k].iter_mut().zip(&unit) {
            *s += u;
        }
    }
    if counts.contains(&0) {
        return Err(Error::EmptySet);
    }
    let centroids: Vec<Vec<f64>> = (0..2)
        .map(|k| sums[k].iter().map(|s| s / counts[k] as f64).collect())
        .collect();
    let mut ss = [0.0; 2];
    for (row, &l) in hidden.rows().into_iter().zip(labels) {
        unit_rows(row, &mut unit)?;
        let k = usize::from(l < 0);
        ss[k] += unit
            .iter()
            .zip(&centroids[k])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    let d = centroids[0]
        .iter()
        .zip(&centroids[1])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(MetricTriple {
        r_plus: (ss[0] / counts[0] as f64).sqrt(),
        r_minus: (ss[1] / counts[1] as f64).sqrt(),
        d,
    })
}

pub fn metric_triple(model: &MlpModel, ds: &Dataset, layer: usize) -> Result<MetricTriple> {
    manifolds(model, ds, layer)?.metrics()
}
