//! Dataset ingestion and the derived training sets used by the experiments:
//! subsampling, standardization, parity labels, label randomization, input
//! noise and pruning.

mod cache;
mod cifar;
mod idx;
mod synthetic;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{read_cache, write_cache, CACHE_HEADER};
pub use cifar::{load_cifar10, parse_cifar_batch};
pub use idx::{encode_idx, load_idx, parse_idx, IdxTensor, IMAGE_MAGIC, LABEL_MAGIC};
pub use synthetic::synthetic_digits;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Mnist,
    Kmnist,
    Fashion,
    Cifar10,
    /// Generated Gaussian clusters; used for smoke tests and examples.
    Synthetic,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Source::Mnist => "mnist",
            Source::Kmnist => "kmnist",
            Source::Fashion => "fashion",
            Source::Cifar10 => "cifar10",
            Source::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Unprocessed images with intensities in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct RawDataset {
    /// One row per example.
    pub images: Array2<f64>,
    pub class_ids: Vec<u8>,
    /// Position of each row in the original split.
    pub source_index: Vec<usize>,
    pub split: Split,
    pub source: Source,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.images.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.images.ncols()
    }
}

/// Standardized inputs with binary labels, ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    /// `+1` or `-1`.
    pub labels: Vec<i8>,
    pub class_ids: Vec<u8>,
    pub source_index: Vec<usize>,
    pub source: Source,
    pub split: Split,
    pub labels_randomized: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// A set that cannot support training or the two-class metrics.
    pub fn is_degenerate(&self) -> bool {
        self.len() < 2
            || !self.labels.contains(&1)
            || !self.labels.contains(&-1)
    }

    pub fn indices(&self) -> IndexSet {
        self.source_index.iter().copied().collect()
    }

    /// Keeps the rows at the given positions, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            class_ids: rows.iter().map(|&r| self.class_ids[r]).collect(),
            source_index: rows.iter().map(|&r| self.source_index[r]).collect(),
            source: self.source,
            split: self.split,
            labels_randomized: self.labels_randomized,
        }
    }

    /// Hex SHA-256 over shape, indices, labels and input bits.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.input_dim() as u64).to_le_bytes());
        for &i in &self.source_index {
            h.update((i as u64).to_le_bytes());
        }
        h.update(self.labels.iter().map(|&l| l as u8).collect::<Vec<_>>());
        h.update(&self.class_ids);
        for &x in self.inputs.iter() {
            h.update(x.to_bits().to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A set of `source_index` values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet(BTreeSet<usize>);

impl IndexSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }

    pub fn insert(&mut self, index: usize) -> bool {
        self.0.insert(index)
    }

    /// Sorted ascending.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn intersection_len(&self, other: &IndexSet) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().filter(|&i| large.contains(i)).count()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.0.union(&other.0).copied().collect())
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        IndexSet(iter.into_iter().collect())
    }
}

fn file_prefix(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "t10k",
    }
}

/// Loads `{train,t10k}-images-idx3-ubyte` and the matching label file from
/// `dir`. The same file names are used by all three MNIST-family sets.
pub fn load_mnist_family(dir: impl AsRef<Path>, split: Split, source: Source) -> Result<RawDataset> {
    let dir = dir.as_ref();
    let prefix = file_prefix(split);
    let images = load_idx(dir.join(format!("{prefix}-images-idx3-ubyte")))?;
    let labels = load_idx(dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
    if images.dims.len() != 3 {
        return Err(Error::IdxMagic(images.magic()));
    }
    if labels.dims.len() != 1 {
        return Err(Error::IdxMagic(labels.magic()));
    }
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.data.iter().find(|&&c| c > 9) {
        return Err(Error::ClassOutOfRange(bad));
    }
    let n = images.len();
    let pixels = Array2::from_shape_vec((n, images.item_size()), images.to_unit_interval())
        .expect("IDX payload length checked by parser");
    Ok(RawDataset {
        images: pixels,
        class_ids: labels.data,
        source_index: (0..n).collect(),
        split,
        source,
    })
}

/// Even classes map to `+1`, odd classes to `-1`.
pub fn binarize_parity(class_ids: &[u8]) -> Result<Vec<i8>> {
    class_ids
        .iter()
        .map(|&c| match c {
            0..=9 if c % 2 == 0 => Ok(1),
            0..=9 => Ok(-1),
            _ => Err(Error::ClassOutOfRange(c)),
        })
        .collect()
}

/// Rows `[chunk * size, (chunk + 1) * size)` in source order.
pub fn subsample(raw: &RawDataset, size: usize, chunk: usize) -> Result<RawDataset> {
    let start = chunk.saturating_mul(size);
    let end = start.saturating_add(size);
    if end > raw.len() || size == 0 {
        return Err(Error::RangeExceeded {
            start,
            end,
            len: raw.len(),
        });
    }
    Ok(RawDataset {
        images: raw.images.slice(ndarray::s![start..end, ..]).to_owned(),
        class_ids: raw.class_ids[start..end].to_vec(),
        source_index: raw.source_index[start..end].to_vec(),
        split: raw.split,
        source: raw.source,
    })
}

/// Per-pixel standardization with statistics of the set being standardized.
/// Constant pixels map to zero.
pub fn standardize(raw: &RawDataset, subset: Option<&IndexSet>) -> Result<Dataset> {
    let rows: Vec<usize> = match subset {
        None => (0..raw.len()).collect(),
        Some(set) => {
            let present: HashSet<usize> = raw.source_index.iter().copied().collect();
            if let Some(missing) = set.iter().find(|i| !present.contains(i)) {
                return Err(Error::UnknownIndex(missing));
            }
            (0..raw.len())
                .filter(|&r| set.contains(raw.source_index[r]))
                .collect()
        }
    };
    if rows.len() < 2 {
        return Err(Error::TooFewExamples {
            needed: 2,
            got: rows.len(),
        });
    }
    let class_ids: Vec<u8> = rows.iter().map(|&r| raw.class_ids[r]).collect();
    let labels = binarize_parity(&class_ids)?;
    let mut inputs = raw.images.select(Axis(0), &rows);
    standardize_columns(&mut inputs);
    Ok(Dataset {
        inputs,
        labels,
        class_ids,
        source_index: rows.iter().map(|&r| raw.source_index[r]).collect(),
        source: raw.source,
        split: raw.split,
        labels_randomized: false,
    })
}

pub(crate) fn standardize_columns(x: &mut Array2<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.columns_mut() {
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if lo == hi {
            col.fill(0.0);
            continue;
        }
        let mean = col.sum() / n;
        let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        col.mapv_inplace(|v| (v - mean) / std);
    }
}

/// Replaces every label with an independent fair coin flip.
pub fn randomize_labels(ds: &Dataset, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    for l in &mut out.labels {
        *l = if rng.random::<bool>() { 1 } else { -1 };
    }
    out.labels_randomized = true;
    out
}

/// Adds i.i.d. Gaussian noise to every input component. No re-standardization.
pub fn add_noise(ds: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::NegativeSigma(sigma));
    }
    let mut out = ds.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.inputs.mapv_inplace(|v| v + normal.sample(&mut rng));
    Ok(out)
}

/// Removes the examples whose `source_index` is in `removed`, keeping the
/// survivors in order. Removing everything yields an empty (degenerate) set.
pub fn prune(ds: &Dataset, removed: &IndexSet) -> Result<Dataset> {
    let present: HashSet<usize> = ds.source_index.iter().copied().collect();
    if let Some(missing) = removed.iter().find(|i| !present.contains(i)) {
        return Err(Error::UnknownIndex(missing));
    }
    let keep: Vec<usize> = (0..ds.len())
        .filter(|&r| !removed.contains(ds.source_index[r]))
        .collect();
    Ok(ds.select_rows(&keep))
}
