use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{RawDataset, Source, Split};

/// Ten random class prototypes in `[0,1]^dim` with Gaussian jitter of standard
/// deviation `spread`, clamped back into `[0,1]`. Class ids cycle through
/// `0..=9` with random offsets so every class is represented when `size >= 10`.
pub fn synthetic_digits(size: usize, dim: usize, spread: f64, seed: u64) -> RawDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes = Array2::from_shape_fn((10, dim), |_| rng.random::<f64>());
    let jitter = Normal::new(0.0, spread.max(0.0)).expect("finite spread");
    let class_ids: Vec<u8> = (0..size).map(|i| ((i + rng.random_range(0..10)) % 10) as u8).collect();
    let images = Array2::from_shape_fn((size, dim), |(r, c)| {
        let base = prototypes[[class_ids[r] as usize, c]];
        (base + jitter.sample(&mut rng)).clamp(0.0, 1.0)
    });
    RawDataset {
        images,
        class_ids,
        source_index: (0..size).collect(),
        split: Split::Train,
        source: Source::Synthetic,
    }
}
