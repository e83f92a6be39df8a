//! CIFAR-10 binary batches: 1 label byte followed by 1024 red, 1024 green
//! and 1024 blue bytes per record. Images are averaged down to greyscale.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{RawDataset, Source, Split};
use crate::error::{Error, Result};

pub const RECORD_LEN: usize = 1 + 3 * PLANE;
pub const PLANE: usize = 1024;

/// Decodes one batch into `(greyscale pixels, class ids)`.
pub fn parse_cifar_batch(bytes: &[u8]) -> Result<(Vec<f64>, Vec<u8>)> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        return Err(Error::CifarRecordSize(bytes.len()));
    }
    let n = bytes.len() / RECORD_LEN;
    let mut pixels = Vec::with_capacity(n * PLANE);
    let mut labels = Vec::with_capacity(n);
    for record in bytes.chunks_exact(RECORD_LEN) {
        let class = record[0];
        if class > 9 {
            return Err(Error::ClassOutOfRange(class));
        }
        labels.push(class);
        let (r, rest) = record[1..].split_at(PLANE);
        let (g, b) = rest.split_at(PLANE);
        pixels.extend(
            r.iter()
                .zip(g)
                .zip(b)
                .map(|((&r, &g), &b)| {
                    (f64::from(r) / 255.0 + f64::from(g) / 255.0 + f64::from(b) / 255.0) / 3.0
                }),
        );
    }
    Ok((pixels, labels))
}

/// Concatenates the given batch files in order.
pub fn load_cifar10<P: AsRef<Path>>(paths: &[P], split: Split) -> Result<RawDataset> {
    let mut pixels = Vec::new();
    let mut class_ids = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (p, l) = parse_cifar_batch(&bytes)?;
        pixels.extend(p);
        class_ids.extend(l);
    }
    let n = class_ids.len();
    let images = Array2::from_shape_vec((n, PLANE), pixels).expect("record layout");
    Ok(RawDataset {
        images,
        source_index: (0..n).collect(),
        class_ids,
        split,
        source: Source::Cifar10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: u8, r: u8, g: u8, b: u8) -> Vec<u8> {
        let mut v = vec![label];
        v.extend(std::iter::repeat_n(r, PLANE));
        v.extend(std::iter::repeat_n(g, PLANE));
        v.extend(std::iter::repeat_n(b, PLANE));
        v
    }

    #[test]
    fn equal_channels_pass_through() {
        let (px, labels) = parse_cifar_batch(&record(3, 51, 51, 51)).unwrap();
        assert_eq!(labels, vec![3]);
        assert!(px.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn pure_red_is_one_third() {
        let (px, _) = parse_cifar_batch(&record(0, 255, 0, 0)).unwrap();
        assert!(px.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn record_count_and_size_check() {
        let mut bytes = record(1, 0, 0, 0);
        bytes.extend(record(2, 255, 255, 255));
        let (px, labels) = parse_cifar_batch(&bytes).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(px.len(), 2 * PLANE);

        bytes.pop();
        assert!(matches!(
            parse_cifar_batch(&bytes),
            Err(Error::CifarRecordSize(6145))
        ));
    }
}
