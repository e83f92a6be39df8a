//! Flat binary dump of a [`Dataset`] so experiments can skip re-parsing.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "STRAGGLERS-DATASET v1\n"             header string
//! u8 source, u8 split, u8 labels_randomized
//! u64 P, u64 N
//! P x u64   source_index
//! P x i8    labels
//! P x u8    class_ids
//! P*N x f64 inputs, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, Source, Split};
use crate::error::{Error, Result};

pub const CACHE_HEADER: &[u8] = b"STRAGGLERS-DATASET v1\n";

fn source_tag(s: Source) -> u8 {
    match s {
        Source::Mnist => 0,
        Source::Kmnist => 1,
        Source::Fashion => 2,
        Source::Cifar10 => 3,
        Source::Synthetic => 4,
    }
}

fn tag_source(t: u8) -> Result<Source> {
    Ok(match t {
        0 => Source::Mnist,
        1 => Source::Kmnist,
        2 => Source::Fashion,
        3 => Source::Cifar10,
        4 => Source::Synthetic,
        _ => return Err(Error::Cache(format!("unknown source tag {t}"))),
    })
}

pub fn write_cache(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let p = ds.len();
    let mut buf = Vec::with_capacity(CACHE_HEADER.len() + 19 + p * (10 + 8 * ds.input_dim()));
    buf.extend_from_slice(CACHE_HEADER);
    buf.push(source_tag(ds.source));
    buf.push(matches!(ds.split, Split::Test) as u8);
    buf.push(ds.labels_randomized as u8);
    buf.extend_from_slice(&(p as u64).to_le_bytes());
    buf.extend_from_slice(&(ds.input_dim() as u64).to_le_bytes());
    for &i in &ds.source_index {
        buf.extend_from_slice(&(i as u64).to_le_bytes());
    }
    buf.extend(ds.labels.iter().map(|&l| l as u8));
    buf.extend_from_slice(&ds.class_ids);
    for &x in ds.inputs.iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Cache("truncated cache file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if c.take(CACHE_HEADER.len())? != CACHE_HEADER {
        return Err(Error::Cache("missing or unsupported version header".into()));
    }
    let source = tag_source(c.u8()?)?;
    let split = if c.u8()? == 0 { Split::Train } else { Split::Test };
    let labels_randomized = c.u8()? != 0;
    let p = c.u64()? as usize;
    let n = c.u64()? as usize;
    let source_index = (0..p)
        .map(|_| c.u64().map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let labels = c.take(p)?.iter().map(|&b| b as i8).collect();
    let class_ids = c.take(p)?.to_vec();
    let len = p
        .checked_mul(n)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| Error::Cache("dimensions overflow".into()))?;
    let floats = c
        .take(len)?
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if c.pos != bytes.len() {
        return Err(Error::Cache("trailing bytes".into()));
    }
    Ok(Dataset {
        inputs: Array2::from_shape_vec((p, n), floats).expect("length checked"),
        labels,
        class_ids,
        source_index,
        source,
        split,
        labels_randomized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{standardize, synthetic_digits};

    #[test]
    fn cache_round_trip() {
        let raw = synthetic_digits(40, 6, 0.3, 5);
        let ds = standardize(&raw, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.bin");
        write_cache(&ds, &path).unwrap();
        assert_eq!(read_cache(&path).unwrap(), ds);

        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_cache(&path), Err(Error::Cache(_))));
    }
}
