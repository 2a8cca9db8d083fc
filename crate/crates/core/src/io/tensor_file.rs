//! Minimal binary tensor container.
//!
//! Layout (little-endian throughout):
//! - magic: 8 ASCII bytes `GSTENSR1`
//! - ndim: u32
//! - dims: ndim x u32
//! - dtype: 1 byte (1 = IEEE-754 binary32, 2 = binary64)
//! - payload: row-major raw values (last axis fastest)

use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::FeatureMap;

pub const TENSOR_MAGIC: &[u8; 8] = b"GSTENSR1";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn dtype_code(&self) -> u8 {
        match self {
            TensorData::F32(_) => f32::DTYPE_CODE,
            TensorData::F64(_) => f64::DTYPE_CODE,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Values converted to the requested precision (f64 -> f32 rounds).
    pub fn to_vec<S: Scalar>(&self) -> Vec<S> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| S::from_f64(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| S::from_f64(x)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

fn format_err(path: &str, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_string(),
        message: message.into(),
    }
}

impl TensorFile {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if dims.is_empty() || expect != data.len() {
            return Err(Error::InvalidArgument(format!(
                "dims {dims:?} do not match {} payload values",
                data.len()
            )));
        }
        Ok(TensorFile { dims, data })
    }

    pub fn from_feature_map<S: Scalar>(m: &FeatureMap<S>) -> Self {
        let dims = vec![m.channels(), m.height(), m.width()];
        let values: Vec<f64> = m.data().iter().map(|&v| v.as_f64()).collect();
        let data = match S::DTYPE_CODE {
            1 => TensorData::F32(values.into_iter().map(|v| v as f32).collect()),
            _ => TensorData::F64(values),
        };
        TensorFile { dims, data }
    }

    /// Interprets the payload as a `[C, H, W]` feature map, converting to
    /// the requested precision.
    pub fn to_feature_map<S: Scalar>(&self) -> Result<FeatureMap<S>> {
        if self.dims.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "expected a 3-dimensional tensor, got dims {:?}",
                self.dims
            )));
        }
        let (c, h, w) = (self.dims[0], self.dims[1], self.dims[2]);
        let arr = Array3::from_shape_vec((c, h, w), self.data.to_vec::<S>())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        FeatureMap::new(arr)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 4 * self.dims.len() + self.data.len() * 8);
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(self.data.dtype_code());
        match &self.data {
            TensorData::F32(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            TensorData::F64(v) => {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &str) -> Result<Self> {
        let take = |offset: usize, len: usize| -> Result<&[u8]> {
            bytes
                .get(offset..offset + len)
                .ok_or_else(|| format_err(path, format!("truncated at byte {offset}")))
        };
        if take(0, 8)? != TENSOR_MAGIC {
            return Err(format_err(path, "bad magic, not a tensor file"));
        }
        let ndim = u32::from_le_bytes(take(8, 4)?.try_into().unwrap()) as usize;
        if ndim == 0 || ndim > 8 {
            return Err(format_err(path, format!("implausible ndim {ndim}")));
        }
        let mut dims = Vec::with_capacity(ndim);
        for i in 0..ndim {
            let d = u32::from_le_bytes(take(12 + 4 * i, 4)?.try_into().unwrap()) as usize;
            if d == 0 {
                return Err(format_err(path, "zero-length dimension"));
            }
            dims.push(d);
        }
        let dtype_at = 12 + 4 * ndim;
        let dtype = take(dtype_at, 1)?[0];
        let count: usize = dims.iter().product();
        let payload_at = dtype_at + 1;
        let data = match dtype {
            1 => {
                let raw = take(payload_at, count * 4)?;
                TensorData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
            }
            2 => {
                let raw = take(payload_at, count * 8)?;
                TensorData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            }
            other => return Err(format_err(path, format!("unknown dtype code {other}"))),
        };
        let expected_len = payload_at + count * if dtype == 1 { 4 } else { 8 };
        if bytes.len() != expected_len {
            return Err(format_err(
                path,
                format!("trailing bytes: file is {} bytes, expected {expected_len}", bytes.len()),
            ));
        }
        Ok(TensorFile { dims, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        super::write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    #[test]
    fn header_bytes_are_pinned() {
        let t = TensorFile::new(vec![1, 2, 2], TensorData::F32(vec![1.0, 0.0, -1.0, 0.5])).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..8], b"GSTENSR1");
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes()); // ndim
        assert_eq!(&bytes[12..16], &1u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &2u32.to_le_bytes());
        assert_eq!(&bytes[20..24], &2u32.to_le_bytes());
        assert_eq!(bytes[24], 1); // f32 dtype code
        assert_eq!(&bytes[25..29], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 25 + 16);
    }

    #[test]
    fn truncated_and_corrupt_files_are_rejected() {
        let t = TensorFile::new(vec![2, 2], TensorData::F64(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        let bytes = t.to_bytes();
        assert!(TensorFile::from_bytes(&bytes[..bytes.len() - 3], "x").is_err());
        assert!(TensorFile::from_bytes(&bytes[..10], "x").is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(TensorFile::from_bytes(&bad_magic, "x").is_err());
        let mut bad_dtype = bytes.clone();
        bad_dtype[20] = 9;
        assert!(TensorFile::from_bytes(&bad_dtype, "x").is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(TensorFile::from_bytes(&trailing, "x").is_err());
    }

    #[test]
    fn feature_map_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = CounterRng::new(5);
        let m = FeatureMap::new(ndarray::Array3::from_shape_fn((2, 3, 4), |_| {
            rng.uniform_in(-1.0, 1.0) as f32
        }))
        .unwrap();
        let path = dir.path().join("map.gst");
        TensorFile::from_feature_map(&m).write(&path).unwrap();
        let back = TensorFile::read(&path).unwrap().to_feature_map::<f32>().unwrap();
        assert_eq!(m.data(), back.data());
    }

    proptest! {
        // byte-level round trip is the identity for both precisions,
        // including non-finite payloads
        #[test]
        fn prop_round_trip_bit_exact(seed in 0u64..300, f64_mode: bool, rows in 1usize..5, cols in 1usize..5) {
            let mut rng = CounterRng::new(seed);
            let n = rows * cols;
            let t = if f64_mode {
                let mut v: Vec<f64> = (0..n).map(|_| rng.uniform_in(-1e9, 1e9)).collect();
                if n > 2 { v[1] = f64::NAN; v[2] = f64::INFINITY; }
                TensorFile::new(vec![rows, cols], TensorData::F64(v)).unwrap()
            } else {
                let v: Vec<f32> = (0..n).map(|_| rng.uniform_in(-1e9, 1e9) as f32).collect();
                TensorFile::new(vec![rows, cols], TensorData::F32(v)).unwrap()
            };
            let bytes = t.to_bytes();
            let back = TensorFile::from_bytes(&bytes, "prop").unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
