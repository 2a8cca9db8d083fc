//! Versioned parameter checkpoints.
//!
//! Layout (little-endian):
//! - magic: 8 ASCII bytes `GSPARAM1`
//! - version: u32 (currently 1; anything else is rejected)
//! - dtype: u8 (1 = f32, 2 = f64), axis: u8 (0 spatial, 1 channel),
//!   convention: u8 (0 paper, 1 standard), reserved: u8 = 0
//! - C, H, W, reduction, k: u32 each
//! - group_counts: k x u32
//! - n_records: u32
//! - records in sorted-path order: path_len u32, UTF-8 path, ndim u32,
//!   dims, raw payload
//!
//! Loading rebuilds the parameter tree from the header echo and fills every
//! record by path, so forward outputs are restored bit-exactly on the same
//! platform.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::groupfc::BilinearConvention;
use crate::scalar::Scalar;
use crate::transdeno::{AttentionAxis, ParamId, TransDenoConfig, TransDenoParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GSPARAM1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A checkpoint restored at whichever precision it was saved with.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedParams {
    F32(TransDenoParams<f32>),
    F64(TransDenoParams<f64>),
}

impl LoadedParams {
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            LoadedParams::F32(p) => (p.channels(), p.height(), p.width()),
            LoadedParams::F64(p) => (p.channels(), p.height(), p.width()),
        }
    }
}

pub fn checkpoint_to_bytes<S: Scalar>(params: &TransDenoParams<S>) -> Vec<u8> {
    let config = params.config();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(S::DTYPE_CODE);
    out.push(match config.axis {
        AttentionAxis::Spatial => 0,
        AttentionAxis::Channel => 1,
    });
    out.push(match config.convention {
        BilinearConvention::Paper => 0,
        BilinearConvention::Standard => 1,
    });
    out.push(0);
    for v in [
        params.channels(),
        params.height(),
        params.width(),
        config.reduction,
        config.group_counts.len(),
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &g in &config.group_counts {
        out.extend_from_slice(&(g as u32).to_le_bytes());
    }

    let mut ids: Vec<ParamId> = params.param_ids();
    ids.sort_by_key(|id| id.path());
    out.extend_from_slice(&(ids.len() as u32).to_le_bytes());
    for id in ids {
        let path = id.path();
        out.extend_from_slice(&(path.len() as u32).to_le_bytes());
        out.extend_from_slice(path.as_bytes());
        let dims = params.param_dims(id).expect("own id");
        out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in params.param_slice(id).expect("own id") {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn save_checkpoint<S: Scalar>(path: &Path, params: &TransDenoParams<S>) -> Result<()> {
    super::write_atomic(path, &checkpoint_to_bytes(params))
}

fn format_err(path: &str, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_string(),
        message: message.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let slice = self
            .bytes
            .get(self.offset..self.offset + len)
            .ok_or_else(|| format_err(self.path, format!("truncated at byte {}", self.offset)))?;
        self.offset += len;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8], path: &str) -> Result<LoadedParams> {
    let mut r = Reader { bytes, offset: 0, path };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(format_err(path, "bad magic, not a checkpoint"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format_err(
            path,
            format!("unsupported checkpoint version {version} (supported: {CHECKPOINT_VERSION})"),
        ));
    }
    let dtype = r.u8()?;
    let axis = match r.u8()? {
        0 => AttentionAxis::Spatial,
        1 => AttentionAxis::Channel,
        other => return Err(format_err(path, format!("unknown axis code {other}"))),
    };
    let convention = match r.u8()? {
        0 => BilinearConvention::Paper,
        1 => BilinearConvention::Standard,
        other => return Err(format_err(path, format!("unknown convention code {other}"))),
    };
    let _reserved = r.u8()?;
    let c = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let reduction = r.u32()? as usize;
    let k = r.u32()? as usize;
    if k == 0 || k > 64 {
        return Err(format_err(path, format!("implausible design-space size {k}")));
    }
    let mut group_counts = Vec::with_capacity(k);
    for _ in 0..k {
        group_counts.push(r.u32()? as usize);
    }
    let config = TransDenoConfig {
        reduction,
        group_counts,
        convention,
        axis,
    };
    match dtype {
        1 => Ok(LoadedParams::F32(fill_params::<f32>(&mut r, c, h, w, config)?)),
        2 => Ok(LoadedParams::F64(fill_params::<f64>(&mut r, c, h, w, config)?)),
        other => Err(format_err(path, format!("unknown dtype code {other}"))),
    }
}

fn fill_params<S: Scalar>(
    r: &mut Reader<'_>,
    c: usize,
    h: usize,
    w: usize,
    config: TransDenoConfig,
) -> Result<TransDenoParams<S>> {
    let mut params = TransDenoParams::<S>::zeros(c, h, w, config)
        .map_err(|e| format_err(r.path, format!("invalid configuration echo: {e}")))?;
    let expected: HashSet<String> = params.param_ids().iter().map(|id| id.path()).collect();
    let n_records = r.u32()? as usize;
    if n_records != expected.len() {
        return Err(format_err(
            r.path,
            format!("expected {} parameter records, found {n_records}", expected.len()),
        ));
    }
    let mut seen = HashSet::new();
    for _ in 0..n_records {
        let path_len = r.u32()? as usize;
        if path_len > 256 {
            return Err(format_err(r.path, format!("implausible path length {path_len}")));
        }
        let record_path = std::str::from_utf8(r.take(path_len)?)
            .map_err(|_| format_err(r.path, "non-UTF-8 parameter path"))?
            .to_string();
        let id = ParamId::parse(&record_path)
            .filter(|_| expected.contains(&record_path))
            .ok_or_else(|| format_err(r.path, format!("unknown parameter path {record_path}")))?;
        if !seen.insert(record_path.clone()) {
            return Err(format_err(r.path, format!("duplicate parameter path {record_path}")));
        }
        let ndim = r.u32()? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32()? as usize);
        }
        if params.param_dims(id) != Some(dims.clone()) {
            return Err(format_err(
                r.path,
                format!("dimension mismatch for {record_path}: file has {dims:?}"),
            ));
        }
        let count: usize = dims.iter().product();
        let raw = r.take(count * S::BYTES)?;
        let dst = params
            .param_slice_mut(id)
            .ok_or_else(|| format_err(r.path, format!("unresolvable path {record_path}")))?;
        for (i, chunk) in raw.chunks_exact(S::BYTES).enumerate() {
            dst[i] = S::read_le(chunk);
        }
    }
    if r.offset != r.bytes.len() {
        return Err(format_err(
            r.path,
            format!("trailing bytes after last record ({} of {})", r.offset, r.bytes.len()),
        ));
    }
    Ok(params)
}

pub fn load_checkpoint(path: &Path) -> Result<LoadedParams> {
    let bytes = std::fs::read(path)?;
    checkpoint_from_bytes(&bytes, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::transdeno::transdeno_forward;
    use ndarray::Array3;

    fn demo_params() -> TransDenoParams<f32> {
        let config = TransDenoConfig {
            reduction: 2,
            group_counts: vec![2, 4],
            convention: BilinearConvention::Paper,
            axis: AttentionAxis::Spatial,
        };
        TransDenoParams::init(2, 2, 4, config, 11).unwrap()
    }

    #[test]
    fn round_trip_restores_forward_outputs_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let params = demo_params();
        let path = dir.path().join("model.gsp");
        save_checkpoint(&path, &params).unwrap();
        let loaded = match load_checkpoint(&path).unwrap() {
            LoadedParams::F32(p) => p,
            _ => panic!("expected f32 checkpoint"),
        };
        assert_eq!(loaded, params);
        let mut rng = CounterRng::new(9);
        let m = crate::spectral::FeatureMap::new(Array3::from_shape_fn((2, 2, 4), |_| {
            rng.uniform_in(-1.0, 1.0) as f32
        }))
        .unwrap();
        let a = transdeno_forward(&m, &params).unwrap();
        let b = transdeno_forward(&m, &loaded).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn bytes_round_trip_is_identity() {
        let params = demo_params();
        let bytes = checkpoint_to_bytes(&params);
        let loaded = checkpoint_from_bytes(&bytes, "mem").unwrap();
        let again = match &loaded {
            LoadedParams::F32(p) => checkpoint_to_bytes(p),
            LoadedParams::F64(p) => checkpoint_to_bytes(p),
        };
        assert_eq!(bytes, again);
    }

    #[test]
    fn f64_checkpoints_round_trip() {
        let config = TransDenoConfig {
            reduction: 2,
            group_counts: vec![2],
            convention: BilinearConvention::Standard,
            axis: AttentionAxis::Channel,
        };
        let params = TransDenoParams::<f64>::init(4, 3, 3, config, 5).unwrap();
        let bytes = checkpoint_to_bytes(&params);
        match checkpoint_from_bytes(&bytes, "mem").unwrap() {
            LoadedParams::F64(p) => assert_eq!(p, params),
            _ => panic!("expected f64 checkpoint"),
        }
    }

    #[test]
    fn unknown_future_version_is_rejected() {
        let params = demo_params();
        let mut bytes = checkpoint_to_bytes(&params);
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        let err = checkpoint_from_bytes(&bytes, "mem").unwrap_err();
        assert!(err.to_string().contains("version 2"), "{err}");
    }

    #[test]
    fn corrupted_records_are_rejected() {
        let params = demo_params();
        let bytes = checkpoint_to_bytes(&params);
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 5], "mem").is_err());
        let mut trailing = bytes.clone();
        trailing.push(7);
        assert!(checkpoint_from_bytes(&trailing, "mem").is_err());
        let mut bad_magic = bytes;
        bad_magic[3] = b'!';
        assert!(checkpoint_from_bytes(&bad_magic, "mem").is_err());
    }
}
