//! Deterministic synthetic scenes: bright square targets on a flat
//! background, plus multiplicative L-look speckle.
//!
//! Speckle follows the intensity-format model: i.i.d. Gamma(L, 1/L)
//! multipliers with unit mean and variance 1/L.

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::Scalar;
use crate::spectral::FeatureMap;

const PLACEMENT_ATTEMPTS: usize = 1000;

// rng sub-stream ids
const STREAM_PLACEMENT: u64 = 20;
const STREAM_JITTER: u64 = 21;
const STREAM_SPECKLE: u64 = 22;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub n_targets: usize,
    /// Square side length in pixels.
    pub target_size: usize,
    pub target_amplitude: f64,
    pub background_level: f64,
    /// Number of looks; higher means weaker speckle.
    pub looks: u32,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 || self.c == 0 {
            return Err(Error::InvalidArgument(format!(
                "scene dimensions must be positive, got C={} H={} W={}",
                self.c, self.h, self.w
            )));
        }
        if self.n_targets > 0 && (self.target_size == 0 || self.target_size > self.h.min(self.w)) {
            return Err(Error::InvalidArgument(format!(
                "target size {} does not fit a {}x{} map",
                self.target_size, self.h, self.w
            )));
        }
        if self.background_level < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "background level must be nonnegative, got {}",
                self.background_level
            )));
        }
        if self.looks == 0 {
            return Err(Error::InvalidArgument("looks must be at least 1".into()));
        }
        Ok(())
    }
}

/// Background level everywhere plus non-overlapping bright squares at
/// seeded positions, replicated across channels with a seeded per-channel
/// amplitude jitter of +-10%.
pub fn gen_clean<S: Scalar>(spec: &SceneSpec) -> Result<FeatureMap<S>> {
    spec.validate()?;
    let mut placement = CounterRng::derive(spec.seed, STREAM_PLACEMENT);
    let mut squares: Vec<(usize, usize)> = Vec::with_capacity(spec.n_targets);
    let size = spec.target_size;
    for _ in 0..spec.n_targets {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let top = placement.index(spec.h - size + 1);
            let left = placement.index(spec.w - size + 1);
            let overlaps = squares.iter().any(|&(t, l)| {
                top < t + size && t < top + size && left < l + size && l < left + size
            });
            if !overlaps {
                squares.push((top, left));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Placement {
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }

    let mut jitter = CounterRng::derive(spec.seed, STREAM_JITTER);
    let amplitudes: Vec<f64> = (0..spec.c)
        .map(|_| spec.target_amplitude * (1.0 + 0.1 * (2.0 * jitter.uniform() - 1.0)))
        .collect();

    let mut data = Array3::from_elem((spec.c, spec.h, spec.w), S::from_f64(spec.background_level));
    for &(top, left) in &squares {
        for (c, &amp) in amplitudes.iter().enumerate() {
            for y in top..top + size {
                for x in left..left + size {
                    data[(c, y, x)] = S::from_f64(spec.background_level + amp);
                }
            }
        }
    }
    FeatureMap::new(data)
}

/// Multiplies each entry by an i.i.d. Gamma(L, 1/L) draw (unit mean,
/// variance 1/L). The clean map must be entrywise nonnegative.
pub fn apply_speckle<S: Scalar>(clean: &FeatureMap<S>, looks: u32, seed: u64) -> Result<FeatureMap<S>> {
    if looks == 0 {
        return Err(Error::InvalidArgument("looks must be at least 1".into()));
    }
    if let Some((idx, &v)) = clean
        .data()
        .indexed_iter()
        .find(|(_, &v)| v < S::zero() || v.is_nan())
    {
        return Err(Error::InvalidArgument(format!(
            "speckle requires nonnegative input, got {v} at {idx:?}"
        )));
    }
    let mut rng = CounterRng::derive(seed, STREAM_SPECKLE);
    let shape = looks as f64;
    let scale = 1.0 / shape;
    let noisy = clean
        .data()
        .mapv(|v| v * S::from_f64(rng.gamma(shape, scale)));
    FeatureMap::new(noisy)
}
