//! Soft thresholding and its equivalence with multiplicative gating.
//!
//! A gate `g` in [0, 1] applied as `g * x` is the same shrinkage as soft
//! thresholding with the dynamic threshold `theta = (1 - g) * |x|`. The
//! production pipeline multiplies the gate directly; the threshold path is
//! public so the equivalence stays an executable test.

use ndarray::{Array, Dimension, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-element attention weights, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMap<S, D: Dimension>(Array<S, D>);

/// Per-element nonnegative shrinkage thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMap<S, D: Dimension>(Array<S, D>);

impl<S: Scalar, D: Dimension> GateMap<S, D> {
    pub fn new(values: Array<S, D>) -> Result<Self> {
        for &g in values.iter() {
            if !(g >= S::zero() && g <= S::one()) {
                return Err(Error::InvalidArgument(format!(
                    "gate value {g} outside [0, 1]"
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn data(&self) -> &Array<S, D> {
        &self.0
    }

    pub fn into_data(self) -> Array<S, D> {
        self.0
    }
}

impl<S: Scalar, D: Dimension> ThresholdMap<S, D> {
    pub fn new(values: Array<S, D>) -> Result<Self> {
        for &t in values.iter() {
            if t < S::zero() || t.is_nan() {
                return Err(Error::InvalidArgument(format!(
                    "threshold value {t} is negative"
                )));
            }
        }
        Ok(Self(values))
    }

    pub fn data(&self) -> &Array<S, D> {
        &self.0
    }
}

/// `sign(x) * max(0, |x| - theta)`, with `sign(0) = 0`.
pub fn soft<S: Scalar>(x: S, theta: S) -> Result<S> {
    if theta < S::zero() || theta.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "soft threshold must be nonnegative, got {theta}"
        )));
    }
    Ok(soft_unchecked(x, theta))
}

#[inline]
pub(crate) fn soft_unchecked<S: Scalar>(x: S, theta: S) -> S {
    let shrunk = x.abs() - theta;
    if shrunk <= S::zero() {
        S::zero()
    } else if x > S::zero() {
        shrunk
    } else {
        -shrunk
    }
}

/// Element-wise lift of [`soft`]; shapes must match.
pub fn soft_map<S: Scalar, D: Dimension>(
    x: &Array<S, D>,
    theta: &ThresholdMap<S, D>,
) -> Result<Array<S, D>> {
    if x.raw_dim() != theta.0.raw_dim() {
        return Err(Error::shape(
            "soft_map",
            format!("{:?}", x.shape()),
            format!("{:?}", theta.0.shape()),
        ));
    }
    Ok(Zip::from(x)
        .and(&theta.0)
        .map_collect(|&v, &t| soft_unchecked(v, t)))
}

/// `theta = (1 - g) * |x|`, entrywise.
pub fn gate_to_threshold<S: Scalar, D: Dimension>(
    gate: &GateMap<S, D>,
    x: &Array<S, D>,
) -> Result<ThresholdMap<S, D>> {
    if x.raw_dim() != gate.0.raw_dim() {
        return Err(Error::shape(
            "gate_to_threshold",
            format!("{:?}", x.shape()),
            format!("{:?}", gate.0.shape()),
        ));
    }
    Ok(ThresholdMap(
        Zip::from(x)
            .and(&gate.0)
            .map_collect(|&v, &g| (S::one() - g) * v.abs()),
    ))
}
