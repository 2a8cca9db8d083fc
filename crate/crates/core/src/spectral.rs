//! Per-channel orthonormal 2D DCT (type II forward, type III inverse) and the
//! spatial <-> spectral reshape operators.
//!
//! The transform is applied as two matrix products per channel against
//! precomputed per-axis basis matrices. With orthonormal scaling the basis is
//! an isometry, so the inverse is the transpose and Parseval holds exactly up
//! to rounding.

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense real feature map of shape `[C, H, W]`, spatial domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<S>(Array3<S>);

/// DCT coefficients of shape `[C, H, W]`; index `(i, j)` is (vertical,
/// horizontal) frequency with `(0, 0)` the DC term.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMap<S>(Array3<S>);

/// Row-major flattening of a [`SpectralMap`] to shape `[H*W, C]`:
/// entry `(p, c) = m[c, p / W, p % W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlattenedSpectrum<S>(Array2<S>);

fn check_dims(shape: (usize, usize, usize)) -> Result<()> {
    let (c, h, w) = shape;
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidArgument(format!(
            "tensor dimensions must be positive, got [{c}, {h}, {w}]"
        )));
    }
    Ok(())
}

macro_rules! map3_impl {
    ($name:ident) => {
        impl<S: Scalar> $name<S> {
            pub fn new(data: Array3<S>) -> Result<Self> {
                check_dims(data.dim())?;
                Ok(Self(data))
            }

            pub fn zeros(c: usize, h: usize, w: usize) -> Result<Self> {
                check_dims((c, h, w))?;
                Ok(Self(Array3::zeros((c, h, w))))
            }

            /// Builds from a function of the `(channel, row, column)` index.
            pub fn from_fn(
                c: usize,
                h: usize,
                w: usize,
                f: impl FnMut((usize, usize, usize)) -> S,
            ) -> Result<Self> {
                check_dims((c, h, w))?;
                Ok(Self(Array3::from_shape_fn((c, h, w), f)))
            }

            pub fn data(&self) -> &Array3<S> {
                &self.0
            }

            pub fn into_data(self) -> Array3<S> {
                self.0
            }

            pub fn channels(&self) -> usize {
                self.0.dim().0
            }

            pub fn height(&self) -> usize {
                self.0.dim().1
            }

            pub fn width(&self) -> usize {
                self.0.dim().2
            }

            /// Returns the first non-finite entry's index, if any.
            fn first_non_finite(&self) -> Option<(usize, usize, usize)> {
                self.0
                    .indexed_iter()
                    .find(|(_, v)| !v.is_finite())
                    .map(|(idx, _)| idx)
            }
        }
    };
}

map3_impl!(FeatureMap);
map3_impl!(SpectralMap);

impl<S: Scalar> FlattenedSpectrum<S> {
    pub fn new(data: Array2<S>) -> Result<Self> {
        let (rows, cols) = data.dim();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument(format!(
                "flattened spectrum dimensions must be positive, got [{rows}, {cols}]"
            )));
        }
        Ok(Self(data))
    }

    pub fn data(&self) -> &Array2<S> {
        &self.0
    }

    pub fn into_data(self) -> Array2<S> {
        self.0
    }

    /// Number of spatial-frequency positions (`H * W`).
    pub fn positions(&self) -> usize {
        self.0.dim().0
    }

    pub fn channels(&self) -> usize {
        self.0.dim().1
    }
}

/// Orthonormal DCT-II basis of size `n`: row `k` holds
/// `s_k * cos(pi * k * (x + 1/2) / n)` with `s_0 = sqrt(1/n)`,
/// `s_k = sqrt(2/n)` otherwise.
pub fn dct_basis<S: Scalar>(n: usize) -> Array2<S> {
    let mut basis = Array2::zeros((n, n));
    let nf = n as f64;
    for k in 0..n {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        for x in 0..n {
            let angle = std::f64::consts::PI * k as f64 * (x as f64 + 0.5) / nf;
            basis[(k, x)] = S::from_f64(scale * angle.cos());
        }
    }
    basis
}

/// Precomputed per-axis basis matrices for one `(H, W)` geometry.
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct DctPlan<S> {
    rows: Array2<S>,
    cols: Array2<S>,
}

impl<S: Scalar> DctPlan<S> {
    pub fn new(h: usize, w: usize) -> Self {
        DctPlan {
            rows: dct_basis(h),
            cols: dct_basis(w),
        }
    }

    pub fn forward(&self, x: &FeatureMap<S>) -> Result<SpectralMap<S>> {
        if let Some((c, h, w)) = x.first_non_finite() {
            return Err(Error::non_finite("dct2_forward input", format!("[{c}, {h}, {w}]")));
        }
        Ok(SpectralMap(self.apply(x.data(), false)))
    }

    pub fn inverse(&self, m: &SpectralMap<S>) -> Result<FeatureMap<S>> {
        if let Some((c, i, j)) = m.first_non_finite() {
            return Err(Error::non_finite("dct2_inverse input", format!("[{c}, {i}, {j}]")));
        }
        Ok(FeatureMap(self.apply(m.data(), true)))
    }

    /// Inverse without the finiteness gate; the training loop relies on
    /// non-finite values reaching the loss so divergence is reportable.
    pub(crate) fn inverse_unchecked(&self, data: &Array3<S>) -> Array3<S> {
        self.apply(data, true)
    }

    fn apply(&self, data: &Array3<S>, inverse: bool) -> Array3<S> {
        let (c_n, h, w) = data.dim();
        debug_assert_eq!((h, w), (self.rows.dim().0, self.cols.dim().0));
        let mut out = Array3::zeros((c_n, h, w));
        for c in 0..c_n {
            let plane = data.index_axis(Axis(0), c);
            let transformed = if inverse {
                // DCT-III: transpose of the forward isometry
                self.rows.t().dot(&plane).dot(&self.cols)
            } else {
                self.rows.dot(&plane).dot(&self.cols.t())
            };
            out.index_axis_mut(Axis(0), c).assign(&transformed);
        }
        out
    }
}

/// Per-channel orthonormal 2D DCT-II.
pub fn dct2_forward<S: Scalar>(x: &FeatureMap<S>) -> Result<SpectralMap<S>> {
    DctPlan::new(x.height(), x.width()).forward(x)
}

/// Per-channel orthonormal 2D DCT-III, the exact inverse of [`dct2_forward`].
pub fn dct2_inverse<S: Scalar>(m: &SpectralMap<S>) -> Result<FeatureMap<S>> {
    DctPlan::new(m.height(), m.width()).inverse(m)
}

/// Pure index permutation `[C, H, W] -> [H*W, C]`, row-major (`p = i*W + j`).
pub fn flatten<S: Scalar>(m: &SpectralMap<S>) -> FlattenedSpectrum<S> {
    let (c_n, h, w) = m.data().dim();
    let mut out = Array2::zeros((h * w, c_n));
    for ((c, i, j), &v) in m.data().indexed_iter() {
        out[(i * w + j, c)] = v;
    }
    FlattenedSpectrum(out)
}

/// Exact inverse permutation of [`flatten`].
pub fn unflatten<S: Scalar>(m: &FlattenedSpectrum<S>, h: usize, w: usize) -> Result<SpectralMap<S>> {
    let (rows, c_n) = m.data().dim();
    if rows != h * w {
        return Err(Error::shape(
            "unflatten",
            format!("{} rows (H*W = {h}*{w})", h * w),
            format!("{rows} rows"),
        ));
    }
    let mut out = Array3::zeros((c_n, h, w));
    for ((p, c), &v) in m.data().indexed_iter() {
        out[(c, p / w, p % w)] = v;
    }
    Ok(SpectralMap(out))
}

/// Sum of squared entries; used by the Parseval checks and metrics.
pub fn squared_norm<S: Scalar>(data: &Array3<S>) -> S {
    data.iter().fold(S::zero(), |acc, &v| acc + v * v)
}
