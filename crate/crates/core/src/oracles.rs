//! Reference implementations used only by test suites.
//!
//! These deliberately evaluate the transform definitions by direct summation,
//! independent of the matrix-based production path, so agreement between the
//! two is meaningful evidence.

use ndarray::Array3;

use crate::scalar::Scalar;
use crate::spectral::{FeatureMap, SpectralMap};

fn ortho_scale(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// O(H²W²) per channel forward DCT by direct four-nested-loop summation with
/// orthonormal factors applied.
pub fn oracle_dct2_forward<S: Scalar>(x: &FeatureMap<S>) -> SpectralMap<S> {
    let (c_n, h, w) = x.data().dim();
    let mut out = Array3::zeros((c_n, h, w));
    for c in 0..c_n {
        for i in 0..h {
            for j in 0..w {
                let mut sum = 0.0f64;
                for hh in 0..h {
                    for ww in 0..w {
                        let cos_i =
                            (std::f64::consts::PI * i as f64 / h as f64 * (hh as f64 + 0.5)).cos();
                        let cos_j =
                            (std::f64::consts::PI * j as f64 / w as f64 * (ww as f64 + 0.5)).cos();
                        sum += x.data()[(c, hh, ww)].as_f64() * cos_i * cos_j;
                    }
                }
                out[(c, i, j)] = S::from_f64(ortho_scale(i, h) * ortho_scale(j, w) * sum);
            }
        }
    }
    SpectralMap::new(out).expect("oracle output shape matches input")
}

/// O(H²W²) per channel inverse DCT by direct summation, transposed pairing of
/// the forward oracle.
pub fn oracle_dct2_inverse<S: Scalar>(m: &SpectralMap<S>) -> FeatureMap<S> {
    let (c_n, h, w) = m.data().dim();
    let mut out = Array3::zeros((c_n, h, w));
    for c in 0..c_n {
        for hh in 0..h {
            for ww in 0..w {
                let mut sum = 0.0f64;
                for i in 0..h {
                    for j in 0..w {
                        let cos_i =
                            (std::f64::consts::PI * i as f64 / h as f64 * (hh as f64 + 0.5)).cos();
                        let cos_j =
                            (std::f64::consts::PI * j as f64 / w as f64 * (ww as f64 + 0.5)).cos();
                        sum += ortho_scale(i, h)
                            * ortho_scale(j, w)
                            * m.data()[(c, i, j)].as_f64()
                            * cos_i
                            * cos_j;
                    }
                }
                out[(c, hh, ww)] = S::from_f64(sum);
            }
        }
    }
    FeatureMap::new(out).expect("oracle output shape matches input")
}
