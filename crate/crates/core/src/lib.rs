//! Transform-domain dynamic soft-threshold denoising of feature maps.
//!
//! The pipeline maps a `C×H×W` feature map into the 2D-DCT domain, derives a
//! per-frequency gate from a two-stage deformable grouped fully-connected
//! attention network, applies the equivalent dynamic soft threshold to the
//! coefficients, and transforms back. Supporting modules provide manual
//! reverse-mode gradients, a synthetic speckle benchmark, evaluation metrics,
//! and bit-exact tensor/checkpoint file formats.

pub mod autograd;
pub mod error;
pub mod groupfc;
pub mod io;
pub mod metrics;
#[cfg(any(test, feature = "testutil"))]
pub mod oracles;
pub mod rng;
pub mod scalar;
pub mod shrinkage;
pub mod specklesim;
pub mod spectral;
pub mod transdeno;

pub use error::{Error, Result};
pub use groupfc::{BilinearConvention, DeGroFcParams, GroupFcParams};
pub use scalar::Scalar;
pub use shrinkage::{GateMap, ThresholdMap};
pub use spectral::{FeatureMap, FlattenedSpectrum, SpectralMap};
pub use transdeno::{AttentionAxis, SpectrumDescriptor, TransDenoConfig, TransDenoParams};
