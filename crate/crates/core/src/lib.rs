//! Rank-1 matrix denoising under doubly heteroscedastic Gaussian noise.
//!
//! The observation model is
//!
//! ```text
//! A = (λ/n) u* v*ᵀ + Ξ^{1/2} W Σ^{1/2},    W_ij iid N(0, 1/n),
//! ```
//!
//! with `u* ∈ Rⁿ`, `v* ∈ Rᵈ` Gaussian signals, aspect ratio `δ = n/d`, and
//! trace-normalized covariances `Ξ` (n×n) and `Σ` (d×d).
//!
//! Modules, bottom to top:
//!
//! * [`spectra`]: covariance families and their spectral measures.
//! * [`theory`]: deterministic limits (threshold, fixed point, overlaps,
//!   MMSE, free energy, bulk edge).
//! * [`model`]: instance sampling and the binary dump format.
//! * [`estimators`]: the optimal spectral estimator and its baselines.
//! * [`amp`]: Bayes-AMP with state evolution and spectral initialization.
//! * [`harness`]: lambda sweeps, CSV output, and config parsing.

pub mod amp;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod spectra;
pub mod theory;

pub use error::{Error, Result};
pub use spectra::{measure_of, CovarianceKind, CovarianceModel, SpectralMeasure};
