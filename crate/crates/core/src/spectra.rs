//! Noise covariances and their limiting spectral measures.
//!
//! A [`CovarianceModel`] is a trace-normalized symmetric positive-definite
//! matrix together with its eigendecomposition. Every spectral function of the
//! covariance (powers, resolvents, the pre-processing maps) is applied through
//! that cached decomposition.
//!
//! A [`SpectralMeasure`] is a discrete probability measure on `(0, ∞)`. All
//! deterministic limits in [`crate::theory`] are expectations against one.
//!
//! The support condition that excludes spectral outliers of the finite-size
//! covariances is assumed, not checked: the Toeplitz and circulant families
//! built here satisfy it by construction.

use std::f64::consts::PI;
use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;

/// Default number of atoms used to approximate a limiting spectral law.
pub const DEFAULT_RESOLUTION: usize = 4000;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Discrete probability measure with strictly positive, ascending atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    atoms: Vec<(f64, f64)>,
    label: String,
}

impl SpectralMeasure {
    /// Builds a measure from `(value, weight)` pairs. Atoms are sorted and
    /// exactly repeated values merged.
    pub fn new(mut atoms: Vec<(f64, f64)>, label: impl Into<String>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        for &(value, weight) in &atoms {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidMeasure(format!("atom value {value} is not in (0, inf)")));
            }
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::InvalidMeasure(format!("atom weight {weight} is not positive")));
            }
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (value, weight) in atoms {
            match merged.last_mut() {
                Some(last) if last.0 == value => last.1 += weight,
                _ => merged.push((value, weight)),
            }
        }
        let total = compensated_sum(merged.iter().map(|a| a.1));
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms: merged, label: label.into() })
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        Self::new(vec![(value, 1.0)], format!("delta({value})"))
    }

    /// Empirical measure of `values`, each with weight `1/len`.
    pub fn empirical(values: &[f64], label: impl Into<String>) -> Result<Self> {
        let weight = 1.0 / values.len() as f64;
        let atoms: Vec<_> = values.iter().map(|&v| (v, weight)).collect();
        // Merging can accumulate rounding in the weight sum; renormalize exactly.
        let mut measure = Self::new(atoms, label)?;
        let total = compensated_sum(measure.atoms.iter().map(|a| a.1));
        for atom in &mut measure.atoms {
            atom.1 /= total;
        }
        Ok(measure)
    }

    /// Full empirical spectral distribution of a covariance.
    pub fn from_covariance(cov: &CovarianceModel) -> Result<Self> {
        Self::empirical(cov.eigenvalues().as_slice().expect("contiguous"), format!("ESD({})", cov.kind()))
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Smallest atom, `inf supp`.
    pub fn min_value(&self) -> f64 {
        self.atoms[0].0
    }

    /// Largest atom, `sup supp`.
    pub fn max_value(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].0
    }

    /// `Σ_k w_k f(x_k)`. Fails with [`Error::DomainError`] if the sum is not finite.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        let value = self.expect_unchecked(f);
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::DomainError(format!("expectation over {} is {value}", self.label)))
        }
    }

    pub(crate) fn expect_unchecked(&self, f: impl Fn(f64) -> f64) -> f64 {
        compensated_sum(self.atoms.iter().map(|&(x, w)| w * f(x)))
    }

    /// `E[X^p]`; finite for every integer `p` since atoms lie in `(0, ∞)`.
    pub fn moment(&self, p: i32) -> f64 {
        self.expect_unchecked(|x| x.powi(p))
    }

    /// Pushforward of the measure under a map with positive finite values.
    pub fn map(&self, f: impl Fn(f64) -> f64, label: impl Into<String>) -> Result<Self> {
        let atoms = self.atoms.iter().map(|&(x, w)| (f(x), w)).collect();
        Self::new(atoms, label)
    }
}

/// Neumaier-compensated summation.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Free-function form of [`SpectralMeasure::expect`].
pub fn expect(measure: &SpectralMeasure, f: impl Fn(f64) -> f64) -> Result<f64> {
    measure.expect(f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceKind {
    Identity,
    /// Entries `rho^|i-j|`.
    Toeplitz {
        rho: f64,
    },
    /// Symmetric banded circulant: unit diagonal and `c` on the `ell` nearest
    /// cyclic neighbours on either side.
    Circulant {
        c: f64,
        ell: usize,
    },
    Custom,
}

impl fmt::Display for CovarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceKind::Identity => write!(f, "identity"),
            CovarianceKind::Toeplitz { rho } => write!(f, "toeplitz:{rho}"),
            CovarianceKind::Circulant { c, ell } => write!(f, "circulant:{c}:{ell}"),
            CovarianceKind::Custom => write!(f, "custom"),
        }
    }
}

/// Trace-normalized SPD covariance with a cached eigendecomposition.
///
/// Eigenvalues are ascending. For the identity the eigenvector matrix is not
/// materialized and all basis changes are no-ops.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    dim: usize,
    kind: CovarianceKind,
    eigvals: Array1<f64>,
    eigvecs: Option<Array2<f64>>,
    /// Normalized dense matrix, kept only for `Custom`.
    dense: Option<Array2<f64>>,
    /// Trace/dim of the un-normalized construction.
    scale: f64,
}

impl CovarianceModel {
    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        Ok(Self {
            dim,
            kind: CovarianceKind::Identity,
            eigvals: Array1::ones(dim),
            eigvecs: None,
            dense: None,
            scale: 1.0,
        })
    }

    /// Kac-Murdock-Szegő Toeplitz matrix `rho^|i-j|`.
    ///
    /// Its inverse is tridiagonal, so the decomposition is taken from that
    /// tridiagonal matrix rather than the dense Toeplitz one.
    pub fn toeplitz(dim: usize, rho: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("toeplitz dimension must be >= 2, got {dim}")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("toeplitz rho must lie in [0, 1), got {rho}")));
        }
        if rho == 0.0 {
            let mut cov = Self::identity(dim)?;
            cov.kind = CovarianceKind::Toeplitz { rho };
            return Ok(cov);
        }
        let (diag, off) = kms_inverse_tridiagonal(dim, rho);
        let (inv_vals, inv_vecs) = linalg::tridiagonal_eigen(&diag, &off)?;
        // Ascending eigenvalues of the inverse are descending eigenvalues of
        // the matrix itself: reverse both.
        let eigvals: Array1<f64> = inv_vals.iter().rev().map(|&m| 1.0 / m).collect();
        let mut eigvecs = inv_vecs;
        eigvecs.invert_axis(ndarray::Axis(1));
        let eigvecs = eigvecs.as_standard_layout().into_owned();
        Self::from_parts(dim, CovarianceKind::Toeplitz { rho }, eigvals, Some(eigvecs), None)
    }

    /// Symmetric circulant with first row `(1, c, …, c, 0, …, 0, c, …, c)`
    /// carrying `ell` copies of `c` on each side. Eigenpairs come in closed
    /// form from the real discrete Fourier basis.
    pub fn circulant(dim: usize, c: f64, ell: usize) -> Result<Self> {
        if ell == 0 || 2 * ell + 1 > dim {
            return Err(Error::InvalidArgument(format!(
                "circulant needs 1 <= ell and 2*ell+1 <= dim, got ell={ell}, dim={dim}"
            )));
        }
        if !c.is_finite() {
            return Err(Error::InvalidArgument(format!("circulant coefficient {c} is not finite")));
        }
        let raw = circulant_symbol(dim, c, ell);
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        let basis = real_fourier_basis(dim);
        // Columns of `basis` are indexed by frequency slot; pair each with its
        // eigenvalue and sort ascending.
        let mut order: Vec<(f64, usize)> =
            basis.slots.iter().enumerate().map(|(col, &freq)| (raw[freq], col)).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let eigvals: Array1<f64> = order.iter().map(|o| o.0).collect();
        let mut eigvecs = Array2::zeros((dim, dim));
        for (dst, &(_, src)) in order.iter().enumerate() {
            eigvecs.column_mut(dst).assign(&basis.vectors.column(src));
        }
        Self::from_parts(dim, CovarianceKind::Circulant { c, ell }, eigvals, Some(eigvecs), None)
    }

    /// Arbitrary symmetric positive-definite matrix, trace-normalized.
    pub fn custom(matrix: ArrayView2<f64>) -> Result<Self> {
        let (rows, cols) = matrix.dim();
        if rows != cols || rows == 0 {
            return Err(Error::DimensionMismatch { expected: rows, got: cols });
        }
        let asym = (&matrix - &matrix.t()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let magnitude = matrix.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if asym > 1e-10 * magnitude.max(1.0) {
            return Err(Error::InvalidArgument(format!("matrix is not symmetric (max asymmetry {asym:e})")));
        }
        let sym = (&matrix + &matrix.t()) * 0.5;
        let (eigvals, eigvecs) = linalg::symmetric_eigen(sym.view())?;
        let mut cov = Self::from_parts(rows, CovarianceKind::Custom, eigvals, Some(eigvecs), None)?;
        cov.dense = Some(sym / cov.scale);
        Ok(cov)
    }

    fn from_parts(
        dim: usize,
        kind: CovarianceKind,
        eigvals: Array1<f64>,
        eigvecs: Option<Array2<f64>>,
        dense: Option<Array2<f64>>,
    ) -> Result<Self> {
        let min = eigvals.iter().copied().fold(f64::INFINITY, f64::min);
        if min.is_nan() || min <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        // Toeplitz and circulant matrices have unit diagonal, so only custom
        // input needs rescaling.
        let scale = match kind {
            CovarianceKind::Custom => eigvals.sum() / dim as f64,
            _ => 1.0,
        };
        Ok(Self { dim, kind, eigvals: eigvals / scale, eigvecs, dense, scale })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> CovarianceKind {
        self.kind
    }

    pub fn is_identity(&self) -> bool {
        self.eigvecs.is_none()
    }

    /// Ascending eigenvalues (mean 1 up to rounding).
    pub fn eigenvalues(&self) -> ArrayView1<'_, f64> {
        self.eigvals.view()
    }

    /// Orthonormal eigenvectors as columns; `None` for the identity.
    pub fn eigenvectors(&self) -> Option<ArrayView2<'_, f64>> {
        self.eigvecs.as_ref().map(|v| v.view())
    }

    /// Dense normalized matrix.
    pub fn matrix(&self) -> Array2<f64> {
        match (&self.kind, &self.dense) {
            (_, Some(dense)) => dense.clone(),
            (CovarianceKind::Identity, _) => Array2::eye(self.dim),
            (CovarianceKind::Toeplitz { rho }, _) => {
                Array2::from_shape_fn((self.dim, self.dim), |(i, j)| rho.powi(i.abs_diff(j) as i32) / self.scale)
            }
            (CovarianceKind::Circulant { c, ell }, _) => Array2::from_shape_fn((self.dim, self.dim), |(i, j)| {
                let k = (j + self.dim - i) % self.dim;
                let entry = if k == 0 {
                    1.0
                } else if k <= *ell || k >= self.dim - ell {
                    *c
                } else {
                    0.0
                };
                entry / self.scale
            }),
            (CovarianceKind::Custom, None) => unreachable!("custom covariances keep their matrix"),
        }
    }

    /// Dense `f(M)` for a scalar function applied to the spectrum.
    pub fn spectral_function(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let weights = self.eigvals.mapv(f);
        match &self.eigvecs {
            None => Array2::from_diag(&weights),
            Some(v) => linalg::reconstruct(v.view(), weights.view()),
        }
    }

    /// Dense `M^p`.
    pub fn power(&self, p: f64) -> Array2<f64> {
        self.spectral_function(|x| x.powf(p))
    }

    /// Coordinates of `x` in the eigenbasis, `Vᵀ x`.
    pub fn to_eigenbasis(&self, x: ArrayView1<f64>) -> Array1<f64> {
        match &self.eigvecs {
            None => x.to_owned(),
            Some(v) => v.t().dot(&x),
        }
    }

    /// Inverse of [`Self::to_eigenbasis`], `V y`.
    pub fn from_eigenbasis(&self, y: ArrayView1<f64>) -> Array1<f64> {
        match &self.eigvecs {
            None => y.to_owned(),
            Some(v) => v.dot(&y),
        }
    }

    /// `f(M) x` computed through the eigendecomposition.
    pub fn apply(&self, f: impl Fn(f64) -> f64, x: ArrayView1<f64>) -> Array1<f64> {
        let mut y = self.to_eigenbasis(x);
        y.zip_mut_with(&self.eigvals, |yi, &l| *yi *= f(l));
        self.from_eigenbasis(y.view())
    }

    /// `Vᵀ X` for a matrix with `dim` rows.
    pub(crate) fn rows_to_eigenbasis(&self, x: ArrayView2<f64>) -> Array2<f64> {
        match &self.eigvecs {
            None => x.to_owned(),
            Some(v) => v.t().dot(&x),
        }
    }

    /// `V Y` for a matrix with `dim` rows.
    pub(crate) fn rows_from_eigenbasis(&self, y: ArrayView2<f64>) -> Array2<f64> {
        match &self.eigvecs {
            None => y.to_owned(),
            Some(v) => v.dot(&y),
        }
    }
}

/// Tridiagonal inverse of the KMS matrix `rho^|i-j|`.
fn kms_inverse_tridiagonal(dim: usize, rho: f64) -> (Vec<f64>, Vec<f64>) {
    let s = 1.0 / (1.0 - rho * rho);
    let mut diag = vec![(1.0 + rho * rho) * s; dim];
    diag[0] = s;
    diag[dim - 1] = s;
    let off = vec![-rho * s; dim - 1];
    (diag, off)
}

/// DFT of the circulant's first row, indexed by frequency `0..dim`.
fn circulant_symbol(dim: usize, c: f64, ell: usize) -> Vec<f64> {
    let cos_table: Vec<f64> = (0..dim).map(|m| (2.0 * PI * m as f64 / dim as f64).cos()).collect();
    (0..dim)
        .map(|j| {
            let band: f64 = (1..=ell).map(|k| cos_table[(j * k) % dim]).sum();
            1.0 + 2.0 * c * band
        })
        .collect()
}

struct FourierBasis {
    vectors: Array2<f64>,
    /// Frequency whose eigenvalue belongs to each column.
    slots: Vec<usize>,
}

/// Orthonormal real Fourier basis: constant, cosine/sine pairs, and the
/// alternating vector when `dim` is even.
fn real_fourier_basis(dim: usize) -> FourierBasis {
    let n = dim as f64;
    let mut vectors = Array2::zeros((dim, dim));
    let mut slots = Vec::with_capacity(dim);
    let cos_table: Vec<f64> = (0..dim).map(|m| (2.0 * PI * m as f64 / n).cos()).collect();
    let sin_table: Vec<f64> = (0..dim).map(|m| (2.0 * PI * m as f64 / n).sin()).collect();

    vectors.column_mut(0).fill(1.0 / n.sqrt());
    slots.push(0);
    let amp = (2.0 / n).sqrt();
    let mut col = 1;
    for j in 1..dim.div_ceil(2) {
        for k in 0..dim {
            vectors[(k, col)] = amp * cos_table[(j * k) % dim];
            vectors[(k, col + 1)] = amp * sin_table[(j * k) % dim];
        }
        slots.push(j);
        slots.push(j);
        col += 2;
    }
    if dim.is_multiple_of(2) {
        for k in 0..dim {
            vectors[(k, col)] = (if k % 2 == 0 { 1.0 } else { -1.0 }) / n.sqrt();
        }
        slots.push(dim / 2);
    }
    FourierBasis { vectors, slots }
}

/// Approximate limiting spectral law of `cov` with at most `resolution` atoms.
///
/// Identity gives a single unit atom. Toeplitz uses the spectrum of the
/// `resolution`-sized matrix of the same `rho`. Circulant and custom
/// covariances use their own spectrum, thinned to `resolution` evenly spaced
/// order statistics when `resolution < dim`. The result has mean 1.
pub fn measure_of(cov: &CovarianceModel, resolution: usize) -> Result<SpectralMeasure> {
    if resolution == 0 || resolution > cov.dim() {
        return Err(Error::InvalidArgument(format!("resolution must lie in 1..={}, got {resolution}", cov.dim())));
    }
    let label = format!("{}@{resolution}", cov.kind());
    let values: Vec<f64> = match cov.kind() {
        CovarianceKind::Identity | CovarianceKind::Toeplitz { rho: 0.0 } => {
            return SpectralMeasure::new(vec![(1.0, 1.0)], label);
        }
        CovarianceKind::Toeplitz { rho } => {
            if resolution < 2 {
                return Err(Error::InvalidArgument("toeplitz resolution must be >= 2".into()));
            }
            let (diag, off) = kms_inverse_tridiagonal(resolution, rho);
            let inv = linalg::tridiagonal_eigenvalues(&diag, &off)?;
            inv.iter().map(|&m| 1.0 / m).collect()
        }
        CovarianceKind::Circulant { .. } | CovarianceKind::Custom => {
            let sorted = cov.eigenvalues();
            if resolution == cov.dim() {
                sorted.to_vec()
            } else {
                let dim = cov.dim() as f64;
                (0..resolution)
                    .map(|k| sorted[(((k as f64 + 0.5) * dim / resolution as f64) as usize).min(cov.dim() - 1)])
                    .collect()
            }
        }
    };
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let normalized: Vec<f64> = values.iter().map(|v| v / mean).collect();
    SpectralMeasure::empirical(&normalized, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn frobenius(a: &Array2<f64>) -> f64 {
        a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn toeplitz_rho_zero_is_identity() {
        let cov = CovarianceModel::toeplitz(3, 0.0).unwrap();
        assert_eq!(cov.matrix(), Array2::<f64>::eye(3));
        assert!(cov.eigenvalues().iter().all(|&l| l == 1.0));
    }

    #[test]
    fn toeplitz_two_by_two_eigenvalues() {
        let cov = CovarianceModel::toeplitz(2, 0.5).unwrap();
        let vals = cov.eigenvalues();
        assert_abs_diff_eq!(vals[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], 1.5, epsilon = 1e-14);
    }

    #[test]
    fn toeplitz_entries_and_reconstruction() {
        let cov = CovarianceModel::toeplitz(40, 0.9).unwrap();
        let m = cov.matrix();
        assert_abs_diff_eq!(m[(3, 7)], 0.9f64.powi(4), epsilon = 1e-14);
        let rebuilt = cov.spectral_function(|x| x);
        assert!(frobenius(&(&m - &rebuilt)) < 1e-8 * 40.0);
        assert_abs_diff_eq!(cov.eigenvalues().sum() / 40.0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn toeplitz_matches_dense_eigensolver() {
        let cov = CovarianceModel::toeplitz(30, 0.7).unwrap();
        let (dense_vals, _) = linalg::symmetric_eigen(cov.matrix().view()).unwrap();
        for (a, b) in cov.eigenvalues().iter().zip(dense_vals.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn circulant_c_zero_is_identity() {
        let cov = CovarianceModel::circulant(8, 0.0, 1).unwrap();
        assert_eq!(cov.matrix(), Array2::<f64>::eye(8));
        assert!(cov.eigenvalues().iter().all(|&l| (l - 1.0).abs() < 1e-15));
    }

    #[test]
    fn circulant_hand_dft() {
        // DFT of (1, 0.1, 0, 0.1) is (1.2, 1.0, 0.8, 1.0).
        let cov = CovarianceModel::circulant(4, 0.1, 1).unwrap();
        let vals = cov.eigenvalues().to_vec();
        let expected = [0.8, 1.0, 1.0, 1.2];
        for (a, b) in vals.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        let m = cov.matrix();
        assert_eq!(m[(0, 1)], 0.1);
        assert_eq!(m[(0, 3)], 0.1);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(1, 0)], 0.1);
    }

    #[test]
    fn circulant_matches_dense_eigensolver() {
        for &(dim, c, ell) in &[(7usize, 0.2, 2usize), (16, 0.05, 3), (64, 0.01, 20), (33, -0.1, 4)] {
            let cov = CovarianceModel::circulant(dim, c, ell).unwrap();
            let (dense_vals, _) = linalg::symmetric_eigen(cov.matrix().view()).unwrap();
            for (a, b) in cov.eigenvalues().iter().zip(dense_vals.iter()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-8);
            }
            let rebuilt = cov.spectral_function(|x| x);
            assert!(frobenius(&(&cov.matrix() - &rebuilt)) < 1e-8 * dim as f64);
        }
    }

    #[test]
    fn circulant_rejects_indefinite() {
        let err = CovarianceModel::circulant(8, -0.6, 1).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        assert!(CovarianceModel::circulant(8, 0.1, 4).is_err());
    }

    #[test]
    fn custom_is_trace_normalized() {
        let m = ndarray::arr2(&[[2.0, 0.5], [0.5, 4.0]]);
        let cov = CovarianceModel::custom(m.view()).unwrap();
        let normalized = cov.matrix();
        assert_abs_diff_eq!(normalized[(0, 0)] + normalized[(1, 1)], 2.0, epsilon = 1e-12);
        assert!(CovarianceModel::custom(ndarray::arr2(&[[1.0, 2.0], [2.0, 1.0]]).view()).is_err());
    }

    #[test]
    fn square_roots_compose() {
        for cov in [CovarianceModel::toeplitz(25, 0.6).unwrap(), CovarianceModel::circulant(25, 0.1, 3).unwrap()] {
            let half = cov.power(0.5);
            let neg_half = cov.power(-0.5);
            let dim = cov.dim() as f64;
            assert!(frobenius(&(half.dot(&half) - cov.matrix())) < 1e-8 * dim);
            assert!(frobenius(&(neg_half.dot(&half) - Array2::<f64>::eye(cov.dim()))) < 1e-8 * dim);
        }
    }

    #[test]
    fn measure_of_identity_is_single_atom() {
        let cov = CovarianceModel::identity(50).unwrap();
        for res in [1, 7, 50] {
            let m = measure_of(&cov, res).unwrap();
            assert_eq!(m.atoms(), &[(1.0, 1.0)]);
        }
    }

    #[test]
    fn measure_of_circulant_matches_dft() {
        let cov = CovarianceModel::circulant(4, 0.1, 1).unwrap();
        let m = measure_of(&cov, 4).unwrap();
        let values: Vec<f64> = m.atoms().iter().map(|a| a.0).collect();
        assert_eq!(values.len(), 3);
        assert_abs_diff_eq!(values[0], 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(values[2], 1.2, epsilon = 1e-14);
        assert_abs_diff_eq!(m.atoms()[1].1, 0.5, epsilon = 1e-14);
        assert!(measure_of(&cov, 5).is_err());
    }

    #[test]
    fn measure_of_toeplitz_has_resolution_atoms() {
        let cov = CovarianceModel::toeplitz(400, 0.9).unwrap();
        let m = measure_of(&cov, 400).unwrap();
        assert_eq!(m.len(), 400);
        assert!(m.atoms().iter().all(|a| (a.1 - 1.0 / 400.0).abs() < 1e-15));
        // Same matrix, so the atoms equal the cached spectrum.
        for (atom, l) in m.atoms().iter().zip(cov.eigenvalues()) {
            assert_abs_diff_eq!(atom.0, *l, epsilon = 1e-10);
        }
    }

    #[test]
    fn expect_matches_hand_arithmetic() {
        let m = SpectralMeasure::point_mass(1.0).unwrap();
        assert_eq!(m.expect(|x| 1.0 / x).unwrap(), 1.0);
        let m = SpectralMeasure::new(vec![(0.5, 0.5), (1.5, 0.5)], "two").unwrap();
        assert_abs_diff_eq!(m.expect(|x| 1.0 / x).unwrap(), 4.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn expect_flags_nan() {
        let m = SpectralMeasure::point_mass(1.0).unwrap();
        assert!(matches!(m.expect(|_| f64::NAN), Err(Error::DomainError(_))));
    }

    #[test]
    fn toeplitz_inverse_square_moment_matches_direct_sum() {
        let cov = CovarianceModel::toeplitz(300, 0.9).unwrap();
        let m = measure_of(&cov, 300).unwrap();
        let (dense_vals, _) = linalg::symmetric_eigen(cov.matrix().view()).unwrap();
        let direct = dense_vals.iter().map(|l| l.powi(-2)).sum::<f64>() / 300.0;
        assert_abs_diff_eq!(m.expect(|x| x.powi(-2)).unwrap(), direct, epsilon = 1e-8 * direct);
    }

    #[test]
    fn measure_validation() {
        assert!(SpectralMeasure::new(vec![(0.0, 1.0)], "").is_err());
        assert!(SpectralMeasure::new(vec![(1.0, 0.5)], "").is_err());
        assert!(SpectralMeasure::new(vec![(1.0, -1.0), (2.0, 2.0)], "").is_err());
        let m = SpectralMeasure::new(vec![(2.0, 0.25), (1.0, 0.75)], "").unwrap();
        assert_eq!(m.min_value(), 1.0);
        assert_eq!(m.max_value(), 2.0);
    }
}
