//! Spectral estimators of the signal pair and their evaluation metrics.
//!
//! * [`optimal_spectral`]: top singular pair of the pre-processed matrix
//!   `A*`, mapped back and rescaled.
//! * [`vanilla_svd`]: top singular pair of `A` itself.
//! * [`whiten_svd`]: top singular pair of `Ξ^{-1/2} A Σ^{-1/2}`, recoloured.
//!
//! All three run on the eigenframe representation of the instance (see
//! [`crate::model`]); estimates are returned in the standard basis.

pub mod power;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::model::ProblemInstance;
use crate::spectra::CovarianceModel;
use crate::theory::TheoryParams;

pub use power::{top_singular_pair, LinearOperator, ScaledOperator, SingularPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    OptimalSpectral,
    Vanilla,
    Whiten,
    BayesAmp,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] =
        [EstimatorKind::OptimalSpectral, EstimatorKind::Vanilla, EstimatorKind::Whiten, EstimatorKind::BayesAmp];

    /// Name used in configs and CSV output.
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::OptimalSpectral => "optimal",
            EstimatorKind::Vanilla => "vanilla",
            EstimatorKind::Whiten => "whiten",
            EstimatorKind::BayesAmp => "amp",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "optimal" | "optimal_spectral" | "optimalspectral" => Ok(EstimatorKind::OptimalSpectral),
            "vanilla" => Ok(EstimatorKind::Vanilla),
            "whiten" => Ok(EstimatorKind::Whiten),
            "amp" | "bayes_amp" | "bayesamp" => Ok(EstimatorKind::BayesAmp),
            other => Err(Error::Config(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Power-iteration settings shared by the spectral estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { tol: power::DEFAULT_TOL, max_iter: power::DEFAULT_MAX_ITER }
    }
}

/// Overlaps and squared errors of an estimate against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub overlap_u: f64,
    pub overlap_v: f64,
    /// `‖u*u*ᵀ − ûûᵀ‖²_F / n²`.
    pub mse_uu: f64,
    /// `‖v*v*ᵀ − v̂v̂ᵀ‖²_F / d²`.
    pub mse_vv: f64,
    /// `‖u*v*ᵀ − ûv̂ᵀ‖²_F / (nd)`.
    pub mse_uv: f64,
}

fn overlap(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let denom = norm(x) * norm(y);
    if denom == 0.0 {
        0.0
    } else {
        x.dot(&y).abs() / denom
    }
}

/// Computes [`Metrics`] from inner products, without forming any outer product.
pub fn evaluate(
    u_hat: ArrayView1<f64>,
    v_hat: ArrayView1<f64>,
    u_star: ArrayView1<f64>,
    v_star: ArrayView1<f64>,
) -> Metrics {
    let n = u_star.len() as f64;
    let d = v_star.len() as f64;
    let (uu, vv) = (u_star.dot(&u_star), v_star.dot(&v_star));
    let (hu, hv) = (u_hat.dot(&u_hat), v_hat.dot(&v_hat));
    let (cu, cv) = (u_hat.dot(&u_star), v_hat.dot(&v_star));
    Metrics {
        overlap_u: overlap(u_hat, u_star),
        overlap_v: overlap(v_hat, v_star),
        mse_uu: ((uu * uu + hu * hu - 2.0 * cu * cu) / (n * n)).max(0.0),
        mse_vv: ((vv * vv + hv * hv - 2.0 * cv * cv) / (d * d)).max(0.0),
        mse_uv: ((uu * vv + hu * hv - 2.0 * cu * cv) / (n * d)).max(0.0),
    }
}

/// Estimates and metrics for one estimator on one instance.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub overlap_u: f64,
    pub overlap_v: f64,
    pub mse_uu: f64,
    pub mse_vv: f64,
    pub mse_uv: f64,
    /// `σ₁(A*)`, reported by the optimal estimator only.
    pub sigma1_astar: Option<f64>,
    /// `σ₂(A*)`, reported by the optimal estimator only.
    pub sigma2_astar: Option<f64>,
    pub iterations_used: usize,
    pub u_hat: Array1<f64>,
    pub v_hat: Array1<f64>,
}

impl EstimateReport {
    /// Builds a report for estimates already in the standard basis. The pair
    /// is flipped jointly so that `⟨û, u*⟩ ≥ 0`; no metric depends on it.
    pub(crate) fn new(
        estimator: EstimatorKind,
        inst: &ProblemInstance,
        mut u_hat: Array1<f64>,
        mut v_hat: Array1<f64>,
        sigmas: Option<(f64, f64)>,
        iterations_used: usize,
    ) -> Self {
        if u_hat.dot(&inst.u_star) < 0.0 {
            u_hat.mapv_inplace(|x| -x);
            v_hat.mapv_inplace(|x| -x);
        }
        let m = evaluate(u_hat.view(), v_hat.view(), inst.u_star.view(), inst.v_star.view());
        Self {
            estimator,
            overlap_u: m.overlap_u,
            overlap_v: m.overlap_v,
            mse_uu: m.mse_uu,
            mse_vv: m.mse_vv,
            mse_uv: m.mse_uv,
            sigma1_astar: sigmas.map(|s| s.0),
            sigma2_astar: sigmas.map(|s| s.1),
            iterations_used,
            u_hat,
            v_hat,
        }
    }
}

fn check_instance(inst: &ProblemInstance, xi: &CovarianceModel, sigma: &CovarianceModel) -> Result<()> {
    if xi.dim() != inst.n {
        return Err(Error::DimensionMismatch { expected: inst.n, got: xi.dim() });
    }
    if sigma.dim() != inst.d {
        return Err(Error::DimensionMismatch { expected: inst.d, got: sigma.dim() });
    }
    Ok(())
}

fn require_above_threshold(theory: &TheoryParams) -> Result<()> {
    if theory.above_threshold {
        Ok(())
    } else {
        Err(Error::BelowThreshold { lambda: theory.lambda, threshold: theory.threshold })
    }
}

/// Row and column weights of the pre-processing in the eigenframe:
/// `A*` has frame `diag(r) F diag(c)`.
fn preprocess_weights(
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    theory: &TheoryParams,
) -> (Array1<f64>, Array1<f64>) {
    let lambda = theory.lambda;
    let shift_u = lambda * (theory.mu_star + theory.b_star);
    let shift_v = lambda * (theory.nu_star + theory.c_star);
    let rows = xi.eigenvalues().mapv(|x| lambda / ((shift_u + x) * x).sqrt());
    let cols = sigma.eigenvalues().mapv(|x| 1.0 / ((shift_v + x) * x).sqrt());
    (rows, cols)
}

/// Matrix-free `A*` in the eigenframe of the instance.
pub fn preprocess_operator<'a>(
    inst: &'a ProblemInstance,
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    theory: &TheoryParams,
) -> Result<ScaledOperator<'a>> {
    check_instance(inst, xi, sigma)?;
    require_above_threshold(theory)?;
    let (rows, cols) = preprocess_weights(xi, sigma, theory);
    Ok(ScaledOperator { matrix: inst.frame(), rows, cols })
}

/// The pre-processed matrix
/// `A* = λ (λ(μ*+b*)I + Ξ)^{-1/2} Ξ^{-1/2} A Σ^{-1/2} (λ(ν*+c*)I + Σ)^{-1/2}`
/// in the standard basis.
pub fn preprocess(
    inst: &ProblemInstance,
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    theory: &TheoryParams,
) -> Result<Array2<f64>> {
    let op = preprocess_operator(inst, xi, sigma, theory)?;
    let frame = crate::model::scale_frame(op.matrix, op.rows.view(), op.cols.view());
    let left = xi.rows_from_eigenbasis(frame.view());
    Ok(sigma.rows_from_eigenbasis(left.t()).reversed_axes())
}

/// Rescales a frame vector to norm `target`; zero stays zero.
fn with_norm(mut x: Array1<f64>, target: f64) -> Array1<f64> {
    let len = norm(x.view());
    if len > 0.0 {
        x *= target / len;
    }
    x
}

/// Optimal spectral estimator.
///
/// With `(u₁, v₁)` the top singular pair of `A*`,
/// `û = η_u √n · normalize(Ξ^{1/2}(λ(μ*+b*)I + Ξ)^{-1/2}(λμ*I + Ξ) u₁)` and
/// `v̂` likewise with `(ν*, c*, Σ)`.
pub fn optimal_spectral(
    inst: &ProblemInstance,
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    theory: &TheoryParams,
    options: PowerOptions,
) -> Result<EstimateReport> {
    let op = preprocess_operator(inst, xi, sigma, theory)?;
    let pair = top_singular_pair(&op, options.tol, options.max_iter)?;
    let lambda = theory.lambda;
    let shift_u = lambda * (theory.mu_star + theory.b_star);
    let shift_v = lambda * (theory.nu_star + theory.c_star);
    let map_u = xi.eigenvalues().mapv(|x| (x / (shift_u + x)).sqrt() * (lambda * theory.mu_star + x));
    let map_v = sigma.eigenvalues().mapv(|x| (x / (shift_v + x)).sqrt() * (lambda * theory.nu_star + x));
    let u_frame = with_norm(&pair.u1 * &map_u, theory.eta_u * (inst.n as f64).sqrt());
    let v_frame = with_norm(&pair.v1 * &map_v, theory.eta_v * (inst.d as f64).sqrt());
    Ok(EstimateReport::new(
        EstimatorKind::OptimalSpectral,
        inst,
        xi.from_eigenbasis(u_frame.view()),
        sigma.from_eigenbasis(v_frame.view()),
        Some((pair.sigma1, pair.sigma2)),
        pair.iterations,
    ))
}

/// `û = √n u₁(A)`, `v̂ = √d v₁(A)`.
pub fn vanilla_svd(
    inst: &ProblemInstance,
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    options: PowerOptions,
) -> Result<EstimateReport> {
    check_instance(inst, xi, sigma)?;
    let frame = inst.frame();
    let pair = top_singular_pair(&frame, options.tol, options.max_iter)?;
    let u_frame = with_norm(pair.u1, (inst.n as f64).sqrt());
    let v_frame = with_norm(pair.v1, (inst.d as f64).sqrt());
    Ok(EstimateReport::new(
        EstimatorKind::Vanilla,
        inst,
        xi.from_eigenbasis(u_frame.view()),
        sigma.from_eigenbasis(v_frame.view()),
        None,
        pair.iterations,
    ))
}

/// `û ∝ Ξ^{1/2} u₁(Ã)`, `v̂ ∝ Σ^{1/2} v₁(Ã)` with `Ã = Ξ^{-1/2} A Σ^{-1/2}`,
/// rescaled to norms `√n` and `√d`.
pub fn whiten_svd(
    inst: &ProblemInstance,
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    options: PowerOptions,
) -> Result<EstimateReport> {
    check_instance(inst, xi, sigma)?;
    let op = ScaledOperator {
        matrix: inst.frame(),
        rows: xi.eigenvalues().mapv(|x| x.powf(-0.5)),
        cols: sigma.eigenvalues().mapv(|x| x.powf(-0.5)),
    };
    let pair = top_singular_pair(&op, options.tol, options.max_iter)?;
    let u_frame = with_norm(&pair.u1 * &xi.eigenvalues().mapv(f64::sqrt), (inst.n as f64).sqrt());
    let v_frame = with_norm(&pair.v1 * &sigma.eigenvalues().mapv(f64::sqrt), (inst.d as f64).sqrt());
    Ok(EstimateReport::new(
        EstimatorKind::Whiten,
        inst,
        xi.from_eigenbasis(u_frame.view()),
        sigma.from_eigenbasis(v_frame.view()),
        None,
        pair.iterations,
    ))
}
