//! Bayes-AMP for the Gaussian prior and its scalar state evolution.
//!
//! The iteration is
//!
//! ```text
//! u^t     = Ξ⁻¹ A Σ⁻¹ ṽ^t − b_t Ξ⁻¹ ũ^{t−1}
//! ũ^t     = μ_t (μ_t² Ξ⁻¹ + σ_t² I)⁻¹ u^t
//! v^{t+1} = Σ⁻¹ Aᵀ Ξ⁻¹ ũ^t − c_t Σ⁻¹ ṽ^t
//! ṽ^{t+1} = ν_{t+1} (ν_{t+1}² Σ⁻¹ + τ_{t+1}² I)⁻¹ v^{t+1}
//! ```
//!
//! with Onsager terms `c_t = (μ_t/n) tr((μ_t²Ξ⁻¹ + σ_t²I)⁻¹Ξ⁻¹)` and
//! `b_{t+1} = (ν_{t+1}/n) tr((ν_{t+1}²Σ⁻¹ + τ_{t+1}²I)⁻¹Σ⁻¹)`. In the
//! high-dimensional limit `u^t ≈ μ_t Ξ⁻¹u* + σ_t Ξ^{-1/2} z`, so the
//! denoisers are exact posterior means.
//!
//! Every operator above is diagonal in the eigenframe of the covariances, so
//! the iteration runs there (see [`crate::model`]) and all traces are sums
//! over cached eigenvalues.

use ndarray::{Array1, ArrayView1, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimators::{EstimateReport, EstimatorKind};
use crate::linalg::norm;
use crate::model::{stream_rng, ProblemInstance};
use crate::spectra::{CovarianceModel, SpectralMeasure};
use crate::theory::TheoryParams;

const DIVERGENCE_FACTOR: f64 = 1e8;
const WARM_START_STREAM: u64 = 11;

/// State-evolution parameters along an AMP run.
///
/// `mu[t]`, `sigma2[t]` describe `u^t` for `t = 0..=steps`. `nu[t]`,
/// `tau2[t]` describe `v^{t+1}`, the iterate produced from `u^t`, so they
/// hold `steps` entries. Apart from an initialization that is not of the
/// matched form (see [`AmpInit::FromVector`]), `mu = λ·sigma2` and
/// `nu = λ·tau2` entrywise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeTrack {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub nu: Vec<f64>,
    pub tau2: Vec<f64>,
}

/// `ν = λ E[λμ Ξ̄⁻² / (λμ Ξ̄⁻¹ + 1)]`.
fn nu_from_mu(xi: &SpectralMeasure, lambda: f64, mu: f64) -> f64 {
    let s = lambda * mu;
    lambda * xi.expect_unchecked(|x| s / (x * (x + s)))
}

/// `μ = (λ/δ) E[λν Σ̄⁻² / (λν Σ̄⁻¹ + 1)]`.
fn mu_from_nu(sigma: &SpectralMeasure, delta: f64, lambda: f64, nu: f64) -> f64 {
    let s = lambda * nu;
    lambda / delta * sigma.expect_unchecked(|x| s / (x * (x + s)))
}

/// Runs `steps` rounds of the scalar recursion from `μ_0 = mu_0`.
pub fn se_recursion(
    xi: &SpectralMeasure,
    sigma: &SpectralMeasure,
    delta: f64,
    lambda: f64,
    mu_0: f64,
    steps: usize,
) -> Result<SeTrack> {
    if !(mu_0 >= 0.0 && mu_0.is_finite()) {
        return Err(Error::InvalidArgument(format!("mu_0 must be finite and non-negative, got {mu_0}")));
    }
    let mut track = SeTrack { mu: vec![mu_0], sigma2: vec![mu_0 / lambda], ..SeTrack::default() };
    extend_track(&mut track, xi, sigma, delta, lambda, steps);
    Ok(track)
}

fn extend_track(
    track: &mut SeTrack,
    xi: &SpectralMeasure,
    sigma: &SpectralMeasure,
    delta: f64,
    lambda: f64,
    steps: usize,
) {
    for _ in 0..steps {
        let mu = *track.mu.last().expect("track starts non-empty");
        push_nu(track, nu_from_mu(xi, lambda, mu), lambda);
        let nu = *track.nu.last().expect("just pushed");
        let mu_next = mu_from_nu(sigma, delta, lambda, nu);
        track.mu.push(mu_next);
        track.sigma2.push(mu_next / lambda);
    }
}

fn push_nu(track: &mut SeTrack, nu: f64, lambda: f64) {
    track.nu.push(nu);
    track.tau2.push(nu / lambda);
}

/// How the first `ṽ⁰` is chosen.
#[derive(Debug, Clone)]
pub enum AmpInit {
    /// `ṽ⁰ = F(ν*Σ⁻¹v* + τ*Σ^{-1/2}w)` with `F = λ(λν*Σ⁻¹ + I)⁻¹`,
    /// `τ*² = ν*/λ`, and `w` standard Gaussian drawn from `noise_seed`. This
    /// places the iteration at its state-evolution fixed point.
    OracleWarmStart { noise_seed: u64 },
    /// A given `ṽ⁰` in the standard basis. The initial state-evolution
    /// parameters are measured against the truth:
    /// `μ_0 = (λ/n)⟨Σ⁻¹v*, ṽ⁰⟩`, `σ_0² = (1/n) ṽ⁰ᵀΣ⁻¹ṽ⁰`.
    FromVector(Array1<f64>),
}

/// Iterates of one AMP run.
///
/// Vectors are stored in the eigenframe; the `*_standard` accessors map them
/// back. After a run with `steps` rounds, `t = steps` and the vectors are
/// `u^t`, `ũ^t`, `v^t`, `ṽ^t`.
#[derive(Debug, Clone)]
pub struct AmpState {
    pub t: usize,
    pub u_t: Array1<f64>,
    pub v_t: Array1<f64>,
    pub tilde_u: Array1<f64>,
    pub tilde_v: Array1<f64>,
    pub b_t: f64,
    pub c_t: f64,
    pub se: SeTrack,
    /// `b_1, …, b_t`.
    pub b_history: Vec<f64>,
    /// `c_0, …, c_t`.
    pub c_history: Vec<f64>,
    /// `‖u^s − u^{s−1}‖² / n` for `s = 1, …, t`.
    pub u_increments: Vec<f64>,
}

impl AmpState {
    pub fn u_standard(&self, xi: &CovarianceModel) -> Array1<f64> {
        xi.from_eigenbasis(self.u_t.view())
    }

    pub fn v_standard(&self, sigma: &CovarianceModel) -> Array1<f64> {
        sigma.from_eigenbasis(self.v_t.view())
    }

    /// `Ξ u^t` in the standard basis, the natural estimate direction of `u*`.
    pub fn xi_u(&self, xi: &CovarianceModel) -> Array1<f64> {
        let scaled = &self.u_t * &xi.eigenvalues();
        xi.from_eigenbasis(scaled.view())
    }

    /// `Σ v^t` in the standard basis.
    pub fn sigma_v(&self, sigma: &CovarianceModel) -> Array1<f64> {
        let scaled = &self.v_t * &sigma.eigenvalues();
        sigma.from_eigenbasis(scaled.view())
    }
}

fn check_finite(x: &Array1<f64>, iteration: usize, n: usize) -> Result<()> {
    let len = norm(x.view());
    if !len.is_finite() || len > DIVERGENCE_FACTOR * (n as f64).sqrt() {
        return Err(Error::Diverged { iteration, norm: len });
    }
    Ok(())
}

/// `(μ (μ² d⁻¹ + σ²)⁻¹)` per eigenvalue and the trace `(μ/n) Σ d⁻¹/(μ²d⁻¹ + σ²)`.
/// A zero `μ` gives the zero denoiser.
fn denoiser(eigvals: ArrayView1<f64>, mu: f64, s2: f64, n: usize) -> (Array1<f64>, f64) {
    if mu == 0.0 {
        return (Array1::zeros(eigvals.len()), 0.0);
    }
    let gain = eigvals.mapv(|x| mu / (mu * mu / x + s2));
    let trace = eigvals.iter().map(|&x| mu / (x * (mu * mu / x + s2))).sum::<f64>() / n as f64;
    (gain, trace)
}

/// Runs Bayes-AMP for `steps` rounds.
///
/// The state-evolution parameters inside the denoisers are the deterministic
/// recursion evaluated on the empirical spectra of `xi` and `sigma`.
pub fn run_bayes_amp(
    inst: &ProblemInstance,
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    theory: &TheoryParams,
    init: &AmpInit,
    steps: usize,
) -> Result<AmpState> {
    let (n, d) = (inst.n, inst.d);
    if xi.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: xi.dim() });
    }
    if sigma.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: sigma.dim() });
    }
    let lambda = inst.lambda;
    let delta = inst.delta();
    let xi_esd = SpectralMeasure::from_covariance(xi)?;
    let sigma_esd = SpectralMeasure::from_covariance(sigma)?;
    let dvals = xi.eigenvalues();
    let evals = sigma.eigenvalues();
    let d_inv = dvals.mapv(|x| 1.0 / x);
    let e_inv = evals.mapv(|x| 1.0 / x);
    let frame = inst.frame();

    let (tilde_v0, mu_0, sigma2_0) = match init {
        AmpInit::OracleWarmStart { noise_seed } => {
            if !theory.above_threshold {
                return Err(Error::BelowThreshold { lambda: theory.lambda, threshold: theory.threshold });
            }
            let nu = theory.nu_star;
            let tau = (nu / lambda).sqrt();
            let mut rng = stream_rng(*noise_seed, WARM_START_STREAM);
            let w: Array1<f64> = Array1::from_shape_simple_fn(d, || rng.sample(StandardNormal));
            let mut v0 = Array1::zeros(d);
            Zip::from(&mut v0).and(&inst.v_frame()).and(&w).and(&evals).for_each(|out, &vs, &wj, &e| {
                let signal = nu * vs / e + tau * wj / e.sqrt();
                *out = lambda / (lambda * nu / e + 1.0) * signal;
            });
            (v0, theory.mu_star, theory.mu_star / lambda)
        }
        AmpInit::FromVector(v0) => {
            if v0.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: v0.len() });
            }
            let v0 = sigma.to_eigenbasis(v0.view());
            let weighted = &v0 * &e_inv;
            let mu = lambda / n as f64 * weighted.dot(&inst.v_frame());
            let s2 = weighted.dot(&v0) / n as f64;
            (v0, mu.abs(), s2)
        }
    };

    let mut se = SeTrack { mu: vec![mu_0], sigma2: vec![sigma2_0], ..SeTrack::default() };
    let mut tilde_v = tilde_v0;
    let mut tilde_u_prev: Array1<f64> = Array1::zeros(n);
    let mut v_t: Array1<f64> = Array1::zeros(d);
    let mut u_prev: Option<Array1<f64>> = None;
    let mut b_t = 0.0;
    let mut b_history = Vec::with_capacity(steps);
    let mut c_history = Vec::with_capacity(steps + 1);
    let mut u_increments = Vec::with_capacity(steps);

    for t in 0..=steps {
        // u^t = D⁻¹ F E⁻¹ ṽ^t − b_t D⁻¹ ũ^{t−1}
        let right = &tilde_v * &e_inv;
        let mut u_t = frame.dot(&right);
        u_t.scaled_add(-b_t, &tilde_u_prev);
        u_t *= &d_inv;
        check_finite(&u_t, t, n)?;
        if let Some(prev) = &u_prev {
            let diff = &u_t - prev;
            u_increments.push(diff.dot(&diff) / n as f64);
        }

        let (mu_t, s2_t) = (se.mu[t], se.sigma2[t]);
        let (gain_u, c_t) = denoiser(dvals, mu_t, s2_t, n);
        let tilde_u = &u_t * &gain_u;
        c_history.push(c_t);

        if t == steps {
            return Ok(AmpState { t, u_t, v_t, tilde_u, tilde_v, b_t, c_t, se, b_history, c_history, u_increments });
        }

        // v^{t+1} = E⁻¹ Fᵀ D⁻¹ ũ^t − c_t E⁻¹ ṽ^t
        let left = &tilde_u * &d_inv;
        let mut v_next = frame.t().dot(&left);
        v_next.scaled_add(-c_t, &tilde_v);
        v_next *= &e_inv;
        check_finite(&v_next, t, n)?;

        // The first step uses the general form because σ_0² need not equal μ_0/λ.
        let nu_next = if t == 0 {
            let (m, s2) = (mu_t, s2_t);
            if m == 0.0 {
                0.0
            } else {
                lambda * xi_esd.expect_unchecked(|x| m * m / (x * (m * m + s2 * x)))
            }
        } else {
            nu_from_mu(&xi_esd, lambda, mu_t)
        };
        push_nu(&mut se, nu_next, lambda);
        let tau2_next = nu_next / lambda;
        let (gain_v, b_next) = denoiser(evals, nu_next, tau2_next, n);
        tilde_v = &v_next * &gain_v;
        v_t = v_next;
        b_t = b_next;
        b_history.push(b_next);

        let mu_next = mu_from_nu(&sigma_esd, delta, lambda, nu_next);
        se.mu.push(mu_next);
        se.sigma2.push(mu_next / lambda);

        tilde_u_prev = tilde_u;
        u_prev = Some(u_t);
    }
    unreachable!("loop returns at t == steps")
}

/// Relative residuals of the fixed-point equations
/// `Ĝu = Ξ⁻¹AΣ⁻¹Fv` and `F̂v = Σ⁻¹AᵀΞ⁻¹Gu`, where `G = λ(λμ*Ξ⁻¹ + I)⁻¹`,
/// `F = λ(λν*Σ⁻¹ + I)⁻¹`, `Ĝ = I + b*Ξ⁻¹G`, and `F̂ = I + c*Σ⁻¹F`.
/// Vectors are given in the eigenframe. Returns the larger of the two.
pub fn fixed_point_residual(
    inst: &ProblemInstance,
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    theory: &TheoryParams,
    u: ArrayView1<f64>,
    v: ArrayView1<f64>,
) -> f64 {
    let lambda = theory.lambda;
    let g = xi.eigenvalues().mapv(|x| lambda / (lambda * theory.mu_star / x + 1.0));
    let f = sigma.eigenvalues().mapv(|x| lambda / (lambda * theory.nu_star / x + 1.0));
    let d_inv = xi.eigenvalues().mapv(|x| 1.0 / x);
    let e_inv = sigma.eigenvalues().mapv(|x| 1.0 / x);
    let frame = inst.frame();

    let g_hat_u = &u + &(&u * &g * &d_inv * theory.b_star);
    let rhs_u = frame.dot(&(&v * &f * &e_inv)) * &d_inv;
    let f_hat_v = &v + &(&v * &f * &e_inv * theory.c_star);
    let rhs_v = frame.t().dot(&(&u * &g * &d_inv)) * &e_inv;

    let rel = |lhs: &Array1<f64>, rhs: &Array1<f64>| {
        let scale = norm(lhs.view()).max(norm(rhs.view()));
        if scale == 0.0 {
            0.0
        } else {
            norm((lhs - rhs).view()) / scale
        }
    };
    rel(&g_hat_u, &rhs_u).max(rel(&f_hat_v, &rhs_v))
}

/// [`fixed_point_residual`] at the current iterates `(u^t, v^t)`.
pub fn amp_fixed_point_residual(
    state: &AmpState,
    inst: &ProblemInstance,
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    theory: &TheoryParams,
) -> f64 {
    fixed_point_residual(inst, xi, sigma, theory, state.u_t.view(), state.v_t.view())
}

/// Exact solution of the fixed-point equations built from a singular pair
/// `(u₁, v₁)` of `A*` with singular value 1, all in the eigenframe:
/// `u = (G̃^{1/2} G)⁻¹ u₁` and `v = (F̃^{1/2} F)⁻¹ v₁` with
/// `G̃ = (1/λ) Ξ⁻¹(Ξ + λ(μ*+b*)I)` and `F̃ = (1/λ) Σ⁻¹(Σ + λ(ν*+c*)I)`.
pub fn fixed_point_from_singular_pair(
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    theory: &TheoryParams,
    u1: ArrayView1<f64>,
    v1: ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    let lambda = theory.lambda;
    let shift_u = lambda * (theory.mu_star + theory.b_star);
    let shift_v = lambda * (theory.nu_star + theory.c_star);
    let map_u = xi.eigenvalues().mapv(|x| {
        let g = lambda / (lambda * theory.mu_star / x + 1.0);
        let g_tilde = (x + shift_u) / (lambda * x);
        1.0 / (g_tilde.sqrt() * g)
    });
    let map_v = sigma.eigenvalues().mapv(|x| {
        let f = lambda / (lambda * theory.nu_star / x + 1.0);
        let f_tilde = (x + shift_v) / (lambda * x);
        1.0 / (f_tilde.sqrt() * f)
    });
    (&u1 * &map_u, &v1 * &map_v)
}

/// AMP as an estimator: `û = η_u √n · normalize(Ξu^t)` and
/// `v̂ = η_v √d · normalize(Σv^t)`.
pub fn amp_estimate(
    inst: &ProblemInstance,
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    theory: &TheoryParams,
    noise_seed: u64,
    steps: usize,
) -> Result<EstimateReport> {
    let state = run_bayes_amp(inst, xi, sigma, theory, &AmpInit::OracleWarmStart { noise_seed }, steps)?;
    let scale = |x: Array1<f64>, target: f64| {
        let len = norm(x.view());
        if len > 0.0 {
            x * (target / len)
        } else {
            x
        }
    };
    let u_hat = scale(state.xi_u(xi), theory.eta_u * (inst.n as f64).sqrt());
    let v_hat = scale(state.sigma_v(sigma), theory.eta_v * (inst.d as f64).sqrt());
    Ok(EstimateReport::new(EstimatorKind::BayesAmp, inst, u_hat, v_hat, None, steps))
}
