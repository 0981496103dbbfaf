//! Deterministic high-dimensional limits.
//!
//! Notation: `δ = n/d`, `α = 1/δ`, `γ = λ²`. `Ξ̄` and `Σ̄` are random
//! variables distributed according to the limiting spectral measures of the
//! row and column covariances.
//!
//! The information-theoretic overlaps `(q_u, q_v)` solve
//!
//! ```text
//! q_u = E[ αγ q_v Ξ̄⁻² / (1 + αγ q_v Ξ̄⁻¹) ]
//! q_v = E[ γ q_u Σ̄⁻² / (1 + γ q_u Σ̄⁻¹) ]
//! ```
//!
//! Everything else (spectral-estimator overlaps, Onsager limits, MMSE) is an
//! explicit function of the largest solution.

mod bulk;

pub use bulk::{bulk_edge, BulkEdgeFunction};

use crate::error::{Error, Result};
use crate::spectra::SpectralMeasure;

/// Default tolerance for [`solve_fixed_point`].
pub const DEFAULT_TOL: f64 = 1e-13;

const MAX_FIXED_POINT_ITER: usize = 100_000;

/// Every deterministic scalar attached to one `(λ, δ, Ξ̄, Σ̄)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    pub lambda: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Weak-recovery threshold `λ*` of the same setting.
    pub threshold: f64,
    pub q_u_star: f64,
    pub q_v_star: f64,
    pub mu_star: f64,
    pub nu_star: f64,
    pub b_star: f64,
    pub c_star: f64,
    pub eta_u: f64,
    pub eta_v: f64,
    /// Limit of `σ₂(A*)`; only defined above threshold.
    pub sigma2_star: Option<f64>,
    pub above_threshold: bool,
}

impl TheoryParams {
    /// Limit of `‖u*u*ᵀ − ûûᵀ‖²_F / n²` for the optimal spectral estimator.
    pub fn mse_uu(&self) -> f64 {
        1.0 - self.eta_u.powi(4)
    }

    pub fn mse_vv(&self) -> f64 {
        1.0 - self.eta_v.powi(4)
    }

    /// Limit of `‖u*v*ᵀ − ûv̂ᵀ‖²_F / (nd)`.
    pub fn mse_uv(&self) -> f64 {
        1.0 - (self.eta_u * self.eta_v).powi(2)
    }

    /// Whether the predicted bulk edge lies strictly below the outlier at 1.
    /// `None` below threshold.
    pub fn edge_separated(&self) -> Option<bool> {
        self.sigma2_star.map(|s| s < 1.0)
    }
}

/// Limiting minimum mean-square errors for the whitened signals and the
/// errors of the all-zero estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseLimits {
    pub mmse_matrix: f64,
    pub mmse_u: f64,
    pub mmse_v: f64,
    pub trivial_matrix: f64,
    pub trivial_u: f64,
    pub trivial_v: f64,
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {value}")))
    }
}

/// `λ* = (δ / (E[Σ̄⁻²] E[Ξ̄⁻²]))^{1/4}`.
pub fn weak_recovery_threshold(xi: &SpectralMeasure, sigma: &SpectralMeasure, delta: f64) -> f64 {
    (delta / (sigma.moment(-2) * xi.moment(-2))).powf(0.25)
}

/// Right-hand side of the `q_u` equation as a function of `q_v`.
pub fn q_u_map(xi: &SpectralMeasure, delta: f64, lambda: f64, q_v: f64) -> f64 {
    let s = lambda * lambda * q_v / delta;
    xi.expect_unchecked(|x| s / (x * (x + s)))
}

/// Right-hand side of the `q_v` equation as a function of `q_u`.
pub fn q_v_map(sigma: &SpectralMeasure, lambda: f64, q_u: f64) -> f64 {
    let s = lambda * lambda * q_u;
    sigma.expect_unchecked(|x| s / (x * (x + s)))
}

/// The eliminated scalar map `q_v ↦ q_v_map(q_u_map(q_v))`. Concave,
/// increasing, and zero at zero.
pub fn eliminated_map(xi: &SpectralMeasure, sigma: &SpectralMeasure, delta: f64, lambda: f64, q_v: f64) -> f64 {
    q_v_map(sigma, lambda, q_u_map(xi, delta, lambda, q_v))
}

/// Largest solution `(q_u*, q_v*)` of the overlap equations.
///
/// Returns exactly `(0, 0)` at or below the weak-recovery threshold. Above it,
/// iterates the eliminated map downward from `E[Σ̄⁻¹]`, which bounds every
/// fixed point from above. Concavity makes the sequence monotone, so an
/// Aitken extrapolation is accepted whenever it stays on the same side of the
/// fixed point; this keeps the iteration count small close to threshold.
pub fn solve_fixed_point(
    xi: &SpectralMeasure,
    sigma: &SpectralMeasure,
    delta: f64,
    lambda: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    check_positive("delta", delta)?;
    check_positive("lambda", lambda)?;
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(Error::InvalidArgument(format!("tolerance must lie in (0, 1e-3], got {tol}")));
    }
    if lambda <= weak_recovery_threshold(xi, sigma, delta) {
        return Ok((0.0, 0.0));
    }
    let f = |q: f64| eliminated_map(xi, sigma, delta, lambda, q);

    let mut q = sigma.moment(-1);
    let mut last_change = f64::INFINITY;
    for _ in 0..MAX_FIXED_POINT_ITER {
        let q1 = f(q);
        let q2 = f(q1);
        let mut next = q2;
        let denom = q2 - 2.0 * q1 + q;
        if denom != 0.0 {
            let est = q - (q1 - q).powi(2) / denom;
            if est > 0.0 && est < q2 && f(est) <= est {
                next = est;
            }
        }
        last_change = (q - next).abs();
        q = next;
        if !q.is_finite() {
            return Err(Error::DomainError(format!("fixed-point iterate became {q}")));
        }
        if last_change < tol {
            break;
        }
    }
    if last_change >= tol {
        return Err(Error::NoConvergence {
            what: "fixed-point iteration",
            iterations: MAX_FIXED_POINT_ITER,
            last_change,
        });
    }
    if q <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let q_v = f(q);
    Ok((q_u_map(xi, delta, lambda, q_v), q_v))
}

/// Fills in the rescalings, Onsager limits, and spectral-estimator overlaps
/// for a solved fixed point. Leaves `sigma2_star` empty.
pub fn derived_scalars(
    xi: &SpectralMeasure,
    sigma: &SpectralMeasure,
    delta: f64,
    lambda: f64,
    q_u_star: f64,
    q_v_star: f64,
) -> TheoryParams {
    let mu_star = lambda * q_v_star / delta;
    let nu_star = lambda * q_u_star;
    let b_star = sigma.expect_unchecked(|x| lambda / (lambda * nu_star + x)) / delta;
    let c_star = xi.expect_unchecked(|x| lambda / (lambda * mu_star + x));
    let eta_u = (lambda * mu_star / (lambda * mu_star + 1.0)).sqrt();
    let eta_v = (lambda * nu_star / (lambda * nu_star + 1.0)).sqrt();
    TheoryParams {
        lambda,
        delta,
        gamma: lambda * lambda,
        threshold: weak_recovery_threshold(xi, sigma, delta),
        q_u_star,
        q_v_star,
        mu_star,
        nu_star,
        b_star,
        c_star,
        eta_u,
        eta_v,
        sigma2_star: None,
        above_threshold: q_u_star > 0.0 && q_v_star > 0.0,
    }
}

/// Solves the fixed point, fills the derived scalars, and above threshold
/// computes the bulk edge.
pub fn theory_params(xi: &SpectralMeasure, sigma: &SpectralMeasure, delta: f64, lambda: f64) -> Result<TheoryParams> {
    let (q_u, q_v) = solve_fixed_point(xi, sigma, delta, lambda, DEFAULT_TOL)?;
    let mut params = derived_scalars(xi, sigma, delta, lambda, q_u, q_v);
    if params.above_threshold {
        params.sigma2_star = Some(bulk_edge(xi, sigma, delta, &params)?);
    }
    Ok(params)
}

pub fn mmse_limits(xi: &SpectralMeasure, sigma: &SpectralMeasure, q_u_star: f64, q_v_star: f64) -> MmseLimits {
    let xi_inv = xi.moment(-1);
    let sigma_inv = sigma.moment(-1);
    MmseLimits {
        mmse_matrix: xi_inv * sigma_inv - q_u_star * q_v_star,
        mmse_u: xi_inv * xi_inv - q_u_star * q_u_star,
        mmse_v: sigma_inv * sigma_inv - q_v_star * q_v_star,
        trivial_matrix: xi_inv * sigma_inv,
        trivial_u: xi_inv * xi_inv,
        trivial_v: sigma_inv * sigma_inv,
    }
}

/// Free energy of the scalar Gaussian channel with noise law `m`:
/// `ψ_m(x) = ½ (x E[m⁻¹] − E[log(1 + x m⁻¹)])`.
pub fn gaussian_channel_free_energy(m: &SpectralMeasure, x: f64) -> f64 {
    0.5 * m.expect_unchecked(|v| x / v - (x / v).ln_1p())
}

/// Replica-symmetric potential
/// `F(q_u, q_v) = ψ_Ξ̄(αγ q_v) + α ψ_Σ̄(γ q_u) − (αγ/2) q_u q_v`.
pub fn rs_potential(xi: &SpectralMeasure, sigma: &SpectralMeasure, delta: f64, gamma: f64, q_u: f64, q_v: f64) -> f64 {
    let alpha = 1.0 / delta;
    gaussian_channel_free_energy(xi, alpha * gamma * q_v) + alpha * gaussian_channel_free_energy(sigma, gamma * q_u)
        - 0.5 * alpha * gamma * q_u * q_v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit() -> SpectralMeasure {
        SpectralMeasure::point_mass(1.0).unwrap()
    }

    fn two_atoms(a: f64, b: f64) -> SpectralMeasure {
        let mean = 0.5 * (a + b);
        SpectralMeasure::new(vec![(a / mean, 0.5), (b / mean, 0.5)], "pair").unwrap()
    }

    #[test]
    fn threshold_identity_cases() {
        assert_abs_diff_eq!(weak_recovery_threshold(&unit(), &unit(), 1.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(weak_recovery_threshold(&unit(), &unit(), 2.0), 2f64.powf(0.25), epsilon = 1e-15);
    }

    #[test]
    fn identity_fixed_point_closed_form() {
        let (q_u, q_v) = solve_fixed_point(&unit(), &unit(), 1.0, 2.0, 1e-12).unwrap();
        assert_abs_diff_eq!(q_u, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(q_v, 0.75, epsilon = 1e-12);
        let p = derived_scalars(&unit(), &unit(), 1.0, 2.0, q_u, q_v);
        assert_abs_diff_eq!(p.mu_star, 1.5, epsilon = 1e-11);
        assert_abs_diff_eq!(p.nu_star, 1.5, epsilon = 1e-11);
        assert_abs_diff_eq!(p.eta_u * p.eta_u, 0.75, epsilon = 1e-11);
        assert_abs_diff_eq!(p.eta_v * p.eta_v, 0.75, epsilon = 1e-11);
        let m = mmse_limits(&unit(), &unit(), q_u, q_v);
        assert_abs_diff_eq!(m.mmse_matrix, 7.0 / 16.0, epsilon = 1e-11);
    }

    #[test]
    fn below_threshold_is_trivial() {
        let xi = two_atoms(0.5, 1.5);
        let sigma = two_atoms(1.0, 3.0);
        let threshold = weak_recovery_threshold(&xi, &sigma, 1.5);
        for lambda in [0.3 * threshold, 0.9 * threshold, threshold] {
            let (q_u, q_v) = solve_fixed_point(&xi, &sigma, 1.5, lambda, 1e-10).unwrap();
            assert_eq!((q_u, q_v), (0.0, 0.0));
            let p = derived_scalars(&xi, &sigma, 1.5, lambda, q_u, q_v);
            assert!(!p.above_threshold);
            assert_eq!((p.mu_star, p.nu_star, p.eta_u, p.eta_v), (0.0, 0.0, 0.0, 0.0));
            assert_abs_diff_eq!(p.b_star, sigma.expect(|x| lambda / x).unwrap() / 1.5, epsilon = 1e-14);
            assert_abs_diff_eq!(p.c_star, xi.expect(|x| lambda / x).unwrap(), epsilon = 1e-14);
            let m = mmse_limits(&xi, &sigma, q_u, q_v);
            assert_eq!(m.mmse_matrix, m.trivial_matrix);
        }
    }

    /// Brute-force oracle: refine a grid on `[0, qmax]²` around the minimizer
    /// of the summed squared residuals, excluding a neighbourhood of zero.
    fn grid_oracle(xi: &SpectralMeasure, sigma: &SpectralMeasure, delta: f64, lambda: f64) -> (f64, f64) {
        // Relative residual, so the trivial solution at the origin is not a minimizer.
        let residual = |qu: f64, qv: f64| {
            ((qu - q_u_map(xi, delta, lambda, qv)).powi(2) + (qv - q_v_map(sigma, lambda, qu)).powi(2))
                / (qu * qu + qv * qv)
        };
        let (mut lo_u, mut hi_u) = (1e-3, xi.moment(-1));
        let (mut lo_v, mut hi_v) = (1e-3, sigma.moment(-1));
        let mut best = (0.0, 0.0);
        for _ in 0..60 {
            let steps = 40;
            let mut best_r = f64::INFINITY;
            for i in 0..=steps {
                for j in 0..=steps {
                    let qu = lo_u + (hi_u - lo_u) * i as f64 / steps as f64;
                    let qv = lo_v + (hi_v - lo_v) * j as f64 / steps as f64;
                    let r = residual(qu, qv);
                    if r < best_r {
                        best_r = r;
                        best = (qu, qv);
                    }
                }
            }
            let wu = (hi_u - lo_u) / 8.0;
            let wv = (hi_v - lo_v) / 8.0;
            lo_u = (best.0 - wu).max(1e-3);
            hi_u = best.0 + wu;
            lo_v = (best.1 - wv).max(1e-3);
            hi_v = best.1 + wv;
        }
        best
    }

    #[test]
    fn identity_delta_two_matches_grid_oracle() {
        let (q_u, q_v) = solve_fixed_point(&unit(), &unit(), 2.0, 2.0, 1e-13).unwrap();
        let (ou, ov) = grid_oracle(&unit(), &unit(), 2.0, 2.0);
        assert_abs_diff_eq!(q_u, ou, epsilon = 1e-8);
        assert_abs_diff_eq!(q_v, ov, epsilon = 1e-8);
        // Eliminating q_v gives q_u = 8 q_u / (1 + 12 q_u), so q_u = 7/12, q_v = 7/10.
        assert_abs_diff_eq!(q_u, 7.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q_v, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn fixed_point_near_threshold_converges() {
        let xi = two_atoms(0.2, 1.0);
        let sigma = two_atoms(1.0, 4.0);
        let threshold = weak_recovery_threshold(&xi, &sigma, 0.7);
        for factor in [1.0 + 1e-6, 1.001, 1.05] {
            let lambda = factor * threshold;
            let (q_u, q_v) = solve_fixed_point(&xi, &sigma, 0.7, lambda, 1e-13).unwrap();
            assert!(q_u > 0.0 && q_v > 0.0);
            assert!((q_u - q_u_map(&xi, 0.7, lambda, q_v)).abs() < 1e-12);
            assert!((q_v - q_v_map(&sigma, lambda, q_u)).abs() < 1e-11);
        }
    }

    #[test]
    fn identity_case_eta_equals_q() {
        let sigma = two_atoms(0.3, 2.0);
        let threshold = weak_recovery_threshold(&unit(), &sigma, 3.0);
        for k in 1..=20 {
            let lambda = threshold * (1.0 + 0.15 * k as f64);
            let (q_u, q_v) = solve_fixed_point(&unit(), &sigma, 3.0, lambda, 1e-13).unwrap();
            let p = derived_scalars(&unit(), &sigma, 3.0, lambda, q_u, q_v);
            assert_abs_diff_eq!(p.eta_u * p.eta_u, q_u, epsilon = 1e-10);
        }
    }

    #[test]
    fn psi_identity_value() {
        assert_abs_diff_eq!(gaussian_channel_free_energy(&unit(), 3.0), 0.5 * (3.0 - 4f64.ln()), epsilon = 1e-15);
        assert_eq!(rs_potential(&unit(), &unit(), 1.3, 2.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn mmse_vanishes_at_high_snr() {
        let (q_u, q_v) = solve_fixed_point(&unit(), &unit(), 1.0, 1e4, 1e-13).unwrap();
        assert!(mmse_limits(&unit(), &unit(), q_u, q_v).mmse_matrix < 1e-7);
    }

    #[test]
    fn mmse_is_continuous_at_threshold() {
        let xi = two_atoms(0.5, 1.0);
        let sigma = two_atoms(1.0, 2.0);
        let threshold = weak_recovery_threshold(&xi, &sigma, 2.0);
        let mut gaps = Vec::new();
        for eps in [1e-1, 1e-2, 1e-3] {
            let at = |lambda: f64| {
                let (q_u, q_v) = solve_fixed_point(&xi, &sigma, 2.0, lambda, 1e-13).unwrap();
                mmse_limits(&xi, &sigma, q_u, q_v).mmse_matrix
            };
            gaps.push((at(threshold - eps) - at(threshold + eps)).abs());
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
        assert!(gaps[2] < 1e-2);
    }

    fn measure_strategy() -> impl Strategy<Value = SpectralMeasure> {
        prop::collection::vec((0.1f64..5.0, 0.05f64..1.0), 1..8).prop_map(|atoms| {
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            let mean: f64 = atoms.iter().map(|a| a.0 * a.1).sum::<f64>() / total;
            let atoms = atoms.into_iter().map(|(v, w)| (v / mean, w / total)).collect();
            SpectralMeasure::new(atoms, "random").unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn solution_satisfies_equations(xi in measure_strategy(), sigma in measure_strategy(),
                                        delta in 0.25f64..4.0, factor in 1.01f64..4.0) {
            let lambda = factor * weak_recovery_threshold(&xi, &sigma, delta);
            let tol = 1e-12;
            let (q_u, q_v) = solve_fixed_point(&xi, &sigma, delta, lambda, tol).unwrap();
            prop_assert!((q_u - q_u_map(&xi, delta, lambda, q_v)).abs() < 10.0 * tol);
            prop_assert!((q_v - q_v_map(&sigma, lambda, q_u)).abs() < 10.0 * tol);
        }

        #[test]
        fn positive_solution_is_unique(xi in measure_strategy(), sigma in measure_strategy(),
                                       delta in 0.25f64..4.0, factor in 1.2f64..4.0,
                                       starts in prop::collection::vec(1e-3f64..10.0, 10)) {
            let lambda = factor * weak_recovery_threshold(&xi, &sigma, delta);
            let tol = 1e-10;
            let (_, q_v) = solve_fixed_point(&xi, &sigma, delta, lambda, tol).unwrap();
            for start in starts {
                let mut q = start;
                for _ in 0..200_000 {
                    let next = eliminated_map(&xi, &sigma, delta, lambda, q);
                    let done = (next - q).abs() < 1e-14;
                    q = next;
                    if done { break; }
                }
                prop_assert!((q - q_v).abs() < 10.0 * tol, "start {start} reached {q}, solver {q_v}");
            }
        }

        #[test]
        fn monotone_in_lambda(xi in measure_strategy(), sigma in measure_strategy(), delta in 0.25f64..4.0) {
            let threshold = weak_recovery_threshold(&xi, &sigma, delta);
            let mut prev = derived_scalars(&xi, &sigma, delta, 0.1, 0.0, 0.0);
            for k in 0..50 {
                let lambda = threshold * (0.5 + 0.06 * k as f64);
                let (q_u, q_v) = solve_fixed_point(&xi, &sigma, delta, lambda, 1e-13).unwrap();
                let p = derived_scalars(&xi, &sigma, delta, lambda, q_u, q_v);
                prop_assert!(p.q_u_star >= prev.q_u_star - 1e-12);
                prop_assert!(p.q_v_star >= prev.q_v_star - 1e-12);
                prop_assert!(p.eta_u >= prev.eta_u - 1e-12);
                prop_assert!(p.eta_v >= prev.eta_v - 1e-12);
                prev = p;
            }
        }

        #[test]
        fn fixed_point_is_stationary(xi in measure_strategy(), sigma in measure_strategy(),
                                     delta in 0.25f64..4.0, factor in 1.05f64..4.0) {
            let lambda = factor * weak_recovery_threshold(&xi, &sigma, delta);
            let (q_u, q_v) = solve_fixed_point(&xi, &sigma, delta, lambda, 1e-13).unwrap();
            let gamma = lambda * lambda;
            let h = 1e-5;
            let f = |a: f64, b: f64| rs_potential(&xi, &sigma, delta, gamma, a, b);
            let du = (f(q_u + h, q_v) - f(q_u - h, q_v)) / (2.0 * h);
            let dv = (f(q_u, q_v + h) - f(q_u, q_v - h)) / (2.0 * h);
            prop_assert!(du.hypot(dv) < 1e-5, "gradient ({du}, {dv})");
        }

        #[test]
        fn derived_scalar_identities(xi in measure_strategy(), sigma in measure_strategy(),
                                     delta in 0.25f64..4.0, factor in 1.05f64..4.0) {
            let lambda = factor * weak_recovery_threshold(&xi, &sigma, delta);
            let (q_u, q_v) = solve_fixed_point(&xi, &sigma, delta, lambda, 1e-13).unwrap();
            let p = derived_scalars(&xi, &sigma, delta, lambda, q_u, q_v);
            prop_assert!(p.above_threshold);
            prop_assert_eq!(p.mu_star, lambda * q_v / delta);
            prop_assert_eq!(p.nu_star, lambda * q_u);
            prop_assert!((p.eta_u.powi(2) - lambda * p.mu_star / (lambda * p.mu_star + 1.0)).abs() < 1e-15);
            prop_assert!(p.eta_u > 0.0 && p.eta_u < 1.0 && p.eta_v > 0.0 && p.eta_v < 1.0);
            let m = mmse_limits(&xi, &sigma, q_u, q_v);
            prop_assert!(m.mmse_matrix < m.trivial_matrix);
        }
    }
}
