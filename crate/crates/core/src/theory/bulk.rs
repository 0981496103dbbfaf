//! Right edge of the singular-value bulk of the pre-processed matrix.
//!
//! After pre-processing, the noise part of `A*` is a separable matrix whose
//! row and column spectra are the pushforwards
//!
//! ```text
//! Ξ̄* = λ / (λ(μ* + b*) + Ξ̄),    Σ̄* = λ / (λ(ν* + c*) + Σ̄).
//! ```
//!
//! For `α > sup Ξ̄*` let `c(α) = E[Ξ̄*/(α − Ξ̄*)]` and let `β(α)` be the root
//! above `c(α)·sup Σ̄*` of `1 = (1/δ) E[Σ̄*/(β − c(α)Σ̄*)]`. With
//! `ψ(α) = α β(α)`, the squared edge is `ψ` at its largest critical point.

use crate::error::{Error, Result};
use crate::spectra::SpectralMeasure;

use super::TheoryParams;

const GRID_POINTS: usize = 2000;
const GRID_SPAN: f64 = 100.0;
const LEFT_OFFSET: f64 = 1e-6;
const ROOT_TOL: f64 = 1e-12;
const GOLDEN_TOL: f64 = 1e-11;

/// The function `ψ(α) = α β(α)` for one setting.
#[derive(Debug, Clone)]
pub struct BulkEdgeFunction {
    xi_star: SpectralMeasure,
    sigma_star: SpectralMeasure,
    delta: f64,
}

impl BulkEdgeFunction {
    pub fn new(xi: &SpectralMeasure, sigma: &SpectralMeasure, delta: f64, theory: &TheoryParams) -> Result<Self> {
        let lambda = theory.lambda;
        let shift_u = lambda * (theory.mu_star + theory.b_star);
        let shift_v = lambda * (theory.nu_star + theory.c_star);
        Ok(Self {
            xi_star: xi.map(|x| lambda / (shift_u + x), "xi*")?,
            sigma_star: sigma.map(|x| lambda / (shift_v + x), "sigma*")?,
            delta,
        })
    }

    /// `sup supp(Ξ̄*)`, the left end of the admissible `α` range.
    pub fn left_edge(&self) -> f64 {
        self.xi_star.max_value()
    }

    fn c_of(&self, alpha: f64) -> f64 {
        self.xi_star.expect_unchecked(|x| x / (alpha - x))
    }

    /// `β(α)`, the root of `(1/δ) E[Σ̄*/(β − cΣ̄*)] = 1` above `c·sup Σ̄*`.
    ///
    /// The left side decreases from `+∞` to `0` on that half-line and is at
    /// most 1 at `s + E[Σ̄*]/δ`, which brackets the root. Newton steps are
    /// taken when they stay inside the bracket, bisection otherwise.
    fn beta_of(&self, alpha: f64) -> f64 {
        let c = self.c_of(alpha);
        let s = c * self.sigma_star.max_value();
        let h = |beta: f64| {
            let mut value = 0.0;
            let mut slope = 0.0;
            for &(y, w) in self.sigma_star.atoms() {
                let r = 1.0 / (beta - c * y);
                value += w * y * r;
                slope -= w * y * r * r;
            }
            (value / self.delta - 1.0, slope / self.delta)
        };
        let mut lo = s;
        let mut hi = s + self.sigma_star.moment(1) / self.delta;
        let mut beta = hi;
        for _ in 0..200 {
            let (value, slope) = h(beta);
            if value == 0.0 {
                return beta;
            }
            if value > 0.0 {
                lo = beta;
            } else {
                hi = beta;
            }
            let newton = beta - value / slope;
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - beta).abs() <= ROOT_TOL * beta || hi - lo <= ROOT_TOL * hi {
                return next;
            }
            beta = next;
        }
        beta
    }

    pub fn psi(&self, alpha: f64) -> f64 {
        alpha * self.beta_of(alpha)
    }

    /// Central-difference derivative of `ψ` with a step kept well inside
    /// the admissible range.
    fn psi_prime(&self, alpha: f64) -> f64 {
        let h = 1e-5 * (alpha - self.left_edge());
        (self.psi(alpha + h) - self.psi(alpha - h)) / (2.0 * h)
    }

    /// Largest critical point of `ψ` on the log grid, refined by golden-section
    /// search on whichever of `ψ`, `−ψ` has a minimum in the bracketing cell.
    pub fn largest_critical_point(&self) -> Result<f64> {
        let x_max = self.left_edge();
        let lo = x_max * (1.0 + LEFT_OFFSET);
        let hi = x_max * GRID_SPAN;
        let ratio = (hi / lo).ln() / (GRID_POINTS - 1) as f64;
        let grid: Vec<f64> = (0..GRID_POINTS).map(|k| lo * (ratio * k as f64).exp()).collect();
        let slopes: Vec<f64> = grid.iter().map(|&a| self.psi_prime(a)).collect();
        let cell = (0..GRID_POINTS - 1)
            .rev()
            .find(|&k| slopes[k].signum() != slopes[k + 1].signum())
            .ok_or(Error::NoCriticalPoint { alpha_max: hi })?;
        let sign = if slopes[cell] < 0.0 { 1.0 } else { -1.0 };
        Ok(golden_section_min(|a| sign * self.psi(a), grid[cell], grid[cell + 1]))
    }
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > GOLDEN_TOL * b {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Limit `σ₂*` of the second singular value of the pre-processed matrix.
pub fn bulk_edge(xi: &SpectralMeasure, sigma: &SpectralMeasure, delta: f64, theory: &TheoryParams) -> Result<f64> {
    if !theory.above_threshold {
        return Err(Error::BelowThreshold { lambda: theory.lambda, threshold: theory.threshold });
    }
    let f = BulkEdgeFunction::new(xi, sigma, delta, theory)?;
    let alpha = f.largest_critical_point()?;
    Ok(f.psi(alpha).sqrt())
}
