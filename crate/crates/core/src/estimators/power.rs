//! Top two singular values by power iteration with deflation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::model::stream_rng;

/// Seed of the start vectors; fixed so repeated calls are bit-identical.
const START_SEED: u64 = 0x005e_ed0f_5eed;

/// Default iteration cap for [`top_singular_pair`].
pub const DEFAULT_MAX_ITER: usize = 20_000;

/// Default relative residual tolerance for [`top_singular_pair`].
pub const DEFAULT_TOL: f64 = 1e-10;

/// A real matrix available only through products with vectors.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `M x`.
    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64>;
    /// `Mᵀ y`.
    fn apply_t(&self, y: ArrayView1<f64>) -> Array1<f64>;
}

impl LinearOperator for ArrayView2<'_, f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.dot(&x)
    }

    fn apply_t(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self.t().dot(&y)
    }
}

impl LinearOperator for Array2<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.dot(&x)
    }

    fn apply_t(&self, y: ArrayView1<f64>) -> Array1<f64> {
        self.t().dot(&y)
    }
}

/// `diag(rows) · M · diag(cols)` applied without forming the product.
pub struct ScaledOperator<'a> {
    pub matrix: ArrayView2<'a, f64>,
    pub rows: Array1<f64>,
    pub cols: Array1<f64>,
}

impl LinearOperator for ScaledOperator<'_> {
    fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let scaled = &x * &self.cols;
        self.matrix.dot(&scaled) * &self.rows
    }

    fn apply_t(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let scaled = &y * &self.rows;
        self.matrix.t().dot(&scaled) * &self.cols
    }
}

/// Leading singular triplet and the second singular value.
#[derive(Debug, Clone)]
pub struct SingularPair {
    pub sigma1: f64,
    pub u1: Array1<f64>,
    pub v1: Array1<f64>,
    pub sigma2: f64,
    /// Gram-matrix products used for both values.
    pub iterations: usize,
}

#[derive(Clone, Copy)]
enum Side {
    /// Iterate on `M Mᵀ` with vectors of length `nrows`.
    Left,
    /// Iterate on `Mᵀ M` with vectors of length `ncols`.
    Right,
}

fn gram(op: &impl LinearOperator, side: Side, x: ArrayView1<f64>) -> Array1<f64> {
    match side {
        Side::Left => op.apply(op.apply_t(x).view()),
        Side::Right => op.apply_t(op.apply(x).view()),
    }
}

fn project_out(x: &mut Array1<f64>, basis: Option<&Array1<f64>>) {
    if let Some(b) = basis {
        let coef = b.dot(x);
        x.scaled_add(-coef, b);
    }
}

/// Power iteration on the Gram matrix, optionally restricted to the
/// orthogonal complement of `deflate`. Returns the Rayleigh quotient, the unit
/// vector, and the iteration count. Convergence is declared when
/// `‖Gx − ρx‖ < tol · scale`.
fn power_method(
    op: &impl LinearOperator,
    side: Side,
    deflate: Option<&Array1<f64>>,
    stream: u64,
    tol: f64,
    scale: Option<f64>,
    max_iter: usize,
) -> Result<(f64, Array1<f64>, usize)> {
    let len = match side {
        Side::Left => op.nrows(),
        Side::Right => op.ncols(),
    };
    let mut rng = stream_rng(START_SEED, stream);
    let mut x: Array1<f64> = Array1::from_shape_simple_fn(len, || rng.sample(StandardNormal));
    project_out(&mut x, deflate);
    x /= norm(x.view());

    let mut last_residual = f64::INFINITY;
    for it in 1..=max_iter {
        let mut y = gram(op, side, x.view());
        project_out(&mut y, deflate);
        let rho = x.dot(&y);
        let y_norm = norm(y.view());
        let threshold = tol * scale.unwrap_or(rho);
        if y_norm <= f64::EPSILON * scale.unwrap_or(0.0) || y_norm == 0.0 {
            // The restricted operator vanishes: the value is exactly zero.
            return Ok((0.0, x, it));
        }
        let mut residual_vec = y.clone();
        residual_vec.scaled_add(-rho, &x);
        last_residual = norm(residual_vec.view());
        if last_residual < threshold {
            return Ok((rho, x, it));
        }
        x = y / y_norm;
        // Re-orthogonalize every step so rounding cannot reintroduce the
        // deflated direction.
        project_out(&mut x, deflate);
        let x_norm = norm(x.view());
        x /= x_norm;
    }
    Err(Error::NoConvergence { what: "power iteration", iterations: max_iter, last_change: last_residual })
}

/// `σ₁`, the unit singular vectors `u₁`, `v₁`, and `σ₂` of `op`.
///
/// The iteration runs on the Gram matrix of the smaller side from a fixed
/// pseudo-random start. `σ₁` converges when the Gram residual drops below
/// `tol·σ₁²`; `σ₂` comes from the same iteration restricted to the orthogonal
/// complement of the first singular vector, with the same absolute target.
pub fn top_singular_pair(op: &impl LinearOperator, tol: f64, max_iter: usize) -> Result<SingularPair> {
    if !(tol > 0.0 && tol <= 1e-8) {
        return Err(Error::InvalidArgument(format!("power-iteration tolerance must lie in (0, 1e-8], got {tol}")));
    }
    if op.nrows() == 0 || op.ncols() == 0 {
        return Err(Error::InvalidArgument("empty operator".into()));
    }
    let side = if op.nrows() <= op.ncols() { Side::Left } else { Side::Right };
    let (rho1, x1, it1) = power_method(op, side, None, 1, tol, None, max_iter)?;
    let sigma1 = rho1.max(0.0).sqrt();
    if sigma1 == 0.0 {
        return Err(Error::InvalidArgument("operator is zero".into()));
    }
    let (rho2, _, it2) = if x1.len() > 1 {
        power_method(op, side, Some(&x1), 2, tol, Some(rho1), max_iter)?
    } else {
        (0.0, x1.clone(), 0)
    };
    let (u1, v1) = match side {
        Side::Left => {
            let v = op.apply_t(x1.view()) / sigma1;
            (x1, v)
        }
        Side::Right => {
            let u = op.apply(x1.view()) / sigma1;
            (u, x1)
        }
    };
    Ok(SingularPair { sigma1, u1, v1, sigma2: rho2.max(0.0).sqrt(), iterations: it1 + it2 })
}
