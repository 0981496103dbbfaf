//! Seeded instances of the observation model and the binary dump format.
//!
//! # Representation
//!
//! Let `Ξ = P D Pᵀ` and `Σ = Q E Qᵀ` be the cached eigendecompositions. An
//! instance stores the observation in the *eigenframe*
//!
//! ```text
//! F = Pᵀ A Q = (λ/n) (Pᵀu*)(Qᵀv*)ᵀ + D^{1/2} G E^{1/2},
//! ```
//!
//! where `G` has iid `N(0, 1/n)` entries. The noise matrix of the model is
//! `W̃ = P G Qᵀ`, which has the same iid law as `G` because `P` and `Q` are
//! orthogonal. Every estimator in this crate is equivariant under these
//! rotations, so they run on `F` at `O(nd)` per matrix-vector product and map
//! their final vectors back with `P` or `Q`. The standard-basis matrix `A` is
//! materialized only on request.
//!
//! # Dump format
//!
//! [`write_dump`] produces a little-endian file:
//!
//! | offset | size | content |
//! |---|---|---|
//! | 0 | 8 | magic `b"HSPEC1\0\0"` |
//! | 8 | 8 | `n` as `u64` |
//! | 16 | 8 | `d` as `u64` |
//! | 24 | 8 | `λ` as `f64` |
//! | 32 | `8·n·d` | `A`, row-major `f64` |
//! | … | `8·n` | `u*` |
//! | … | `8·d` | `v*` |

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spectra::CovarianceModel;

/// Magic bytes opening every instance dump.
pub const DUMP_MAGIC: [u8; 8] = *b"HSPEC1\0\0";

const STREAM_U: u64 = 1;
const STREAM_V: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Distribution of the signal entries. Both have mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prior {
    Gaussian,
    Rademacher,
}

impl FromStr for Prior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Prior::Gaussian),
            "rademacher" => Ok(Prior::Rademacher),
            other => Err(Error::Config(format!("unknown prior '{other}'"))),
        }
    }
}

impl fmt::Display for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Prior::Gaussian => "gaussian",
            Prior::Rademacher => "rademacher",
        })
    }
}

/// Random generator for one named stream of a seed.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_signal(rng: &mut ChaCha20Rng, prior: Prior, len: usize) -> Array1<f64> {
    match prior {
        Prior::Gaussian => Array1::from_shape_simple_fn(len, || rng.sample(StandardNormal)),
        Prior::Rademacher => Array1::from_shape_simple_fn(len, || if rng.random::<bool>() { 1.0 } else { -1.0 }),
    }
}

/// One realization of the model.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    /// Generating seed; `None` for instances loaded from a dump.
    pub seed: Option<u64>,
    pub prior: Prior,
    pub u_star: Array1<f64>,
    pub v_star: Array1<f64>,
    u_frame: Array1<f64>,
    v_frame: Array1<f64>,
    frame: Array2<f64>,
}

impl ProblemInstance {
    /// Observation in the eigenframe, `Pᵀ A Q`.
    pub fn frame(&self) -> ArrayView2<'_, f64> {
        self.frame.view()
    }

    /// `Pᵀ u*`.
    pub fn u_frame(&self) -> ArrayView1<'_, f64> {
        self.u_frame.view()
    }

    /// `Qᵀ v*`.
    pub fn v_frame(&self) -> ArrayView1<'_, f64> {
        self.v_frame.view()
    }

    /// Aspect ratio `n/d`.
    pub fn delta(&self) -> f64 {
        self.n as f64 / self.d as f64
    }

    /// Standard-basis observation `A = P F Qᵀ`.
    pub fn observation(&self, xi: &CovarianceModel, sigma: &CovarianceModel) -> Result<Array2<f64>> {
        check_dims(self, xi, sigma)?;
        let left = xi.rows_from_eigenbasis(self.frame.view());
        Ok(sigma.rows_from_eigenbasis(left.t()).reversed_axes())
    }

    /// Rebuilds an instance from a standard-basis observation.
    pub fn from_dense(
        a: ArrayView2<f64>,
        u_star: Array1<f64>,
        v_star: Array1<f64>,
        lambda: f64,
        xi: &CovarianceModel,
        sigma: &CovarianceModel,
    ) -> Result<Self> {
        let (n, d) = a.dim();
        if u_star.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: u_star.len() });
        }
        if v_star.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: v_star.len() });
        }
        if xi.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: xi.dim() });
        }
        if sigma.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: sigma.dim() });
        }
        let left = xi.rows_to_eigenbasis(a);
        let frame = sigma.rows_to_eigenbasis(left.t()).reversed_axes();
        Ok(Self {
            n,
            d,
            lambda,
            seed: None,
            prior: Prior::Gaussian,
            u_frame: xi.to_eigenbasis(u_star.view()),
            v_frame: sigma.to_eigenbasis(v_star.view()),
            u_star,
            v_star,
            frame: frame.as_standard_layout().into_owned(),
        })
    }
}

fn check_dims(inst: &ProblemInstance, xi: &CovarianceModel, sigma: &CovarianceModel) -> Result<()> {
    if xi.dim() != inst.n {
        return Err(Error::DimensionMismatch { expected: inst.n, got: xi.dim() });
    }
    if sigma.dim() != inst.d {
        return Err(Error::DimensionMismatch { expected: inst.d, got: sigma.dim() });
    }
    Ok(())
}

/// Draws `u*`, `v*`, and the noise from disjoint streams of `seed` and
/// assembles the observation.
pub fn sample_instance(
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
    lambda: f64,
    prior: Prior,
    seed: u64,
) -> Result<ProblemInstance> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    let (n, d) = (xi.dim(), sigma.dim());
    let u_star = draw_signal(&mut stream_rng(seed, STREAM_U), prior, n);
    let v_star = draw_signal(&mut stream_rng(seed, STREAM_V), prior, d);

    let mut noise_rng = stream_rng(seed, STREAM_NOISE);
    let scale = 1.0 / (n as f64).sqrt();
    let mut frame = Array2::from_shape_simple_fn((n, d), || scale * noise_rng.sample::<f64, _>(StandardNormal));

    let row_scale = xi.eigenvalues().mapv(f64::sqrt);
    let col_scale = sigma.eigenvalues().mapv(f64::sqrt);
    let u_frame = xi.to_eigenbasis(u_star.view());
    let v_frame = sigma.to_eigenbasis(v_star.view());
    let spike = lambda / n as f64;
    for ((i, mut row), &r) in frame.axis_iter_mut(Axis(0)).enumerate().zip(row_scale.iter()) {
        let ui = spike * u_frame[i];
        row.zip_mut_with(&col_scale, |x, &c| *x *= r * c);
        row.scaled_add(ui, &v_frame);
    }
    Ok(ProblemInstance { n, d, lambda, seed: Some(seed), prior, u_star, v_star, u_frame, v_frame, frame })
}

/// Whitened observation `Ξ^{-1/2} A Σ^{-1/2}` in the standard basis.
pub fn whitened_view(inst: &ProblemInstance, xi: &CovarianceModel, sigma: &CovarianceModel) -> Result<Array2<f64>> {
    check_dims(inst, xi, sigma)?;
    let frame = whitened_frame(inst, xi, sigma);
    let left = xi.rows_from_eigenbasis(frame.view());
    Ok(sigma.rows_from_eigenbasis(left.t()).reversed_axes())
}

/// `D^{-1/2} F E^{-1/2}`, the whitened observation in the eigenframe.
pub(crate) fn whitened_frame(inst: &ProblemInstance, xi: &CovarianceModel, sigma: &CovarianceModel) -> Array2<f64> {
    scale_frame(
        inst.frame(),
        xi.eigenvalues().mapv(|x| x.powf(-0.5)).view(),
        sigma.eigenvalues().mapv(|x| x.powf(-0.5)).view(),
    )
}

/// `diag(r) F diag(c)`.
pub(crate) fn scale_frame(frame: ArrayView2<f64>, rows: ArrayView1<f64>, cols: ArrayView1<f64>) -> Array2<f64> {
    let mut out = frame.to_owned();
    for (mut row, &r) in out.axis_iter_mut(Axis(0)).zip(rows.iter()) {
        row.zip_mut_with(&cols, |x, &c| *x *= r * c);
    }
    out
}

/// Contents of an instance dump.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceDump {
    pub lambda: f64,
    pub a: Array2<f64>,
    pub u_star: Array1<f64>,
    pub v_star: Array1<f64>,
}

fn write_f64s<'a>(out: &mut impl Write, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Writes the dump described in the module docs.
pub fn write_dump(
    out: &mut impl Write,
    inst: &ProblemInstance,
    xi: &CovarianceModel,
    sigma: &CovarianceModel,
) -> Result<()> {
    let a = inst.observation(xi, sigma)?;
    out.write_all(&DUMP_MAGIC)?;
    out.write_all(&(inst.n as u64).to_le_bytes())?;
    out.write_all(&(inst.d as u64).to_le_bytes())?;
    out.write_all(&inst.lambda.to_le_bytes())?;
    write_f64s(out, a.iter())?;
    write_f64s(out, inst.u_star.iter())?;
    write_f64s(out, inst.v_star.iter())?;
    Ok(())
}

fn read_u64(input: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64s(input: &mut impl Read, len: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; 8 * len];
    input.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect())
}

/// Reads a dump written by [`write_dump`].
pub fn read_dump(input: &mut impl Read) -> Result<InstanceDump> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if magic != DUMP_MAGIC {
        return Err(Error::InvalidArgument("not an HSPEC1 instance dump".into()));
    }
    let n = usize::try_from(read_u64(input)?).map_err(|_| Error::InvalidArgument("n overflows".into()))?;
    let d = usize::try_from(read_u64(input)?).map_err(|_| Error::InvalidArgument("d overflows".into()))?;
    let lambda = f64::from_bits(read_u64(input)?);
    let a = Array2::from_shape_vec((n, d), read_f64s(input, n * d)?).expect("length n*d");
    let u_star = Array1::from(read_f64s(input, n)?);
    let v_star = Array1::from(read_f64s(input, d)?);
    Ok(InstanceDump { lambda, a, u_star, v_star })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instance() {
        let xi = CovarianceModel::toeplitz(30, 0.5).unwrap();
        let sigma = CovarianceModel::circulant(20, 0.1, 2).unwrap();
        let a = sample_instance(&xi, &sigma, 1.3, Prior::Gaussian, 77).unwrap();
        let b = sample_instance(&xi, &sigma, 1.3, Prior::Gaussian, 77).unwrap();
        assert_eq!(a.frame(), b.frame());
        assert_eq!(a.u_star, b.u_star);
        let c = sample_instance(&xi, &sigma, 1.3, Prior::Gaussian, 78).unwrap();
        assert_ne!(a.frame(), c.frame());
    }

    #[test]
    fn streams_are_disjoint() {
        // u* and v* of equal length must not coincide.
        let cov = CovarianceModel::identity(16).unwrap();
        let inst = sample_instance(&cov, &cov, 1.0, Prior::Gaussian, 5).unwrap();
        assert_ne!(inst.u_star, inst.v_star);
    }

    #[test]
    fn zero_lambda_is_pure_noise() {
        let xi = CovarianceModel::toeplitz(12, 0.3).unwrap();
        let sigma = CovarianceModel::toeplitz(9, 0.6).unwrap();
        let with = sample_instance(&xi, &sigma, 2.0, Prior::Rademacher, 3).unwrap();
        let without = sample_instance(&xi, &sigma, 0.0, Prior::Rademacher, 3).unwrap();
        let a = with.observation(&xi, &sigma).unwrap();
        let noise = without.observation(&xi, &sigma).unwrap();
        let spike = (&a - &noise) * (12.0 / 2.0);
        for i in 0..12 {
            for j in 0..9 {
                assert!((spike[(i, j)] - with.u_star[i] * with.v_star[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rademacher_entries_are_signs() {
        let cov = CovarianceModel::identity(50).unwrap();
        let inst = sample_instance(&cov, &cov, 1.0, Prior::Rademacher, 9).unwrap();
        assert!(inst.u_star.iter().all(|&x| x == 1.0 || x == -1.0));
    }

    #[test]
    fn identity_whitening_is_a_no_op() {
        let cov_n = CovarianceModel::identity(10).unwrap();
        let cov_d = CovarianceModel::identity(7).unwrap();
        let inst = sample_instance(&cov_n, &cov_d, 1.5, Prior::Gaussian, 1).unwrap();
        let a = inst.observation(&cov_n, &cov_d).unwrap();
        assert_eq!(whitened_view(&inst, &cov_n, &cov_d).unwrap(), a);
    }

    #[test]
    fn from_dense_round_trips() {
        let xi = CovarianceModel::toeplitz(8, 0.7).unwrap();
        let sigma = CovarianceModel::circulant(6, 0.2, 1).unwrap();
        let inst = sample_instance(&xi, &sigma, 1.0, Prior::Gaussian, 11).unwrap();
        let a = inst.observation(&xi, &sigma).unwrap();
        let back =
            ProblemInstance::from_dense(a.view(), inst.u_star.clone(), inst.v_star.clone(), 1.0, &xi, &sigma).unwrap();
        let diff = (&back.frame() - &inst.frame()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-12);
    }

    #[test]
    fn dump_round_trips() {
        let xi = CovarianceModel::toeplitz(5, 0.4).unwrap();
        let sigma = CovarianceModel::identity(3).unwrap();
        let inst = sample_instance(&xi, &sigma, 0.75, Prior::Gaussian, 2).unwrap();
        let mut bytes = Vec::new();
        write_dump(&mut bytes, &inst, &xi, &sigma).unwrap();
        assert_eq!(bytes.len(), 32 + 8 * (15 + 5 + 3));
        assert_eq!(&bytes[..6], b"HSPEC1");
        let dump = read_dump(&mut bytes.as_slice()).unwrap();
        assert_eq!(dump.lambda, 0.75);
        assert_eq!(dump.a, inst.observation(&xi, &sigma).unwrap());
        assert_eq!(dump.u_star, inst.u_star);
        assert_eq!(dump.v_star, inst.v_star);
        assert!(read_dump(&mut &b"HSPEC2\0\0"[..]).is_err());
    }
}
