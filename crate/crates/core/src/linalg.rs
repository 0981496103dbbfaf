//! Thin LAPACK wrappers and dense vector helpers.
//!
//! Eigendecompositions go through the system LAPACK (OpenBLAS build). All
//! routines return eigenvalues in ascending order with eigenvectors stored as
//! the columns of a row-major `Array2`.

use std::os::raw::c_char;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ShapeBuilder};

// Pulls in the OpenBLAS link directives for the raw LAPACK symbols below.
use openblas_src as _;

use crate::error::{Error, Result};

fn lapack_dim(n: usize) -> Result<i32> {
    i32::try_from(n).map_err(|_| Error::InvalidArgument(format!("dimension {n} too large for LAPACK")))
}

/// Reinterprets a column-major buffer of `n * n` values as a row-major matrix.
fn from_column_major(n: usize, data: Vec<f64>) -> Array2<f64> {
    let f_order = Array2::from_shape_vec((n, n).f(), data).expect("buffer length is n * n");
    f_order.as_standard_layout().into_owned()
}

/// Full eigendecomposition of a dense symmetric matrix (divide and conquer).
pub fn symmetric_eigen(matrix: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (rows, cols) = matrix.dim();
    if rows != cols {
        return Err(Error::DimensionMismatch { expected: rows, got: cols });
    }
    let n = lapack_dim(rows)?;
    // Symmetric input: the row-major buffer is also a valid column-major one.
    let mut a: Vec<f64> = matrix.iter().copied().collect();
    let mut w = vec![0.0; rows];
    let mut info = 0;
    let jobz = b'V' as c_char;
    let uplo = b'L' as c_char;

    let mut work_query = [0.0f64];
    let mut iwork_query = [0i32];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &n,
            a.as_mut_ptr(),
            &n,
            w.as_mut_ptr(),
            work_query.as_mut_ptr(),
            &-1,
            iwork_query.as_mut_ptr(),
            &-1,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "dsyevd", info });
    }
    let lwork = work_query[0] as i32;
    let liwork = iwork_query[0];
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dsyevd_(
            &jobz,
            &uplo,
            &n,
            a.as_mut_ptr(),
            &n,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "dsyevd", info });
    }
    Ok((Array1::from(w), from_column_major(rows, a)))
}

/// Eigendecomposition of a symmetric tridiagonal matrix given its diagonal and
/// off-diagonal.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Array1<f64>, Array2<f64>)> {
    let size = diag.len();
    if off.len() + 1 != size.max(1) {
        return Err(Error::DimensionMismatch { expected: size.saturating_sub(1), got: off.len() });
    }
    let n = lapack_dim(size)?;
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; size * size];
    let mut info = 0;
    let jobz = b'V' as c_char;

    let mut work_query = [0.0f64];
    let mut iwork_query = [0i32];
    unsafe {
        lapack_sys::dstevd_(
            &jobz,
            &n,
            d.as_mut_ptr(),
            e.as_mut_ptr(),
            z.as_mut_ptr(),
            &n,
            work_query.as_mut_ptr(),
            &-1,
            iwork_query.as_mut_ptr(),
            &-1,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "dstevd", info });
    }
    let lwork = work_query[0] as i32;
    let liwork = iwork_query[0];
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    unsafe {
        lapack_sys::dstevd_(
            &jobz,
            &n,
            d.as_mut_ptr(),
            e.as_mut_ptr(),
            z.as_mut_ptr(),
            &n,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "dstevd", info });
    }
    Ok((Array1::from(d), from_column_major(size, z)))
}

/// Eigenvalues (ascending) of a symmetric tridiagonal matrix.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Array1<f64>> {
    let size = diag.len();
    if off.len() + 1 != size.max(1) {
        return Err(Error::DimensionMismatch { expected: size.saturating_sub(1), got: off.len() });
    }
    let n = lapack_dim(size)?;
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut info = 0;
    unsafe {
        lapack_sys::dsterf_(&n, d.as_mut_ptr(), e.as_mut_ptr(), &mut info);
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "dsterf", info });
    }
    Ok(Array1::from(d))
}

pub(crate) fn norm(x: ArrayView1<f64>) -> f64 {
    x.dot(&x).sqrt()
}

/// `V diag(w) Vᵀ` for an orthonormal `V`.
pub(crate) fn reconstruct(vectors: ArrayView2<f64>, weights: ArrayView1<f64>) -> Array2<f64> {
    let scaled = &vectors * &weights.broadcast(vectors.dim()).expect("weights match columns");
    scaled.dot(&vectors.t())
}
