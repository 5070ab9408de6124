//! Small dense linear algebra on top of `faer`, plus deterministic helpers
//! for families of grid vectors.
//!
//! Every reduction over grid points is a plain sequential sum; parallelism
//! is only ever across independent entries, so results never depend on the
//! size of the thread pool.

use faer::{Mat, Side};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type CMat = Mat<Complex64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// `sum conj(a) b`, summed left to right.
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = ZERO;
    for (x, y) in a.iter().zip(b) {
        acc += x.conj() * y;
    }
    acc
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum()
}

/// Weighted Gram matrix `G_ij = w * <v_i, v_j>`.
pub fn gram_matrix(vectors: &[&[Complex64]], weight: f64) -> CMat {
    let r = vectors.len();
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|i| (i..r).map(move |j| (i, j))).collect();
    let values: Vec<Complex64> = pairs
        .par_iter()
        .map(|&(i, j)| dot(vectors[i], vectors[j]) * weight)
        .collect();
    let mut g = CMat::zeros(r, r);
    for (&(i, j), v) in pairs.iter().zip(values) {
        g[(i, j)] = v;
        g[(j, i)] = v.conj();
    }
    g
}

/// Weighted cross-overlap `S_ij = w * <a_i, b_j>`.
pub fn cross_overlap(a: &[&[Complex64]], b: &[&[Complex64]], weight: f64) -> CMat {
    let (ra, rb) = (a.len(), b.len());
    let values: Vec<Complex64> = (0..ra * rb)
        .into_par_iter()
        .map(|idx| dot(a[idx / rb], b[idx % rb]) * weight)
        .collect();
    CMat::from_fn(ra, rb, |i, j| values[i * rb + j])
}

/// `max |G - I|` over all entries.
pub fn identity_deviation(g: &CMat) -> f64 {
    let mut dev = 0.0f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g[(i, j)] - target).norm());
        }
    }
    dev
}

/// `max |A - A^H|`.
pub fn hermitian_deviation(a: &CMat) -> f64 {
    let mut dev = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows().saturating_sub(1)) {
            dev = dev.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Lower Cholesky factor of a Hermitian positive definite matrix.
pub fn cholesky_lower(g: &CMat) -> Result<CMat> {
    let llt = g
        .llt(Side::Lower)
        .map_err(|e| Error::Degenerate(format!("Gram matrix is not positive definite: {e:?}")))?;
    Ok(llt.L().to_owned())
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_triangular_inverse(l: &CMat) -> Result<CMat> {
    let r = l.nrows();
    let mut inv = CMat::zeros(r, r);
    for col in 0..r {
        for i in col..r {
            let mut acc = if i == col { Complex64::new(1.0, 0.0) } else { ZERO };
            for k in col..i {
                acc -= l[(i, k)] * inv[(k, col)];
            }
            let d = l[(i, i)];
            if d.norm() == 0.0 {
                return Err(Error::Degenerate("singular triangular factor".into()));
            }
            inv[(i, col)] = acc / d;
        }
    }
    Ok(inv)
}

/// Coefficients `T` (upper triangular) such that `v_j' = sum_i v_i T_ij` is the
/// ordered Gram-Schmidt orthonormalization of the family with Gram matrix `g`.
pub fn orthonormalizing_coefficients(g: &CMat) -> Result<CMat> {
    let l = cholesky_lower(g)?;
    let linv = lower_triangular_inverse(&l)?;
    Ok(linv.adjoint().to_owned())
}

/// `out_j = sum_i v_i c_ij`, with the sum over `i` in order for every point.
pub fn combine(vectors: &[&[Complex64]], coeffs: &CMat) -> Vec<Vec<Complex64>> {
    let len = vectors.first().map_or(0, |v| v.len());
    let r = vectors.len();
    (0..coeffs.ncols())
        .into_par_iter()
        .map(|j| {
            let mut out = vec![ZERO; len];
            for i in 0..r {
                let c = coeffs[(i, j)];
                if c == ZERO {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(vectors[i]) {
                    *o += c * v;
                }
            }
            out
        })
        .collect()
}

/// Ordered orthonormal basis of `span(vectors)` under the weighted inner
/// product, via classical Gram-Schmidt with one re-orthogonalization pass.
/// A vector whose relative residual after projection falls below `drop_tol`
/// is treated as linearly dependent and skipped.
pub fn orthonormal_basis(vectors: &[&[Complex64]], weight: f64, drop_tol: f64) -> Vec<Vec<Complex64>> {
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    for v in vectors {
        let original = (norm_sqr(v) * weight).sqrt();
        if original == 0.0 {
            continue;
        }
        let mut w = v.to_vec();
        for _pass in 0..2 {
            let h: Vec<Complex64> = basis.par_iter().map(|q| dot(q, &w) * weight).collect();
            for (q, c) in basis.iter().zip(&h) {
                for (x, y) in w.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let residual = (norm_sqr(&w) * weight).sqrt();
        if residual <= drop_tol * original.max(1.0) {
            continue;
        }
        let s = 1.0 / residual;
        w.iter_mut().for_each(|x| *x *= s);
        basis.push(w);
    }
    basis
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.self_adjoint_eigenvalues(Side::Lower).map_err(|e| {
        Error::Numerical(format!(
            "Hermitian eigensolver did not converge on a {}x{} matrix (asymmetry {:e}): {e:?}",
            a.nrows(),
            a.ncols(),
            hermitian_deviation(a)
        ))
    })
}

/// Eigen-decomposition `A = U diag(s) U^H`, eigenvalues ascending.
pub fn hermitian_eigen(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| {
        Error::Numerical(format!(
            "Hermitian eigensolver did not converge on a {}x{} matrix (asymmetry {:e}): {e:?}",
            a.nrows(),
            a.ncols(),
            hermitian_deviation(a)
        ))
    })?;
    let s = evd.S().column_vector();
    let values = (0..a.nrows()).map(|i| s[i].re).collect();
    Ok((values, evd.U().to_owned()))
}

/// `sum |lambda_i|` of a Hermitian matrix.
pub fn trace_norm_hermitian(a: &CMat) -> Result<f64> {
    Ok(hermitian_eigenvalues(a)?.iter().map(|v| v.abs()).sum())
}

/// `exp(-i t A)` for Hermitian `A`.
pub fn hermitian_unitary(a: &CMat, t: f64) -> Result<CMat> {
    let (s, u) = hermitian_eigen(a)?;
    let r = a.nrows();
    let phases: Vec<Complex64> = s.iter().map(|v| Complex64::from_polar(1.0, -t * v)).collect();
    let scaled = CMat::from_fn(r, r, |i, j| u[(i, j)] * phases[j]);
    Ok(&scaled * u.adjoint())
}
