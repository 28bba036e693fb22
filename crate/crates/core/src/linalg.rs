//! Dense linear-algebra helpers shared by the dynamics and control code.
//!
//! Rank decisions use a relative singular-value cutoff of `σ_max · 1e-8`,
//! so pseudoinverses and projectors behave identically across platforms.
//!
//! Singular value and symmetric eigenvalue decompositions go through `faer`:
//! nalgebra's bidiagonal SVD returns factors off by up to 1e-3 for some
//! well-conditioned 12 × 14 contact maps.

use faer::{Mat, MatRef, Side};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_CUTOFF: f64 = 1e-8;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn cutoff(singular_values: &DVector<f64>) -> f64 {
    singular_values.max() * RANK_CUTOFF
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD `(U, σ, V)`; `None` when the input is not finite.
fn thin_svd(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    if !a.iter().all(|x| x.is_finite()) {
        return None;
    }
    let svd = to_faer(a).thin_svd().ok()?;
    let s = svd.S().column_vector();
    Some((
        from_faer(svd.U()),
        DVector::from_fn(s.nrows(), |k, _| s[k]),
        from_faer(svd.V()),
    ))
}

/// Singular values in nonincreasing order; NaN when the input is not finite.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    let k = a.nrows().min(a.ncols());
    if !a.iter().all(|x| x.is_finite()) {
        return DVector::from_element(k, f64::NAN);
    }
    match to_faer(a).singular_values() {
        Ok(sv) => DVector::from_vec(sv),
        Err(_) => DVector::from_element(k, f64::NAN),
    }
}

/// Moore-Penrose pseudoinverse via SVD with relative cutoff.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    pinv_and_rank(a).0
}

/// Pseudoinverse and numerical rank from a single SVD.
pub fn pinv_and_rank(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return (DMatrix::zeros(c, r), 0);
    }
    let Some((u, sv, v)) = thin_svd(a) else {
        return (DMatrix::from_element(c, r, f64::NAN), 0);
    };
    let tol = cutoff(&sv);
    let mut out = DMatrix::zeros(c, r);
    let mut rank = 0;
    for (k, &sigma) in sv.iter().enumerate() {
        if sigma > tol && sigma > 0.0 {
            out += v.column(k) * u.column(k).transpose() / sigma;
            rank += 1;
        }
    }
    (out, rank)
}

/// Numerical rank with the shared relative cutoff.
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = singular_values(a);
    let tol = cutoff(&sv);
    sv.iter().filter(|&&s| s > tol && s > 0.0).count()
}

/// Eigenvalues (ascending) and eigenvectors of the symmetric part of `m`.
fn symmetric_eigen(m: &DMatrix<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let sym = symmetrize(m);
    if !sym.iter().all(|x| x.is_finite()) {
        return None;
    }
    let eig = to_faer(&sym).self_adjoint_eigen(Side::Lower).ok()?;
    let s = eig.S().column_vector();
    Some((DVector::from_fn(s.nrows(), |k, _| s[k]), from_faer(eig.U())))
}

/// Projector onto the null space of `a`: `N = I − A†A`.
pub fn nullspace_projector(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    DMatrix::identity(n, n) - pinv(a) * a
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn nullspace_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let Some((values, vectors)) = symmetric_eigen(&nullspace_projector(a)) else {
        return DMatrix::from_element(n, 0, f64::NAN);
    };
    let cols: Vec<usize> = (0..n).filter(|&k| values[k] > 0.5).collect();
    let mut basis = DMatrix::zeros(n, cols.len());
    for (j, &k) in cols.iter().enumerate() {
        let mut v = vectors.column(k).into_owned();
        // Fix the sign so the largest-magnitude component is positive.
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v = -v;
        }
        basis.set_column(j, &v);
    }
    basis
}

pub fn symmetry_residual(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn eigenvalues_sym(m: &DMatrix<f64>) -> DVector<f64> {
    symmetric_eigen(m).map_or_else(|| DVector::from_element(m.nrows(), f64::NAN), |(values, _)| values)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    eigenvalues_sym(m).min()
}

/// Symmetric (to `1e-9` relative) with strictly positive eigenvalues.
pub fn is_spd(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    symmetry_residual(m) <= 1e-9 * scale && min_eigenvalue(m) > 0.0
}

/// Ratio of extreme singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        sv.max() / min
    }
}

pub fn cholesky(m: &DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite(what))
}

/// Inverse of a square matrix, failing on (numerical) singularity:
/// 1-norm condition number above `1e13` or a non-finite result.
pub fn inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let inv = m.clone().try_inverse().ok_or(Error::Singular(what))?;
    let norm1 = |a: &DMatrix<f64>| a.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max);
    let cond = norm1(m) * norm1(&inv);
    if !(cond.is_finite() && cond < 1e13) {
        return Err(Error::Singular(what));
    }
    Ok(inv)
}

/// Block-diagonal assembly of two square blocks.
pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(na + nb, na + nb);
    out.view_mut((0, 0), (na, na)).copy_from(a);
    out.view_mut((na, na), (nb, nb)).copy_from(b);
    out
}

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
