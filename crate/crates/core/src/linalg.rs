//! Small dense linear-algebra helpers shared by the set and fitting code.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::{Error, Result};

/// Right singular basis of an `n x d` matrix, completed to a full `d x d`
/// orthonormal matrix.
///
/// Singular values are nonincreasing; directions beyond the rank carry zero.
/// Each column of `v` has its first nonzero component positive.
#[derive(Debug, Clone)]
pub struct RightBasis {
    pub v: DMatrix<f64>,
    pub sigma: DVector<f64>,
}

pub fn right_basis(x: &DMatrix<f64>) -> RightBasis {
    let d = x.ncols();
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let r = v_t.nrows();
    let mut v = DMatrix::zeros(d, d);
    let mut sigma = DVector::zeros(d);
    for j in 0..r {
        v.set_column(j, &v_t.row(j).transpose());
        sigma[j] = svd.singular_values[j];
    }
    if r < d {
        complete_orthonormal(&mut v, r);
    }
    for j in 0..d {
        canonical_sign(&mut v, j);
    }
    RightBasis { v, sigma }
}

/// Fills columns `filled..` of `v` with an orthonormal completion of the
/// first `filled` (orthonormal) columns, drawing candidates from the
/// standard basis.
pub fn complete_orthonormal(v: &mut DMatrix<f64>, filled: usize) {
    let d = v.nrows();
    let mut next = filled;
    for e in 0..d {
        if next == v.ncols() {
            break;
        }
        let mut cand = DVector::zeros(d);
        cand[e] = 1.0;
        for _ in 0..2 {
            for j in 0..next {
                let col = v.column(j).clone_owned();
                let proj = col.dot(&cand);
                cand -= col * proj;
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            v.set_column(next, &(cand / norm));
            next += 1;
        }
    }
}

/// Flips column `j` so its first component with magnitude above 1e-12 is positive.
pub fn canonical_sign(v: &mut DMatrix<f64>, j: usize) {
    let flip = v
        .column(j)
        .iter()
        .find(|x| x.abs() > 1e-12)
        .is_some_and(|x| *x < 0.0);
    if flip {
        v.column_mut(j).neg_mut();
    }
}

/// Sign-canonical unit copy of `v` (first significant component positive).
pub fn canonical_direction(v: &DVector<f64>) -> Option<DVector<f64>> {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    let mut u = v / norm;
    if u.iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0) {
        u.neg_mut();
    }
    Some(u)
}

/// Vector orthogonal to the `n - 1` rows of `rows` (an `(n-1) x n` matrix),
/// built from signed maximal minors. Its norm is zero when the rows are
/// linearly dependent.
pub fn generalized_cross(rows: &DMatrix<f64>) -> DVector<f64> {
    let n = rows.ncols();
    debug_assert_eq!(rows.nrows() + 1, n);
    if n == 1 {
        return DVector::from_element(1, 1.0);
    }
    if n == 2 {
        return DVector::from_vec(vec![rows[(0, 1)], -rows[(0, 0)]]);
    }
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let minor = rows.clone().remove_column(i);
        let det = minor.determinant();
        out[i] = if i % 2 == 0 { det } else { -det };
    }
    out
}

/// Numerical rank with a tolerance relative to the largest singular value.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * max).count()
}

/// Inverse factorisation of a symmetric positive definite matrix, refused
/// when the condition number reaches `max_condition`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    pub condition: f64,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>, max_condition: f64, hint: &'static str) -> Result<Self> {
        let eig = SymmetricEigen::new(m.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min <= 0.0 { f64::INFINITY } else { max / min };
        if !(condition < max_condition) {
            return Err(Error::SingularCovariance { condition, hint });
        }
        let chol = Cholesky::new(m.clone()).ok_or(Error::SingularCovariance { condition, hint })?;
        Ok(Self { chol, condition })
    }

    /// `sqrt(x^T M^-1 x)`.
    pub fn mahalanobis(&self, x: &DVector<f64>) -> f64 {
        let l = self.chol.l_dirty();
        let z = l
            .solve_lower_triangular(x)
            .expect("cholesky factor is nonsingular");
        z.norm()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Sample covariance (denominator `n - 1`) of the rows of `x`.
pub fn covariance(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).mean());
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let denom = (n.max(2) - 1) as f64;
    let cov = centered.transpose() * &centered / denom;
    (mean, cov)
}
