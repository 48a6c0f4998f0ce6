//! Dense Cholesky with jitter escalation.
//!
//! Covariance matrices are assembled as `nalgebra` matrices; the
//! factorization and triangular solves run on `faer`, which is roughly an
//! order of magnitude faster than `nalgebra`'s unblocked Cholesky at the
//! sizes the GP models use.

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Accum, Mat, Par, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Number of times the diagonal jitter is multiplied by ten before giving up.
pub const JITTER_ESCALATIONS: usize = 3;

#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factors `a + jitter·I`, escalating the jitter up to
    /// [`JITTER_ESCALATIONS`] times (×10 each) on failure.
    pub fn factor(a: &DMatrix<f64>, jitter: f64) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim(format!("cholesky of {}x{} matrix", a.nrows(), a.ncols())));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Conditioning("matrix has non-finite entries".into()));
        }
        let n = a.nrows();
        let mut eps = jitter.max(0.0);
        for attempt in 0..=JITTER_ESCALATIONS {
            let m = Mat::<f64>::from_fn(n, n, |i, j| if i == j { a[(i, j)] + eps } else { a[(i, j)] });
            if let Ok(llt) = m.llt(Side::Lower) {
                let l = llt.L().to_owned();
                return Ok(Cholesky { l, jitter: eps });
            }
            if attempt < JITTER_ESCALATIONS {
                eps = if eps > 0.0 { eps * 10.0 } else { 1e-10 };
            }
        }
        Err(Error::Conditioning(format!(
            "cholesky failed for {n}x{n} matrix with jitter up to {eps:e}"
        )))
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Jitter that was actually added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    pub fn l_entry(&self, i: usize, j: usize) -> f64 {
        self.l[(i, j)]
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        solve_lower_triangular_in_place(self.l.as_ref(), x.as_mut(), Par::Seq);
        DVector::from_fn(b.len(), |i, _| x[(i, 0)])
    }

    /// Solves `L X = B` column by column.
    pub fn solve_lower_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = to_faer(b);
        solve_lower_triangular_in_place(self.l.as_ref(), x.as_mut(), Par::Seq);
        from_faer(&x)
    }

    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        solve_lower_triangular_in_place(self.l.as_ref(), x.as_mut(), Par::Seq);
        solve_upper_triangular_in_place(self.l.transpose(), x.as_mut(), Par::Seq);
        DVector::from_fn(b.len(), |i, _| x[(i, 0)])
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = to_faer(b);
        solve_lower_triangular_in_place(self.l.as_ref(), x.as_mut(), Par::Seq);
        solve_upper_triangular_in_place(self.l.transpose(), x.as_mut(), Par::Seq);
        from_faer(&x)
    }

    /// Returns `L` as an `nalgebra` matrix.
    pub fn l(&self) -> DMatrix<f64> {
        from_faer(&self.l)
    }
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: &Mat<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `aᵀ · b` using faer's blocked kernel on one thread.
pub fn transpose_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::dim(format!(
            "cannot form aᵀb with {} and {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let (fa, fb) = (to_faer(a), to_faer(b));
    let mut out = Mat::<f64>::zeros(a.ncols(), b.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, fa.transpose(), fb.as_ref(), 1.0, Par::Seq);
    Ok(from_faer(&out))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigenvalues().min()
}
