//! Symmetric-PSD pseudoinverse, weighted quadratic forms, and the β→0 limit
//! of ⟨x,(A+βI)⁻¹x⟩: finite and equal to ‖x‖²_{A⊕} when AA⊕x = x, divergent
//! otherwise.
//!
//! All matrices here are small and dense; everything goes through one
//! symmetric eigendecomposition.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Default relative eigenvalue cutoff for rank decisions.
pub const DEFAULT_RCOND: f64 = 1e-10;

/// Relative range-residual threshold below which the limit is declared finite.
pub const RANGE_REL_TOL: f64 = 1e-7;

#[derive(Clone, Debug)]
pub struct PinvResult {
    pub pinv: DMatrix<f64>,
    pub rank: usize,
    /// Eigenvalues of the input, descending.
    pub eigenvalues: Vec<f64>,
    /// Absolute eigenvalue threshold that was used (rcond · λ_max).
    pub cutoff: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitKind {
    Finite,
    Divergent,
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitClassification {
    pub kind: LimitKind,
    /// ‖x‖²_{A⊕}, present iff the limit is finite.
    pub value: Option<f64>,
    /// ‖A·A⊕·x − x‖.
    pub range_residual: f64,
}

fn check_square(a: &DMatrix<f64>) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidArgument(format!("matrix must be square, got {}x{}", a.nrows(), a.ncols())));
    }
    Ok(a.nrows())
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let skew = (a - a.transpose()).norm();
    if skew > 1e-10 * scale {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric within tolerance (relative skew {:.3e})",
            skew / scale
        )));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// descending and eigenvector columns reordered to match.
fn sym_eigen(a: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).expect("non-finite eigenvalue"));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("eigendecomposition produced non-finite eigenvalues".into()));
    }
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    Ok((values, vectors))
}

/// Moore–Penrose pseudoinverse of a symmetric PSD matrix: eigenvalues below
/// rcond·λ_max are treated as zero, the rest are inverted in the eigenbasis.
pub fn pseudoinverse(a: &DMatrix<f64>, rcond: f64) -> Result<PinvResult> {
    check_square(a)?;
    check_symmetric(a)?;
    if !(0.0..1.0).contains(&rcond) || rcond <= 0.0 {
        return Err(Error::InvalidArgument("rcond must lie in (0,1)".into()));
    }
    let (eigenvalues, vectors) = sym_eigen(a)?;
    let lambda_max = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
    let cutoff = rcond * lambda_max;
    let n = a.nrows();
    let mut pinv = DMatrix::zeros(n, n);
    let mut rank = 0;
    for (i, &lam) in eigenvalues.iter().enumerate() {
        if lam > cutoff && lam > 0.0 {
            rank += 1;
            let v = vectors.column(i);
            // pinv += v v^T / λ
            pinv.syger(1.0 / lam, &v, &v, 1.0);
        }
    }
    // syger fills the lower triangle; mirror it
    pinv.fill_upper_triangle_with_lower_triangle();
    Ok(PinvResult { pinv, rank, eigenvalues, cutoff })
}

/// ⟨x, Gx⟩ for a symmetric PSD weight G, clamped at 0 when roundoff produces
/// a tiny negative value.
pub fn weighted_norm_sq(x: &DVector<f64>, g: &DMatrix<f64>) -> Result<f64> {
    let n = check_square(g)?;
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let q = x.dot(&(g * x));
    if q < 0.0 && q.abs() < 1e-12 * g.norm() * x.norm_squared() {
        return Ok(0.0);
    }
    Ok(q)
}

/// ⟨x, (A+βI)⁻¹x⟩ via the eigendecomposition of A; eigenvalues are clamped
/// at zero so the result is exactly nonincreasing in β.
pub fn regularized_quadratic(a: &DMatrix<f64>, x: &DVector<f64>, beta: f64) -> Result<f64> {
    let n = check_square(a)?;
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if beta <= 0.0 {
        return Err(Error::InvalidArgument("beta must be positive".into()));
    }
    check_symmetric(a)?;
    let (eigenvalues, vectors) = sym_eigen(a)?;
    let y = vectors.transpose() * x;
    let mut q = 0.0;
    for (i, &lam) in eigenvalues.iter().enumerate() {
        q += y[i] * y[i] / (lam.max(0.0) + beta);
    }
    Ok(q)
}

/// Classify the β→0 limit of the regularized quadratic form: finite with
/// value ‖x‖²_{A⊕} when x lies in range(A), divergent otherwise.
pub fn pinv_limit_classify(a: &DMatrix<f64>, x: &DVector<f64>, rcond: f64) -> Result<LimitClassification> {
    let n = check_square(a)?;
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let pr = pseudoinverse(a, rcond)?;
    let range_residual = (a * (&pr.pinv * x) - x).norm();
    if range_residual <= RANGE_REL_TOL * x.norm() {
        let value = weighted_norm_sq(x, &pr.pinv)?;
        Ok(LimitClassification { kind: LimitKind::Finite, value: Some(value), range_residual })
    } else {
        Ok(LimitClassification { kind: LimitKind::Divergent, value: None, range_residual })
    }
}
