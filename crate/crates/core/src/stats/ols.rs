//! Ordinary least squares with rank-deficiency handling.
//!
//! Columns are screened in order with a greedy Gram-matrix Cholesky: a column
//! that is (numerically) a linear combination of the columns kept before it
//! is dropped. Earlier columns therefore take precedence, so an intercept or
//! treatment indicator survives and a redundant later dummy is removed. The
//! kept columns are then solved by Householder QR.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for declaring a column linearly dependent.
const ALIAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Coefficients of the kept columns, in original column order.
    pub coef: Vec<f64>,
    /// Original indices of the kept columns.
    pub kept: Vec<usize>,
    /// Original indices of the dropped (aliased) columns.
    pub dropped: Vec<usize>,
    /// Unscaled coefficient covariance (XᵀX)⁻¹ over the kept columns.
    pub cov_unscaled: DMatrix<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    /// Residual degrees of freedom: observations minus kept columns.
    pub df: usize,
}

impl OlsFit {
    /// Residual variance estimate.
    pub fn sigma2(&self) -> f64 {
        self.rss / self.df as f64
    }

    /// Coefficient and standard error for an original column index, if kept.
    pub fn coef_se(&self, original_col: usize) -> Option<(f64, f64)> {
        let pos = self.kept.iter().position(|&c| c == original_col)?;
        let se = (self.sigma2() * self.cov_unscaled[(pos, pos)]).sqrt();
        Some((self.coef[pos], se))
    }
}

/// Fits `y = X b + e` by least squares, dropping aliased columns.
///
/// Errors if no column survives screening or if there are no residual
/// degrees of freedom left.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (m, p) = (x.nrows(), x.ncols());
    if m == 0 || p == 0 {
        return Err(Error::InsufficientData("empty design matrix".into()));
    }
    if y.len() != m {
        return Err(Error::InvalidArgument(format!(
            "response length {} does not match {} design rows",
            y.len(),
            m
        )));
    }

    let gram = x.transpose() * x;
    let (kept, dropped) = screen_columns(&gram);
    if kept.is_empty() {
        return Err(Error::InsufficientData("all design columns are aliased".into()));
    }
    if m <= kept.len() {
        return Err(Error::InsufficientData(format!(
            "{} observations cannot support {} free columns",
            m,
            kept.len()
        )));
    }

    let xk = x.select_columns(kept.iter());
    let qr = xk.clone().qr();
    let r = qr.r();
    let rdiag_max = (0..kept.len()).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rdiag_min = (0..kept.len()).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if rdiag_min <= 1e-12 * rdiag_max {
        return Err(Error::Numerical("ill-conditioned design after screening".into()));
    }

    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let rinv = r
        .solve_upper_triangular(&DMatrix::identity(kept.len(), kept.len()))
        .ok_or_else(|| Error::Numerical("triangular inverse failed".into()))?;
    let cov_unscaled = &rinv * rinv.transpose();
    let resid = y - &xk * &coef;
    let rss = resid.dot(&resid);

    Ok(OlsFit {
        coef: coef.iter().copied().collect(),
        df: m - kept.len(),
        kept,
        dropped,
        cov_unscaled,
        rss,
    })
}

/// Greedy in-order Cholesky over the Gram matrix; returns (kept, dropped).
fn screen_columns(gram: &DMatrix<f64>) -> (Vec<usize>, Vec<usize>) {
    let p = gram.nrows();
    let mut kept: Vec<usize> = Vec::with_capacity(p);
    let mut dropped = Vec::new();
    // Rows of the partial Cholesky factor over kept columns.
    let mut lrows: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let mut lj = Vec::with_capacity(kept.len());
        for (i, &kc) in kept.iter().enumerate() {
            let mut v = gram[(j, kc)];
            for t in 0..i {
                v -= lj[t] * lrows[i][t];
            }
            lj.push(v / lrows[i][i]);
        }
        let mut d = gram[(j, j)] - lj.iter().map(|v| v * v).sum::<f64>();
        let scale = gram[(j, j)].abs().max(f64::MIN_POSITIVE);
        if d <= ALIAS_TOL * scale {
            dropped.push(j);
        } else {
            d = d.sqrt();
            lj.push(d);
            lrows.push(lj);
            kept.push(j);
        }
    }
    (kept, dropped)
}
