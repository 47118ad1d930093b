//! Ordinary least squares, factored so every sandwich estimator can reuse
//! the same pieces.
//!
//! A fit solves `min ||y - X b||^2` through a Householder QR factorization
//! and keeps three artifacts:
//!
//! ```text
//! coefficients  b = R^-1 Q' y
//! residuals     u = y - X b
//! bread         (X'X)^-1 = R^-1 R^-T
//! ```
//!
//! The bread never comes from an explicit inversion of `X'X`; it is
//! assembled from the triangular factor, which keeps it accurate on
//! ill-scaled designs. Rank problems are a hard error: a reciprocal
//! condition number of `R` below [`RCOND_MIN`] aborts the fit rather than
//! silently returning one of infinitely many solutions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition number below which a design is treated as rank
/// deficient.
pub const RCOND_MIN: f64 = 1e-12;

/// Coefficients, residuals, and bread for one least-squares fit. The fit
/// owns a copy of its design matrix so downstream estimators stay aligned
/// with the data that produced it.
#[derive(Debug, Clone)]
pub struct FitResult {
    coefficients: DVector<f64>,
    residuals: DVector<f64>,
    bread: DMatrix<f64>,
    design: DMatrix<f64>,
    column_names: Vec<String>,
    rcond: f64,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    pub fn residuals(&self) -> &DVector<f64> {
        &self.residuals
    }

    /// `(X'X)^-1`, symmetric by construction.
    pub fn bread(&self) -> &DMatrix<f64> {
        &self.bread
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Reciprocal condition number of the triangular factor.
    pub fn rcond(&self) -> f64 {
        self.rcond
    }
}

/// Per-observation score rows `s_k = x_k * u_k`, the building block of
/// every meat matrix. With an intercept in the model the columns sum to
/// zero up to solver tolerance.
#[derive(Debug, Clone)]
pub struct ScoreSet {
    scores: DMatrix<f64>,
}

impl ScoreSet {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.scores
    }
}

/// Fits by QR with auto-generated column names `c0..c{p-1}`.
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<FitResult> {
    let names = (0..x.ncols()).map(|j| format!("c{j}")).collect();
    fit_ols_named(x, y, names)
}

/// Fits by QR with caller-supplied column names.
pub fn fit_ols_named(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    column_names: Vec<String>,
) -> Result<FitResult> {
    let (n, p) = x.shape();
    if column_names.len() != p {
        return Err(Error::Config(format!(
            "{} column names for {} design columns",
            column_names.len(),
            p
        )));
    }
    if y.len() != n {
        return Err(Error::Config(format!(
            "outcome length {} does not match {} design rows",
            y.len(),
            n
        )));
    }
    if p == 0 {
        return Err(Error::Config("design matrix has no columns".to_string()));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("non-finite value in design or outcome".to_string()));
    }
    if n < p {
        return Err(Error::RankDeficient { rcond: 0.0 });
    }

    let qr = x.clone().qr();
    let r = qr.r();

    // Conditioning of X equals conditioning of R; the p x p SVD is cheap.
    let singular = r.clone().svd(false, false).singular_values;
    let smax = singular.iter().cloned().fold(0.0f64, f64::max);
    let smin = singular.iter().cloned().fold(f64::INFINITY, f64::min);
    let rcond = smin / smax;
    // NaN rcond (all-zero design) must land in the error branch too.
    if rcond.is_nan() || rcond < RCOND_MIN {
        return Err(Error::RankDeficient { rcond });
    }

    let qty = qr.q().tr_mul(y);
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { rcond })?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::<f64>::identity(p, p))
        .ok_or(Error::RankDeficient { rcond })?;
    let kk = &r_inv * r_inv.transpose();
    let bread = (&kk + kk.transpose()) * 0.5;
    let residuals = y - x * &coefficients;

    Ok(FitResult {
        coefficients,
        residuals,
        bread,
        design: x.clone(),
        column_names,
        rcond,
    })
}

/// Scales each design row by its residual.
pub fn scores(fit: &FitResult) -> ScoreSet {
    let mut scores = fit.design.clone();
    for k in 0..fit.n() {
        let u = fit.residuals[k];
        scores.row_mut(k).scale_mut(u);
    }
    ScoreSet { scores }
}
