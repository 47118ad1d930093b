//! Linear models on dyadic data with dyadic cluster-robust inference.
//!
//! Dyadic datasets (trade flows, alliances, conflict, migration) violate
//! the independence assumptions behind both classical and one-way
//! cluster-robust standard errors: any two observations that share a
//! member can have correlated errors. This crate fits ordinary least
//! squares and estimates coefficient variances under that dependence
//! structure, alongside the naive and repeated-dyad-clustered estimators
//! it is meant to replace, so the three can be compared on equal footing.
//!
//! The pieces:
//!
//! - [`data`]: ingestion and canonicalization of undirected dyad-period
//!   observations, member indexing, and design-matrix construction
//!   (intercept, member fixed-effect dummies).
//! - [`ols`]: QR-based least squares exposing the bread matrix and
//!   per-observation scores every estimator consumes.
//! - [`vcov`]: the sandwich estimators (HC0, one-way cluster, repeated
//!   dyad, dyadic cluster-robust), a brute-force dependency-mask oracle,
//!   eigenvalue PSD repair, and the finite-sample correction.
//! - [`inference`]: standard errors, test statistics, p-values, and
//!   confidence intervals under normal or t references.
//! - [`reanalysis`]: standard-error ratios, significance transitions, and
//!   inverse study-frequency weighted aggregation across studies.
//! - [`simulate`]: a member-additive Monte Carlo DGP and coverage
//!   experiments, fully deterministic given a seed.
//!
//! ```
//! use dyadrobust::data::{DyadDataset, DyadObservation, MemberId};
//! use dyadrobust::data::{build_design, DesignSpec};
//! use dyadrobust::ols::fit_ols_named;
//! use dyadrobust::vcov::vcov_dcr;
//!
//! let obs = |a: &str, b: &str, y: f64, x: f64| {
//!     DyadObservation::new(
//!         MemberId::new(a).unwrap(),
//!         MemberId::new(b).unwrap(),
//!         0,
//!         y,
//!         vec![x],
//!     )
//!     .unwrap()
//! };
//! let data = DyadDataset::new(vec![
//!     obs("fr", "uk", 1.0, 0.5),
//!     obs("fr", "us", 0.3, -1.0),
//!     obs("uk", "us", 1.4, 2.0),
//!     obs("de", "fr", 0.2, 0.0),
//! ])
//! .unwrap();
//! let (x, names) = build_design(&data, &DesignSpec::default()).unwrap();
//! let y = nalgebra::DVector::from_iterator(
//!     data.n(),
//!     data.observations().iter().map(|o| o.outcome),
//! );
//! let fit = fit_ols_named(&x, &y, names).unwrap();
//! let v = vcov_dcr(&fit, &data).unwrap();
//! assert_eq!(v.matrix.nrows(), 2);
//! ```

pub mod data;
pub mod error;
pub mod inference;
pub mod ols;
pub mod reanalysis;
pub mod simulate;
pub mod vcov;

pub use error::{Error, Result};
