//! Monte Carlo machinery: a member-additive dyadic data generating process
//! and coverage experiments comparing naive, repeated-dyad, and dyadic
//! cluster-robust inference.
//!
//! The DGP for dyad (i, j) in period t is
//!
//! ```text
//! x_ijt = kappa * alpha * (R_i + R_j) + nu_ijt
//! y_ijt = beta * x_ijt + alpha * (X_i + X_j) + u_ijt
//! ```
//!
//! with member effects `X_m, R_m ~ N(0, member_var)`, idiosyncratic terms
//! `nu ~ N(0,1)` and `u ~ N(0, noise_var)`, loading `alpha =
//! member_loading`, and regressor loading `kappa`. Two dyads sharing one
//! member then have error covariance `alpha^2 * member_var`, the
//! correlation structure naive standard errors ignore. The regressor
//! carries the same member structure (scaled by `kappa * alpha`) so that
//! ignoring it actually hurts: with an iid regressor the score products
//! across incident dyads average out and naive coverage stays nominal.
//! `alpha = 0` switches both channels off and every estimator is valid.
//!
//! Randomness is counter-based: every draw comes from its own ChaCha8
//! stream keyed by `(seed, replication, stream tag, entity id)`, where the
//! entity id is a member index, canonical pair index, or pair-period
//! index. Draws therefore never depend on iteration order, thread count,
//! or which dyads happen to be sampled, and any replication can be
//! regenerated in isolation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_design, DesignSpec, DyadDataset, DyadObservation, MemberId};
use crate::error::{Error, Result};
use crate::inference::infer_small_sample;
use crate::ols::{fit_ols_named, FitResult};
use crate::vcov::{
    correction_units, vcov_cr_dyad, vcov_dcr, vcov_hc0, EstimatorKind, VcovEstimate,
};

const TAG_MEMBER_X: u32 = 1;
const TAG_MEMBER_R: u32 = 2;
const TAG_DYAD_SELECT: u32 = 3;
const TAG_OBS_NU: u32 = 4;
const TAG_OBS_U: u32 = 5;

/// Which dyads enter the sample: every unordered pair, or each pair
/// independently with the given probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DyadSampling {
    AllPairs,
    Density(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_members: usize,
    pub periods: usize,
    pub dyad_sampling: DyadSampling,
    /// The alpha loading of the member effects in both outcome and
    /// regressor.
    pub member_loading: f64,
    pub member_var: f64,
    pub noise_var: f64,
    pub slope_true: f64,
    /// kappa: regressor member-structure strength relative to alpha.
    pub regressor_loading: f64,
    pub replications: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> SimConfig {
        SimConfig {
            n_members: 50,
            periods: 1,
            dyad_sampling: DyadSampling::AllPairs,
            member_loading: 1.0,
            member_var: 1.0,
            noise_var: 1.0,
            slope_true: 1.0,
            regressor_loading: 0.5,
            replications: 2000,
            seed: 2026,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_members < 2 {
            return Err(Error::Config(format!(
                "n_members must be at least 2, got {}",
                self.n_members
            )));
        }
        if self.periods < 1 {
            return Err(Error::Config("periods must be at least 1".into()));
        }
        if self.replications < 1 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if let DyadSampling::Density(rho) = self.dyad_sampling {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::Config(format!(
                    "dyad density must lie in (0, 1], got {rho}"
                )));
            }
        }
        for (name, value) in [("member_var", self.member_var), ("noise_var", self.noise_var)] {
            if value < 0.0 || !value.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be a finite nonnegative number, got {value}"
                )));
            }
        }
        for (name, value) in [
            ("member_loading", self.member_loading),
            ("slope_true", self.slope_true),
            ("regressor_loading", self.regressor_loading),
        ] {
            if !value.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {value}")));
            }
        }
        Ok(())
    }

    /// Parses `key=value` lines; `#` starts a comment, blank lines are
    /// ignored. `dyad_sampling=density` requires a `density=...` line.
    pub fn from_kv_str(text: &str) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        let mut sampling_kind: Option<String> = None;
        let mut density: Option<f64> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got `{line}`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| {
                Error::Config(format!("line {}: {key} must be {what}, got `{value}`", lineno + 1))
            };
            match key {
                "n_members" => cfg.n_members = value.parse().map_err(|_| bad("an integer"))?,
                "periods" => cfg.periods = value.parse().map_err(|_| bad("an integer"))?,
                "replications" => {
                    cfg.replications = value.parse().map_err(|_| bad("an integer"))?
                }
                "seed" => cfg.seed = value.parse().map_err(|_| bad("an integer"))?,
                "member_loading" => {
                    cfg.member_loading = value.parse().map_err(|_| bad("a number"))?
                }
                "member_var" => cfg.member_var = value.parse().map_err(|_| bad("a number"))?,
                "noise_var" => cfg.noise_var = value.parse().map_err(|_| bad("a number"))?,
                "slope_true" => cfg.slope_true = value.parse().map_err(|_| bad("a number"))?,
                "regressor_loading" => {
                    cfg.regressor_loading = value.parse().map_err(|_| bad("a number"))?
                }
                "dyad_sampling" => sampling_kind = Some(value.to_string()),
                "density" => density = Some(value.parse().map_err(|_| bad("a number"))?),
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown configuration key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        cfg.dyad_sampling = match (sampling_kind.as_deref(), density) {
            (None, None) => cfg.dyad_sampling,
            (Some("all"), None) => DyadSampling::AllPairs,
            (Some("density"), Some(rho)) | (None, Some(rho)) => DyadSampling::Density(rho),
            (Some("density"), None) => {
                return Err(Error::Config(
                    "dyad_sampling=density requires a density=... line".into(),
                ))
            }
            (Some("all"), Some(_)) => {
                return Err(Error::Config(
                    "density=... conflicts with dyad_sampling=all".into(),
                ))
            }
            (Some(other), _) => {
                return Err(Error::Config(format!(
                    "dyad_sampling must be `all` or `density`, got `{other}`"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_kv_file(path: &std::path::Path) -> Result<SimConfig> {
        SimConfig::from_kv_str(&std::fs::read_to_string(path)?)
    }
}

fn stream(seed: u64, rep: u64, tag: u32, id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&rep.to_le_bytes());
    key[16..20].copy_from_slice(&tag.to_le_bytes());
    key[20..28].copy_from_slice(&id.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn normal(seed: u64, rep: u64, tag: u32, id: u64) -> f64 {
    stream(seed, rep, tag, id).sample(StandardNormal)
}

fn member_label(index: usize, width: usize) -> MemberId {
    MemberId::new(&format!("m{index:0width$}")).expect("generated label is non-empty")
}

/// One synthetic dataset for the given replication. Identical `(config,
/// rep)` always produces an identical dataset.
pub fn simulate_dataset(cfg: &SimConfig, rep: u64) -> Result<DyadDataset> {
    cfg.validate()?;
    let n = cfg.n_members;
    // Zero-padded labels keep lexicographic member order equal to index
    // order, so canonical pairs are exactly (i, j) with i < j.
    let width = (n.saturating_sub(1)).to_string().len().max(3);
    let member_sd = cfg.member_var.sqrt();
    let noise_sd = cfg.noise_var.sqrt();
    let x_effect: Vec<f64> = (0..n)
        .map(|m| member_sd * normal(cfg.seed, rep, TAG_MEMBER_X, m as u64))
        .collect();
    let r_effect: Vec<f64> = (0..n)
        .map(|m| member_sd * normal(cfg.seed, rep, TAG_MEMBER_R, m as u64))
        .collect();

    let mut observations = Vec::new();
    let mut pair_index: u64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let keep = match cfg.dyad_sampling {
                DyadSampling::AllPairs => true,
                DyadSampling::Density(rho) => {
                    stream(cfg.seed, rep, TAG_DYAD_SELECT, pair_index).gen::<f64>() < rho
                }
            };
            if keep {
                for t in 0..cfg.periods {
                    let obs_id = pair_index * cfg.periods as u64 + t as u64;
                    let nu: f64 = normal(cfg.seed, rep, TAG_OBS_NU, obs_id);
                    let u = noise_sd * normal(cfg.seed, rep, TAG_OBS_U, obs_id);
                    let x = cfg.regressor_loading * cfg.member_loading * (r_effect[i] + r_effect[j])
                        + nu;
                    let y = cfg.slope_true * x
                        + cfg.member_loading * (x_effect[i] + x_effect[j])
                        + u;
                    observations.push(
                        DyadObservation::new(
                            member_label(i, width),
                            member_label(j, width),
                            t as i64,
                            y,
                            vec![x],
                        )
                        .expect("generated members are distinct"),
                    );
                }
            }
            pair_index += 1;
        }
    }
    DyadDataset::with_names(observations, vec!["x".to_string()])
}

/// Coverage and dispersion summary for one estimator across replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    /// Share of replications whose CI contains the true slope.
    pub coverage: f64,
    /// Mean uncorrected standard error of the slope.
    pub mean_se: f64,
    /// Sample standard deviation of the slope estimate across replications.
    pub sd_beta: f64,
    /// Mean per-replication ratio of this estimator's SE to the naive one.
    pub mean_ser_vs_naive: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageResult {
    pub level: f64,
    pub replications: usize,
    pub n_members: usize,
    pub summaries: Vec<EstimatorSummary>,
}

impl CoverageResult {
    pub fn summary(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == kind)
    }

    pub fn to_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["estimator", "coverage", "mean_se", "sd_beta", "mean_ser_vs_naive"])?;
        let mut buf = ryu::Buffer::new();
        for s in &self.summaries {
            w.write_record([
                s.estimator.as_str().to_string(),
                buf.format(s.coverage).to_string(),
                buf.format(s.mean_se).to_string(),
                buf.format(s.sd_beta).to_string(),
                buf.format(s.mean_ser_vs_naive).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const ESTIMATORS: [EstimatorKind; 3] =
    [EstimatorKind::Hc0, EstimatorKind::CrDyad, EstimatorKind::Dcr];

struct RepStats {
    beta: f64,
    se: [f64; 3],
    covered: [bool; 3],
}

fn replication_stats(cfg: &SimConfig, rep: u64) -> Result<RepStats> {
    let data = simulate_dataset(cfg, rep)?;
    let (x, names) = build_design(&data, &DesignSpec::default())?;
    let y = nalgebra::DVector::from_iterator(
        data.n(),
        data.observations().iter().map(|o| o.outcome),
    );
    let fit = fit_ols_named(&x, &y, names)?;
    let estimates: [VcovEstimate; 3] = [
        vcov_hc0(&fit),
        vcov_cr_dyad(&fit, &data)?,
        vcov_dcr(&fit, &data)?,
    ];
    let mut se = [0.0; 3];
    let mut covered = [false; 3];
    for (slot, v) in estimates.iter().enumerate() {
        se[slot] = v.standard_errors()[1];
        let units = correction_units(v.kind, &data)?;
        let table = infer_small_sample(&fit, v, 0.95, units)?;
        let row = table.get("x").ok_or_else(|| {
            Error::Config("simulated fit is missing the `x` coefficient".into())
        })?;
        covered[slot] = row.ci_low <= cfg.slope_true && cfg.slope_true <= row.ci_high;
    }
    Ok(RepStats {
        beta: slope_of(&fit),
        se,
        covered,
    })
}

fn slope_of(fit: &FitResult) -> f64 {
    fit.coefficients()[fit.p() - 1]
}

/// Runs all replications (in parallel) and aggregates in replication
/// order, so the result does not depend on thread count. Confidence
/// intervals apply the finite-sample correction with each estimator's own
/// unit count: observations for naive HC0, clusters for repeated-dyad,
/// members for DCR.
pub fn run_coverage(cfg: &SimConfig) -> Result<CoverageResult> {
    cfg.validate()?;
    let stats: Vec<RepStats> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| replication_stats(cfg, rep))
        .collect::<Result<Vec<_>>>()?;

    let reps = stats.len() as f64;
    let mean_beta = stats.iter().map(|s| s.beta).sum::<f64>() / reps;
    let sd_beta = if stats.len() < 2 {
        0.0
    } else {
        (stats
            .iter()
            .map(|s| (s.beta - mean_beta).powi(2))
            .sum::<f64>()
            / (reps - 1.0))
            .sqrt()
    };

    let summaries = ESTIMATORS
        .iter()
        .enumerate()
        .map(|(slot, &kind)| {
            let coverage =
                stats.iter().filter(|s| s.covered[slot]).count() as f64 / reps;
            let mean_se = stats.iter().map(|s| s.se[slot]).sum::<f64>() / reps;
            let mean_ser =
                stats.iter().map(|s| s.se[slot] / s.se[0]).sum::<f64>() / reps;
            EstimatorSummary {
                estimator: kind,
                coverage,
                mean_se,
                sd_beta,
                mean_ser_vs_naive: mean_ser,
            }
        })
        .collect();

    Ok(CoverageResult {
        level: 0.95,
        replications: cfg.replications,
        n_members: cfg.n_members,
        summaries,
    })
}
