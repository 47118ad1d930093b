//! Sandwich variance estimators for dyadic data.
//!
//! Every estimator here shares one shape,
//!
//! ```text
//! V = (X'X)^-1  M  (X'X)^-1,     M = sum over admitted pairs (k,l) of s_k s_l'
//! ```
//!
//! and differs only in which observation pairs the meat `M` admits:
//!
//! - `HC0`: the diagonal only (no cross-observation dependence);
//! - one-way clustering: pairs within the same cluster (for dyadic panels,
//!   the repeated-dyad clustering whose key is the unordered member pair);
//! - dyadic cluster-robust (`DCR`): every pair of observations that shares
//!   at least one member.
//!
//! The DCR meat is never assembled from the n x n pair set directly. Writing
//! `S_m` for the summed scores of observations incident to member `m` and
//! `S_d` for the summed scores of repeated-dyad cluster `d`, counting each
//! shared member once gives
//!
//! ```text
//! M_dcr = sum_m S_m S_m'  -  sum_d S_d S_d'
//! ```
//!
//! because a pair sharing one member is hit once on the left, and a pair
//! sharing both members (a repeated dyad, or an observation with itself) is
//! hit twice on the left and corrected once on the right. This is the same
//! matrix as the member-by-member decomposition
//!
//! ```text
//! V_r = sum_m V_{c,m} - V_D - (N - 2) V_0
//! ```
//!
//! where `V_{c,m}` clusters only the observations incident to `m` (all
//! others singletons): summing the `N` member-specific meats counts each
//! diagonal term twice per observation beyond its shared-pair terms, and
//! the `(N - 2) V_0` term removes exactly that surplus. Both forms are
//! implemented; [`vcov_dcr_raw`] is the `O(n p + (N + G) p^2)` accumulation
//! and [`vcov_dcr_reference`] materializes the decomposition literally.
//!
//! All accumulations run in a fixed order (observations ascending, then
//! members ascending, then dyad clusters ascending), so results do not
//! depend on thread count. Cluster corrections are added in the form
//! `S_g S_g' - sum_{k in g} s_k s_k'` and singleton groups are skipped
//! outright, which makes the textbook collapse cases hold exactly, not just
//! to tolerance: singleton clustering reproduces the HC0 bits, and DCR on
//! data whose dyads share no members reproduces the HC0 bits.
//!
//! An estimated DCR matrix need not be positive semidefinite in finite
//! samples. [`psd_repair`] truncates negative eigenvalues to zero and
//! records what it did; [`vcov_dcr`] applies it to the final matrix only,
//! never to intermediate terms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::DyadDataset;
use crate::error::{Error, Result};
use crate::ols::{scores, FitResult};

/// Eigenvalues in `(-PSD_ZERO_RTOL * lambda_max, 0)` are treated as
/// numerical zeros: clamped by repair but not counted as truncations.
pub const PSD_ZERO_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Hc0,
    CrOneway,
    CrDyad,
    Dcr,
    /// Brute-force mask estimator; test plumbing, not a production choice.
    Oracle,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Hc0 => "hc0",
            EstimatorKind::CrOneway => "cr-oneway",
            EstimatorKind::CrDyad => "cr-dyad",
            EstimatorKind::Dcr => "dcr",
            EstimatorKind::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<EstimatorKind> {
        match s {
            "hc0" => Ok(EstimatorKind::Hc0),
            "cr-oneway" => Ok(EstimatorKind::CrOneway),
            "cr-dyad" => Ok(EstimatorKind::CrDyad),
            "dcr" => Ok(EstimatorKind::Dcr),
            other => Err(Error::Config(format!(
                "unknown estimator `{other}` (expected hc0, cr-oneway, cr-dyad, or dcr)"
            ))),
        }
    }
}

/// One-way partition of observations into clusters with dense labels `0..G`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    g: usize,
}

impl ClusterAssignment {
    /// Densifies arbitrary labels in order of first appearance.
    pub fn from_keys<K: Ord>(keys: impl IntoIterator<Item = K>) -> ClusterAssignment {
        let mut map = std::collections::BTreeMap::new();
        let mut labels = Vec::new();
        for key in keys {
            let next = map.len();
            labels.push(*map.entry(key).or_insert(next));
        }
        ClusterAssignment {
            g: map.len(),
            labels,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Number of distinct clusters G.
    pub fn g(&self) -> usize {
        self.g
    }

    /// Observation indices per cluster, ascending within each cluster.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.g];
        for (k, &label) in self.labels.iter().enumerate() {
            groups[label].push(k);
        }
        groups
    }
}

/// Symmetric boolean matrix marking observation pairs whose error product
/// is admitted into the meat. The diagonal is always true.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyMask {
    n: usize,
    cells: Vec<bool>,
}

impl DependencyMask {
    pub fn diagonal(n: usize) -> DependencyMask {
        let mut mask = DependencyMask {
            n,
            cells: vec![false; n * n],
        };
        for k in 0..n {
            mask.cells[k * n + k] = true;
        }
        mask
    }

    /// Block mask: true iff two observations share a cluster.
    pub fn from_clusters(clusters: &ClusterAssignment) -> DependencyMask {
        let n = clusters.n();
        let mut mask = DependencyMask::diagonal(n);
        for group in clusters.groups() {
            for (i, &k) in group.iter().enumerate() {
                for &l in &group[i + 1..] {
                    mask.set_pair(k, l);
                }
            }
        }
        mask
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, l: usize) -> bool {
        self.cells[k * self.n + l]
    }

    fn set_pair(&mut self, k: usize, l: usize) {
        self.cells[k * self.n + l] = true;
        self.cells[l * self.n + k] = true;
    }

    /// Entrywise implication: every admitted pair of `self` is admitted by
    /// `other`.
    pub fn is_subset_of(&self, other: &DependencyMask) -> bool {
        self.n == other.n
            && self
                .cells
                .iter()
                .zip(&other.cells)
                .all(|(&a, &b)| !a || b)
    }
}

/// A variance estimate tagged with its estimator and repair diagnostics.
/// `min_eigenvalue_before_repair` is `None` until [`psd_repair`] has seen
/// the matrix.
#[derive(Debug, Clone)]
pub struct VcovEstimate {
    pub matrix: DMatrix<f64>,
    pub kind: EstimatorKind,
    pub psd_repaired: bool,
    pub negative_eigenvalues_truncated: usize,
    pub min_eigenvalue_before_repair: Option<f64>,
}

impl VcovEstimate {
    fn new(matrix: DMatrix<f64>, kind: EstimatorKind) -> VcovEstimate {
        VcovEstimate {
            matrix,
            kind,
            psd_repaired: false,
            negative_eigenvalues_truncated: 0,
            min_eigenvalue_before_repair: None,
        }
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    /// Square roots of the diagonal; entries that are negative by roundoff
    /// count as zero.
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.p())
            .map(|j| self.matrix[(j, j)].max(0.0).sqrt())
            .collect()
    }
}

fn add_outer(m: &mut DMatrix<f64>, v: &DVector<f64>) {
    let p = v.len();
    for j in 0..p {
        let vj = v[j];
        for i in 0..p {
            m[(i, j)] += v[i] * vj;
        }
    }
}

fn sub_outer(m: &mut DMatrix<f64>, v: &DVector<f64>) {
    let p = v.len();
    for j in 0..p {
        let vj = v[j];
        for i in 0..p {
            m[(i, j)] -= v[i] * vj;
        }
    }
}

fn score_row(s: &DMatrix<f64>, k: usize) -> DVector<f64> {
    s.row(k).transpose()
}

/// `sum_k s_k s_k'` in observation order.
fn meat_hc0(s: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = s.shape();
    let mut m = DMatrix::zeros(p, p);
    for k in 0..n {
        let row = score_row(s, k);
        add_outer(&mut m, &row);
    }
    m
}

/// Adds `S_g S_g' - sum_{k in g} s_k s_k'` for every non-singleton group.
/// Singleton groups contribute exactly zero and are skipped, so a partition
/// into singletons leaves the meat bit-identical to HC0.
fn apply_cluster_corrections(
    m: &mut DMatrix<f64>,
    s: &DMatrix<f64>,
    groups: &[Vec<usize>],
    subtract: bool,
) {
    let p = s.ncols();
    for group in groups {
        if group.len() < 2 {
            continue;
        }
        let mut sum = DVector::zeros(p);
        for &k in group {
            sum += s.row(k).transpose();
        }
        if subtract {
            sub_outer(m, &sum);
            for &k in group {
                add_outer(m, &score_row(s, k));
            }
        } else {
            add_outer(m, &sum);
            for &k in group {
                sub_outer(m, &score_row(s, k));
            }
        }
    }
}

fn sandwich(fit: &FitResult, meat: &DMatrix<f64>, kind: EstimatorKind) -> VcovEstimate {
    let v = fit.bread() * meat * fit.bread();
    let sym = (&v + v.transpose()) * 0.5;
    VcovEstimate::new(sym, kind)
}

/// Heteroskedasticity-consistent estimator with no degrees-of-freedom
/// scaling.
pub fn vcov_hc0(fit: &FitResult) -> VcovEstimate {
    let s = scores(fit);
    let meat = meat_hc0(s.matrix());
    sandwich(fit, &meat, EstimatorKind::Hc0)
}

/// One-way cluster-robust estimator (no small-sample multiplier; apply
/// [`small_sample_correct`] separately if wanted).
pub fn vcov_cluster(fit: &FitResult, clusters: &ClusterAssignment) -> Result<VcovEstimate> {
    if clusters.n() != fit.n() {
        return Err(Error::Config(format!(
            "cluster assignment covers {} observations, fit has {}",
            clusters.n(),
            fit.n()
        )));
    }
    let s = scores(fit);
    let mut meat = meat_hc0(s.matrix());
    apply_cluster_corrections(&mut meat, s.matrix(), &clusters.groups(), false);
    Ok(sandwich(fit, &meat, EstimatorKind::CrOneway))
}

/// Clusters keyed by the unordered member pair, labeled in order of first
/// appearance.
pub fn repeated_dyad_clusters(data: &DyadDataset) -> ClusterAssignment {
    ClusterAssignment::from_keys((0..data.n()).map(|k| data.member_pair(k)))
}

/// One-way clustering by repeated dyad.
pub fn vcov_cr_dyad(fit: &FitResult, data: &DyadDataset) -> Result<VcovEstimate> {
    let mut est = vcov_cluster(fit, &repeated_dyad_clusters(data))?;
    est.kind = EstimatorKind::CrDyad;
    Ok(est)
}

fn check_alignment(fit: &FitResult, data: &DyadDataset) -> Result<()> {
    if fit.n() != data.n() {
        return Err(Error::Config(format!(
            "fit has {} rows, dataset has {} observations",
            fit.n(),
            data.n()
        )));
    }
    Ok(())
}

/// Dyadic cluster-robust estimator before PSD repair, via the score-sum
/// accumulation (see module docs).
pub fn vcov_dcr_raw(fit: &FitResult, data: &DyadDataset) -> Result<VcovEstimate> {
    check_alignment(fit, data)?;
    let s = scores(fit);
    let mut meat = meat_hc0(s.matrix());
    apply_cluster_corrections(&mut meat, s.matrix(), &data.incidence(), false);
    let dyads = repeated_dyad_clusters(data).groups();
    apply_cluster_corrections(&mut meat, s.matrix(), &dyads, true);
    Ok(sandwich(fit, &meat, EstimatorKind::Dcr))
}

/// Dyadic cluster-robust estimator assembled literally as
/// `sum_m V_{c,m} - V_D - (N - 2) V_0`, materializing one member-specific
/// clustered matrix per member. Slow reference for validating
/// [`vcov_dcr_raw`]; identical up to accumulation roundoff.
pub fn vcov_dcr_reference(fit: &FitResult, data: &DyadDataset) -> Result<VcovEstimate> {
    check_alignment(fit, data)?;
    let n = data.n();
    let big_n = data.n_members() as f64;
    let incidence = data.incidence();
    let mut total = DMatrix::zeros(fit.p(), fit.p());
    for incident in &incidence {
        let member_clusters = member_specific_clusters(n, incident);
        total += vcov_cluster(fit, &member_clusters)?.matrix;
    }
    total -= vcov_cr_dyad(fit, data)?.matrix;
    total -= vcov_hc0(fit).matrix * (big_n - 2.0);
    Ok(VcovEstimate::new(total, EstimatorKind::Dcr))
}

/// Assignment where one member's incident observations form a single
/// cluster and every other observation is a singleton.
pub fn member_specific_clusters(n: usize, incident: &[usize]) -> ClusterAssignment {
    let mut is_incident = vec![false; n];
    for &k in incident {
        is_incident[k] = true;
    }
    // Key 0 for the member cluster; unique keys elsewhere.
    ClusterAssignment::from_keys((0..n).map(|k| if is_incident[k] { 0 } else { k + 1 }))
}

/// Dyadic cluster-robust estimator: raw accumulation followed by PSD repair
/// of the final matrix.
pub fn vcov_dcr(fit: &FitResult, data: &DyadDataset) -> Result<VcovEstimate> {
    Ok(psd_repair(&vcov_dcr_raw(fit, data)?))
}

/// Brute-force masked meat `sum over mask-admitted (k,l) of s_k s_l'` by
/// direct double loop. No repair is applied.
pub fn vcov_oracle(fit: &FitResult, mask: &DependencyMask) -> Result<VcovEstimate> {
    if mask.n() != fit.n() {
        return Err(Error::Config(format!(
            "mask covers {} observations, fit has {}",
            mask.n(),
            fit.n()
        )));
    }
    let s = scores(fit);
    let s = s.matrix();
    let (n, p) = s.shape();
    let mut meat = DMatrix::zeros(p, p);
    for k in 0..n {
        for l in 0..n {
            if !mask.get(k, l) {
                continue;
            }
            for i in 0..p {
                let ski = s[(k, i)];
                for j in 0..p {
                    meat[(i, j)] += ski * s[(l, j)];
                }
            }
        }
    }
    Ok(sandwich(fit, &meat, EstimatorKind::Oracle))
}

/// True iff observations `k`, `l` share at least one member.
pub fn dyadic_mask(data: &DyadDataset) -> DependencyMask {
    let mut mask = DependencyMask::diagonal(data.n());
    for incident in data.incidence() {
        for (i, &k) in incident.iter().enumerate() {
            for &l in &incident[i + 1..] {
                mask.set_pair(k, l);
            }
        }
    }
    mask
}

/// Eigenvalue truncation to the PSD cone.
///
/// Negative eigenvalues are clamped to zero and the matrix reassembled.
/// Only eigenvalues below `-PSD_ZERO_RTOL * lambda_max` count as genuine
/// truncations; smaller negatives are roundoff and are clamped silently.
/// Already-PSD input is returned unchanged. Idempotent up to roundoff.
pub fn psd_repair(estimate: &VcovEstimate) -> VcovEstimate {
    let a = (&estimate.matrix + estimate.matrix.transpose()) * 0.5;
    let eigen = SymmetricEigen::new(a);
    let lambda_max = eigen.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lambda_min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let tolerance = PSD_ZERO_RTOL * lambda_max.max(0.0);

    let mut out = estimate.clone();
    out.min_eigenvalue_before_repair = Some(lambda_min);
    if lambda_min >= 0.0 {
        out.psd_repaired = false;
        out.negative_eigenvalues_truncated = 0;
        return out;
    }
    let truncated = eigen.eigenvalues.iter().filter(|&&l| l < -tolerance).count();
    let clamped = DVector::from_iterator(
        eigen.eigenvalues.len(),
        eigen.eigenvalues.iter().map(|&l| l.max(0.0)),
    );
    let q = &eigen.eigenvectors;
    let rebuilt = q * DMatrix::from_diagonal(&clamped) * q.transpose();
    out.matrix = (&rebuilt + rebuilt.transpose()) * 0.5;
    out.psd_repaired = truncated > 0;
    out.negative_eigenvalues_truncated = truncated;
    out
}

/// Scales standard errors by `sqrt(N/(N-1))` and returns the t degrees of
/// freedom `N - 1`, where `N` counts the independent units behind the
/// estimator: distinct members for DCR, clusters for one-way clustering,
/// observations for HC0.
pub fn small_sample_correct(se: &[f64], n_units: usize) -> Result<(Vec<f64>, f64)> {
    if n_units < 2 {
        return Err(Error::DegenerateUnits(n_units));
    }
    let multiplier = small_sample_multiplier(n_units);
    let corrected = se.iter().map(|&v| v * multiplier).collect();
    Ok((corrected, (n_units - 1) as f64))
}

/// `sqrt(N/(N-1))`.
pub fn small_sample_multiplier(n_units: usize) -> f64 {
    (n_units as f64 / (n_units as f64 - 1.0)).sqrt()
}

/// Independent-unit count behind each estimator, for the small-sample
/// correction: observations for HC0, repeated-dyad clusters for CR-dyad,
/// distinct members for DCR. One-way clustering over an arbitrary
/// assignment has no default; pass its G explicitly.
pub fn correction_units(kind: EstimatorKind, data: &DyadDataset) -> Result<usize> {
    match kind {
        EstimatorKind::Hc0 => Ok(data.n()),
        EstimatorKind::CrDyad => Ok(repeated_dyad_clusters(data).g()),
        EstimatorKind::Dcr => Ok(data.n_members()),
        other => Err(Error::Config(format!(
            "estimator `{other}` has no default unit count for the small-sample correction"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::fixture_d1;
    use crate::data::{build_design, DesignSpec, DyadDataset, DyadObservation, MemberId};
    use crate::ols::fit_ols;

    fn mid(s: &str) -> MemberId {
        MemberId::new(s).unwrap()
    }

    fn obs(a: &str, b: &str, t: i64, y: f64, x: f64) -> DyadObservation {
        DyadObservation::new(mid(a), mid(b), t, y, vec![x]).unwrap()
    }

    fn fit_dataset(data: &DyadDataset) -> crate::ols::FitResult {
        let (x, names) = build_design(data, &DesignSpec::default()).unwrap();
        let y = DVector::from_iterator(data.n(), data.observations().iter().map(|o| o.outcome));
        crate::ols::fit_ols_named(&x, &y, names).unwrap()
    }

    #[test]
    fn d1_hc0_matches_hand_sandwich() {
        let data = fixture_d1();
        let fit = fit_dataset(&data);
        let v = vcov_hc0(&fit);
        let expected =
            DMatrix::from_row_slice(2, 2, &[0.0066, -0.00315, -0.00315, 0.00335]);
        assert!((&v.matrix - expected).abs().max() < 1e-12);
        assert!((v.standard_errors()[1] - 0.00335f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_residuals_give_zero_hc0() {
        let x = DMatrix::from_row_slice(3, 2, &[1., 0., 1., 1., 1., 2.]);
        let y = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        let fit = fit_ols(&x, &y).unwrap();
        assert!(vcov_hc0(&fit).matrix.amax() < 1e-24);
    }

    #[test]
    fn hc0_is_bitwise_the_diagonal_oracle() {
        let data = fixture_d1();
        let fit = fit_dataset(&data);
        let direct = vcov_hc0(&fit);
        let oracle = vcov_oracle(&fit, &DependencyMask::diagonal(4)).unwrap();
        assert_eq!(direct.matrix, oracle.matrix);
    }

    #[test]
    fn singleton_clusters_collapse_to_hc0_exactly() {
        let data = fixture_d1();
        let fit = fit_dataset(&data);
        let singletons = ClusterAssignment::from_keys(0..data.n());
        assert_eq!(singletons.g(), 4);
        let cr = vcov_cluster(&fit, &singletons).unwrap();
        assert_eq!(cr.matrix, vcov_hc0(&fit).matrix);
    }

    #[test]
    fn one_cluster_with_intercept_is_numerically_zero() {
        let data = fixture_d1();
        let fit = fit_dataset(&data);
        let one = ClusterAssignment::from_keys(std::iter::repeat_n(0, data.n()));
        let cr = vcov_cluster(&fit, &one).unwrap();
        // (sum of scores) is zero by orthogonality; only the roundoff of
        // cancelling the diagonal terms against the correction survives.
        assert!(cr.matrix.amax() < 1e-15);
    }

    #[test]
    fn repeated_dyad_clusters_on_d1() {
        let data = fixture_d1();
        let clusters = repeated_dyad_clusters(&data);
        assert_eq!(clusters.labels(), &[0, 0, 1, 2]);
        assert_eq!(clusters.g(), 3);
    }

    #[test]
    fn repeated_dyad_cluster_counts_degenerate() {
        let same = DyadDataset::new(vec![
            obs("1", "2", 0, 1.0, 0.0),
            obs("1", "2", 1, 2.0, 1.0),
            obs("1", "2", 2, 0.5, 2.0),
        ])
        .unwrap();
        assert_eq!(repeated_dyad_clusters(&same).g(), 1);
        let distinct = DyadDataset::new(vec![
            obs("1", "2", 0, 1.0, 0.0),
            obs("3", "4", 0, 2.0, 1.0),
            obs("5", "6", 0, 0.5, 2.0),
        ])
        .unwrap();
        assert_eq!(repeated_dyad_clusters(&distinct).g(), 3);
    }

    #[test]
    fn cr_dyad_matches_block_mask_oracle() {
        let data = fixture_d1();
        let fit = fit_dataset(&data);
        let cr = vcov_cr_dyad(&fit, &data).unwrap();
        let mask = DependencyMask::from_clusters(&repeated_dyad_clusters(&data));
        let oracle = vcov_oracle(&fit, &mask).unwrap();
        let scale = 1.0 + oracle.matrix.amax();
        assert!((&cr.matrix - &oracle.matrix).abs().max() < 1e-10 * scale);
    }

    #[test]
    fn d1_is_a_full_incidence_clique_and_dcr_collapses() {
        let data = fixture_d1();
        let mask = dyadic_mask(&data);
        for k in 0..4 {
            for l in 0..4 {
                assert!(mask.get(k, l), "({k},{l}) should share a member");
            }
        }
        let fit = fit_dataset(&data);
        // With every pair admitted and an intercept in the model, the meat
        // collapses to (sum s)(sum s)' = 0; only roundoff survives.
        let raw = vcov_dcr_raw(&fit, &data).unwrap();
        assert!(raw.matrix.amax() < 1e-13);
        let repaired = vcov_dcr(&fit, &data).unwrap();
        assert!(repaired.matrix.amax() < 1e-13);
        assert!(repaired.min_eigenvalue_before_repair.is_some());
    }

    #[test]
    fn dcr_equals_mask_oracle_on_d1() {
        let data = fixture_d1();
        let fit = fit_dataset(&data);
        let raw = vcov_dcr_raw(&fit, &data).unwrap();
        let oracle = vcov_oracle(&fit, &dyadic_mask(&data)).unwrap();
        let scale = 1.0 + oracle.matrix.amax();
        assert!((&raw.matrix - &oracle.matrix).abs().max() < 1e-10 * scale);
    }

    #[test]
    fn disjoint_dyads_collapse_to_hc0_exactly() {
        let data = DyadDataset::new(vec![
            obs("1", "2", 0, 1.0, 0.3),
            obs("3", "4", 0, -2.0, 1.7),
            obs("5", "6", 0, 0.5, -0.4),
            obs("7", "8", 0, 2.5, 0.9),
        ])
        .unwrap();
        let fit = fit_dataset(&data);
        let dcr = vcov_dcr_raw(&fit, &data).unwrap();
        assert_eq!(dcr.matrix, vcov_hc0(&fit).matrix);
        // The mask is block diagonal: only self-pairs are admitted.
        let mask = dyadic_mask(&data);
        for k in 0..4 {
            for l in 0..4 {
                assert_eq!(mask.get(k, l), k == l);
            }
        }
    }

    #[test]
    fn two_disjoint_repeated_dyads_match_cr_dyad() {
        // Two separate communities, each one repeated dyad: the dyadic mask
        // and the repeated-dyad mask coincide.
        let data = DyadDataset::new(vec![
            obs("1", "2", 0, 1.0, 0.3),
            obs("1", "2", 1, -1.0, 1.1),
            obs("3", "4", 0, 2.0, -0.6),
            obs("3", "4", 1, 0.5, 0.8),
        ])
        .unwrap();
        let fit = fit_dataset(&data);
        let dcr = vcov_dcr_raw(&fit, &data).unwrap();
        let cr = vcov_cr_dyad(&fit, &data).unwrap();
        let scale = 1.0 + cr.matrix.amax();
        assert!((&dcr.matrix - &cr.matrix).abs().max() < 1e-12 * scale);
        assert_eq!(
            dyadic_mask(&data),
            DependencyMask::from_clusters(&repeated_dyad_clusters(&data))
        );
    }

    #[test]
    fn fast_path_matches_literal_decomposition() {
        let data = DyadDataset::new(vec![
            obs("1", "2", 0, 1.0, 0.3),
            obs("1", "2", 1, -1.0, 1.1),
            obs("1", "3", 0, 2.0, -0.6),
            obs("2", "4", 0, 0.5, 0.8),
            obs("3", "4", 0, -0.7, 1.9),
            obs("4", "5", 0, 1.4, -1.2),
        ])
        .unwrap();
        let fit = fit_dataset(&data);
        let fast = vcov_dcr_raw(&fit, &data).unwrap();
        let reference = vcov_dcr_reference(&fit, &data).unwrap();
        let scale = 1.0 + reference.matrix.amax();
        assert!((&fast.matrix - &reference.matrix).abs().max() < 1e-10 * scale);
        let oracle = vcov_oracle(&fit, &dyadic_mask(&data)).unwrap();
        assert!((&fast.matrix - &oracle.matrix).abs().max() < 1e-10 * scale);
    }

    #[test]
    fn all_true_mask_with_intercept_is_numerically_zero() {
        let data = fixture_d1();
        let fit = fit_dataset(&data);
        let clusters = ClusterAssignment::from_keys(std::iter::repeat_n(0, 4));
        let mask = DependencyMask::from_clusters(&clusters);
        let oracle = vcov_oracle(&fit, &mask).unwrap();
        assert!(oracle.matrix.amax() < 1e-15);
    }

    #[test]
    fn psd_repair_truncates_planted_negative() {
        let est = VcovEstimate::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]),
            EstimatorKind::Dcr,
        );
        let fixed = psd_repair(&est);
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!((&fixed.matrix - expected).abs().max() < 1e-14);
        assert!(fixed.psd_repaired);
        assert_eq!(fixed.negative_eigenvalues_truncated, 1);
        assert!((fixed.min_eigenvalue_before_repair.unwrap() + 0.5).abs() < 1e-14);
    }

    #[test]
    fn psd_repair_leaves_psd_input_untouched() {
        let est = VcovEstimate::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            EstimatorKind::Hc0,
        );
        let fixed = psd_repair(&est);
        assert_eq!(fixed.matrix, est.matrix);
        assert!(!fixed.psd_repaired);
        assert_eq!(fixed.negative_eigenvalues_truncated, 0);
    }

    #[test]
    fn psd_repair_preserves_positive_spectrum() {
        // Rotate diag(2, -1) by a Givens rotation; repair must produce the
        // rotation of diag(2, 0).
        let (c, s) = (0.6, 0.8);
        let q = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let planted = &q * DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, -1.0]))
            * q.transpose();
        let fixed = psd_repair(&VcovEstimate::new(planted, EstimatorKind::Dcr));
        let expected = &q * DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 0.0]))
            * q.transpose();
        assert!((&fixed.matrix - expected).abs().max() < 1e-12);
        assert_eq!(fixed.negative_eigenvalues_truncated, 1);
        let twice = psd_repair(&fixed);
        assert!((&twice.matrix - &fixed.matrix).abs().max() < 1e-12);
        assert_eq!(twice.negative_eigenvalues_truncated, 0);
    }

    #[test]
    fn small_sample_correction_formula() {
        let (corrected, df) = small_sample_correct(&[0.1], 5).unwrap();
        assert!((corrected[0] - 0.1118033988749895).abs() < 1e-15);
        assert_eq!(df, 4.0);
        // Ratio is the multiplier to machine precision.
        assert!((corrected[0] / 0.1 - small_sample_multiplier(5)).abs() < 1e-15);
    }

    #[test]
    fn small_sample_multiplier_tends_to_one() {
        assert!((small_sample_multiplier(1_000_000_000_000) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn small_sample_rejects_degenerate_units() {
        assert!(matches!(
            small_sample_correct(&[0.1], 1),
            Err(Error::DegenerateUnits(1))
        ));
    }

    #[test]
    fn d1_dcr_correction_scales_by_sqrt_3_over_2() {
        let data = fixture_d1();
        let fit = fit_dataset(&data);
        let dcr = vcov_dcr(&fit, &data).unwrap();
        let se = dcr.standard_errors();
        let (corrected, df) = small_sample_correct(&se, data.n_members()).unwrap();
        assert_eq!(df, 2.0);
        for (c, s) in corrected.iter().zip(&se) {
            assert!((c - s * 1.5f64.sqrt()).abs() <= f64::EPSILON * c.abs());
        }
    }

    #[test]
    fn correction_units_per_estimator_on_d1() {
        let data = fixture_d1();
        assert_eq!(correction_units(EstimatorKind::Hc0, &data).unwrap(), 4);
        assert_eq!(correction_units(EstimatorKind::CrDyad, &data).unwrap(), 3);
        assert_eq!(correction_units(EstimatorKind::Dcr, &data).unwrap(), 3);
        assert!(correction_units(EstimatorKind::Oracle, &data).is_err());
    }

    #[test]
    fn estimator_kind_round_trips_through_strings() {
        for kind in [
            EstimatorKind::Hc0,
            EstimatorKind::CrOneway,
            EstimatorKind::CrDyad,
            EstimatorKind::Dcr,
        ] {
            let parsed: EstimatorKind = kind.as_str().parse().unwrap();
            assert_eq!(parsed, kind);
        }
        assert!("hc3".parse::<EstimatorKind>().is_err());
    }
}
