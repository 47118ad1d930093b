//! Randomized invariant checks over generated dyadic datasets.

use dyadrobust::data::{
    build_design, DesignSpec, DyadDataset, DyadObservation, LoadOptions, MemberId,
};
use dyadrobust::ols::{fit_ols_named, FitResult};
use dyadrobust::vcov::{
    dyadic_mask, psd_repair, repeated_dyad_clusters, vcov_cr_dyad, vcov_dcr_raw, vcov_hc0,
    vcov_oracle, DependencyMask, EstimatorKind, VcovEstimate,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct RawRow {
    a: usize,
    b: usize,
    time: i64,
    outcome: f64,
    regressors: Vec<f64>,
}

fn row_strategy(max_members: usize, p_raw: usize) -> impl Strategy<Value = RawRow> {
    (
        0..max_members,
        0..max_members,
        0..4i64,
        -5.0..5.0f64,
        proptest::collection::vec(-5.0..5.0f64, p_raw),
    )
        .prop_filter_map("self-dyad", |(a, b, time, outcome, regressors)| {
            (a != b).then_some(RawRow {
                a,
                b,
                time,
                outcome,
                regressors,
            })
        })
}

fn dataset_strategy() -> impl Strategy<Value = DyadDataset> {
    (2usize..=8, 1usize..=3)
        .prop_flat_map(|(max_members, p_raw)| {
            proptest::collection::vec(row_strategy(max_members, p_raw), 1..=24)
        })
        .prop_map(|rows| dataset_from_rows(&rows))
}

fn dataset_from_rows(rows: &[RawRow]) -> DyadDataset {
    let observations = rows
        .iter()
        .map(|r| {
            DyadObservation::new(
                MemberId::new(&format!("m{}", r.a)).unwrap(),
                MemberId::new(&format!("m{}", r.b)).unwrap(),
                r.time,
                r.outcome,
                r.regressors.clone(),
            )
            .unwrap()
        })
        .collect();
    DyadDataset::new(observations).unwrap()
}

fn try_fit(data: &DyadDataset) -> Option<(FitResult, DyadDataset)> {
    let (x, names) = build_design(data, &DesignSpec::default()).ok()?;
    if x.nrows() < x.ncols() {
        return None;
    }
    let y = DVector::from_iterator(data.n(), data.observations().iter().map(|o| o.outcome));
    fit_ols_named(&x, &y, names).ok().map(|f| (f, data.clone()))
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, rtol: f64) -> bool {
    let scale = 1.0 + b.amax();
    (a - b).abs().max() <= rtol * scale
}

proptest! {
    #[test]
    fn csv_round_trip_is_identity(data in dataset_strategy()) {
        let mut bytes = Vec::new();
        data.write_csv(&mut bytes).unwrap();
        let reloaded = DyadDataset::from_csv_reader(
            bytes.as_slice(),
            &data.canonical_schema(),
            LoadOptions::default(),
        )
        .unwrap();
        let mut again = Vec::new();
        reloaded.write_csv(&mut again).unwrap();
        prop_assert_eq!(bytes, again);
        prop_assert_eq!(data.n(), reloaded.n());
        prop_assert_eq!(data.members(), reloaded.members());
    }

    #[test]
    fn incidence_lists_cover_each_observation_twice(data in dataset_strategy()) {
        let total: usize = data.incidence().iter().map(Vec::len).sum();
        prop_assert_eq!(total, 2 * data.n());
    }

    #[test]
    fn member_order_within_a_row_is_irrelevant(rows in proptest::collection::vec(row_strategy(8, 2), 1..=16)) {
        let swapped: Vec<RawRow> = rows
            .iter()
            .map(|r| RawRow { a: r.b, b: r.a, ..r.clone() })
            .collect();
        let direct = dataset_from_rows(&rows);
        let flipped = dataset_from_rows(&swapped);
        let mut da = Vec::new();
        let mut db = Vec::new();
        direct.write_csv(&mut da).unwrap();
        flipped.write_csv(&mut db).unwrap();
        prop_assert_eq!(da, db);
    }

    #[test]
    fn masks_nest_diagonal_within_dyad_within_dyadic(data in dataset_strategy()) {
        let diagonal = DependencyMask::diagonal(data.n());
        let repeated = DependencyMask::from_clusters(&repeated_dyad_clusters(&data));
        let dyadic = dyadic_mask(&data);
        prop_assert!(diagonal.is_subset_of(&repeated));
        prop_assert!(repeated.is_subset_of(&dyadic));
        for k in 0..data.n() {
            prop_assert!(dyadic.get(k, k));
            for l in 0..data.n() {
                prop_assert_eq!(dyadic.get(k, l), dyadic.get(l, k));
            }
        }
    }

    #[test]
    fn dcr_matches_the_masked_oracle(data in dataset_strategy()) {
        if let Some((fit, data)) = try_fit(&data) {
            let fast = vcov_dcr_raw(&fit, &data).unwrap();
            let oracle = vcov_oracle(&fit, &dyadic_mask(&data)).unwrap();
            prop_assert!(close(&fast.matrix, &oracle.matrix, 1e-10));
        }
    }

    #[test]
    fn fitting_is_permutation_equivariant(
        data in dataset_strategy(),
        seed in any::<u64>(),
    ) {
        if let Some((fit, data)) = try_fit(&data) {
            let mut order: Vec<usize> = (0..data.n()).collect();
            // Deterministic Fisher-Yates from the seed.
            let mut state = seed | 1;
            for i in (1..order.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (state >> 33) as usize % (i + 1));
            }
            let permuted = DyadDataset::with_names(
                order.iter().map(|&k| data.observations()[k].clone()).collect(),
                data.regressor_names().to_vec(),
            )
            .unwrap();
            if let Some((pfit, permuted)) = try_fit(&permuted) {
                let beta: Vec<f64> = fit.coefficients().iter().cloned().collect();
                let pbeta: Vec<f64> = pfit.coefficients().iter().cloned().collect();
                for (a, b) in beta.iter().zip(&pbeta) {
                    prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
                }
                for (i, &k) in order.iter().enumerate() {
                    let (ra, rb) = (pfit.residuals()[i], fit.residuals()[k]);
                    prop_assert!((ra - rb).abs() <= 1e-10 * (1.0 + rb.abs()));
                }
                // The estimators are sums over unordered structures, so
                // observation order must not matter beyond roundoff.
                let (va, vb) = (
                    vcov_dcr_raw(&fit, &data).unwrap(),
                    vcov_dcr_raw(&pfit, &permuted).unwrap(),
                );
                prop_assert!(close(&va.matrix, &vb.matrix, 1e-10));
                let (ha, hb) = (vcov_hc0(&fit), vcov_hc0(&pfit));
                prop_assert!(close(&ha.matrix, &hb.matrix, 1e-10));
                let (ca, cb) = (
                    vcov_cr_dyad(&fit, &data).unwrap(),
                    vcov_cr_dyad(&pfit, &permuted).unwrap(),
                );
                prop_assert!(close(&ca.matrix, &cb.matrix, 1e-10));
            }
        }
    }

    #[test]
    fn coefficients_are_untouched_by_variance_estimation(data in dataset_strategy()) {
        if let Some((fit, data)) = try_fit(&data) {
            let before: Vec<f64> = fit.coefficients().iter().cloned().collect();
            let _ = vcov_hc0(&fit);
            let _ = vcov_cr_dyad(&fit, &data).unwrap();
            let _ = dyadrobust::vcov::vcov_dcr(&fit, &data).unwrap();
            let after: Vec<f64> = fit.coefficients().iter().cloned().collect();
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn psd_repair_is_idempotent_and_preserves_psd(
        diag in proptest::collection::vec(-2.0..2.0f64, 2..=5),
        rot in proptest::collection::vec(-1.0..1.0f64, 25),
    ) {
        let p = diag.len();
        // Orthogonalize a random square matrix for the rotation.
        let raw = DMatrix::from_fn(p, p, |i, j| rot[i * 5 + j] + if i == j { 3.0 } else { 0.0 });
        let q = raw.qr().q();
        let planted = &q * DMatrix::from_diagonal(&DVector::from_vec(diag.clone())) * q.transpose();
        let est = VcovEstimate {
            matrix: planted,
            kind: EstimatorKind::Dcr,
            psd_repaired: false,
            negative_eigenvalues_truncated: 0,
            min_eigenvalue_before_repair: None,
        };
        let once = psd_repair(&est);
        let twice = psd_repair(&once);
        prop_assert!((&twice.matrix - &once.matrix).abs().max() <= 1e-12 * (1.0 + once.matrix.amax()));
        prop_assert_eq!(twice.negative_eigenvalues_truncated, 0);
        if diag.iter().all(|&l| l >= 0.0) {
            prop_assert!(!once.psd_repaired);
        }
    }
}
