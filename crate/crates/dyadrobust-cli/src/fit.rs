use std::path::{Path, PathBuf};

use clap::Args;
use dyadrobust::data::{
    build_design, CsvSchema, DesignSpec, DyadDataset, LoadOptions, MemberId,
};
use dyadrobust::error::{Error, Result};
use dyadrobust::inference::{infer, infer_small_sample, InferenceTable};
use dyadrobust::ols::fit_ols_named;
use dyadrobust::reanalysis::{kev_records_to_csv, ser};
use dyadrobust::vcov::{
    correction_units, vcov_cr_dyad, vcov_dcr, vcov_hc0, EstimatorKind, VcovEstimate,
};
use serde::Serialize;

use crate::manifest::{write_csv_artifact, write_json_artifact, DesignSummary, RunManifest};

#[derive(Args)]
pub struct FitArgs {
    /// Input CSV with one dyad-period observation per row.
    #[arg(long)]
    data: PathBuf,
    /// Column holding the first member of each dyad.
    #[arg(long, default_value = "member_a")]
    member_a: String,
    /// Column holding the second member of each dyad.
    #[arg(long, default_value = "member_b")]
    member_b: String,
    /// Period column; omit to treat every row as its own period.
    #[arg(long)]
    time: Option<String>,
    #[arg(long, default_value = "outcome")]
    outcome: String,
    /// Comma-separated regressor columns.
    #[arg(long, value_delimiter = ',', required = true)]
    regressors: Vec<String>,
    #[arg(long)]
    no_intercept: bool,
    /// Add participation dummies for every member but the reference.
    #[arg(long)]
    member_fe: bool,
    /// Reference member dropped by --member-fe; defaults to the first.
    #[arg(long)]
    fe_reference: Option<String>,
    /// Comma-separated estimators out of hc0, cr-dyad, dcr.
    #[arg(long, value_delimiter = ',', default_value = "hc0,cr-dyad,dcr")]
    estimators: Vec<String>,
    /// Scale SEs by sqrt(N/(N-1)) and test against t(N-1).
    #[arg(long)]
    small_sample: bool,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Key explanatory variables to compare across estimators.
    #[arg(long, value_delimiter = ',')]
    kev: Vec<String>,
    /// Baseline estimator for the standard-error ratio.
    #[arg(long)]
    baseline: Option<String>,
    /// Study identifier on emitted KEV records; defaults to the data stem.
    #[arg(long)]
    study: Option<String>,
    /// Drop rows with empty cells instead of failing.
    #[arg(long)]
    drop_incomplete: bool,
    /// Output stem; artifacts are <stem>.<estimator>.json etc. Defaults
    /// to the data path without extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// PSD-repair provenance carried into the JSON artifact.
#[derive(Serialize)]
struct VcovDiagnostics {
    psd_repaired: bool,
    negative_eigenvalues_truncated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_eigenvalue_before_repair: Option<f64>,
}

#[derive(Serialize)]
struct FitArtifact {
    estimator: EstimatorKind,
    vcov: VcovDiagnostics,
    table: InferenceTable,
}

fn parse_estimators(raw: &[String]) -> Result<Vec<EstimatorKind>> {
    let mut kinds = Vec::new();
    for token in raw {
        let kind: EstimatorKind = token.parse()?;
        if !matches!(
            kind,
            EstimatorKind::Hc0 | EstimatorKind::CrDyad | EstimatorKind::Dcr
        ) {
            return Err(Error::Config(format!(
                "estimator `{kind}` is not available here; choose from hc0, cr-dyad, dcr"
            )));
        }
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(Error::Config("at least one estimator is required".into()));
    }
    Ok(kinds)
}

fn default_stem(data: &Path) -> PathBuf {
    data.with_extension("")
}

pub fn run(args: FitArgs) -> Result<()> {
    let kinds = parse_estimators(&args.estimators)?;
    let baseline = args
        .baseline
        .as_deref()
        .map(|b| b.parse::<EstimatorKind>())
        .transpose()?;
    if !args.kev.is_empty() {
        let baseline = baseline
            .ok_or_else(|| Error::Config("--kev requires --baseline <estimator>".into()))?;
        if !kinds.contains(&baseline) {
            return Err(Error::Config(format!(
                "baseline `{baseline}` is not among the requested estimators"
            )));
        }
        if !kinds.contains(&EstimatorKind::Dcr) {
            return Err(Error::Config(
                "--kev compares against dcr, which is not among the requested estimators".into(),
            ));
        }
    }

    let schema = CsvSchema {
        member_a: args.member_a.clone(),
        member_b: args.member_b.clone(),
        time: args.time.clone(),
        outcome: args.outcome.clone(),
        regressors: args.regressors.clone(),
    };
    let data = DyadDataset::load_csv(
        &args.data,
        &schema,
        LoadOptions {
            drop_incomplete: args.drop_incomplete,
        },
    )?;

    let reference_member = args
        .fe_reference
        .as_deref()
        .map(|raw| {
            MemberId::new(raw)
                .ok_or_else(|| Error::Config("--fe-reference must be non-empty".into()))
        })
        .transpose()?;
    let spec = DesignSpec {
        include_intercept: !args.no_intercept,
        member_fixed_effects: args.member_fe,
        reference_member,
    };
    let (x, names) = build_design(&data, &spec)?;
    let y = nalgebra::DVector::from_iterator(
        data.n(),
        data.observations().iter().map(|o| o.outcome),
    );
    let fit = fit_ols_named(&x, &y, names)?;

    let stem = args.out.clone().unwrap_or_else(|| default_stem(&args.data));
    let study = args.study.clone().unwrap_or_else(|| {
        stem.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "study".to_string())
    });

    let mut manifest = RunManifest::new("fit", stem.to_string_lossy().into_owned());
    manifest.data = Some(args.data.to_string_lossy().into_owned());
    manifest.schema = Some(schema);
    manifest.design = Some(DesignSummary {
        include_intercept: spec.include_intercept,
        member_fixed_effects: spec.member_fixed_effects,
        reference_member: spec.reference_member.as_ref().map(|m| m.as_str().to_string()),
    });
    manifest.estimators = Some(kinds.iter().map(|k| k.as_str().to_string()).collect());
    manifest.small_sample = Some(args.small_sample);
    manifest.level = Some(args.level);
    if !args.kev.is_empty() {
        manifest.kev = Some(args.kev.clone());
        manifest.baseline = baseline.map(|b| b.as_str().to_string());
        manifest.study = Some(study.clone());
    }
    manifest.drop_incomplete = Some(args.drop_incomplete);
    let labels = kinds
        .iter()
        .map(|k| k.as_str())
        .chain((!args.kev.is_empty()).then_some("kev"));
    for label in labels {
        for ext in ["json", "csv"] {
            manifest
                .outputs
                .push(artifact_path(&stem, label, ext).to_string_lossy().into_owned());
        }
    }

    let mut tables: Vec<(EstimatorKind, InferenceTable)> = Vec::new();
    for &kind in &kinds {
        let v: VcovEstimate = match kind {
            EstimatorKind::Hc0 => vcov_hc0(&fit),
            EstimatorKind::CrDyad => vcov_cr_dyad(&fit, &data)?,
            EstimatorKind::Dcr => vcov_dcr(&fit, &data)?,
            _ => unreachable!("filtered by parse_estimators"),
        };
        let table = if args.small_sample {
            infer_small_sample(&fit, &v, args.level, correction_units(kind, &data)?)?
        } else {
            infer(&fit, &v, args.level, None)?
        };
        let artifact = FitArtifact {
            estimator: kind,
            vcov: VcovDiagnostics {
                psd_repaired: v.psd_repaired,
                negative_eigenvalues_truncated: v.negative_eigenvalues_truncated,
                min_eigenvalue_before_repair: v.min_eigenvalue_before_repair,
            },
            table,
        };
        let json_path = artifact_path(&stem, kind.as_str(), "json");
        write_json_artifact(&json_path, &manifest, "fit", &artifact)?;
        write_csv_artifact(&artifact_path(&stem, kind.as_str(), "csv"), |w| {
            artifact.table.to_csv(w)
        })?;
        tables.push((kind, artifact.table));
    }

    if !args.kev.is_empty() {
        let baseline = baseline.expect("checked above");
        let baseline_table = &tables.iter().find(|(k, _)| *k == baseline).expect("computed").1;
        let dcr_table = &tables
            .iter()
            .find(|(k, _)| *k == EstimatorKind::Dcr)
            .expect("checked above")
            .1;
        let records = ser(baseline_table, dcr_table, &args.kev, &study)?;
        write_json_artifact(&artifact_path(&stem, "kev", "json"), &manifest, "records", &records)?;
        write_csv_artifact(&artifact_path(&stem, "kev", "csv"), |w| {
            kev_records_to_csv(&records, w)
        })?;
    }
    Ok(())
}

fn artifact_path(stem: &Path, label: &str, ext: &str) -> PathBuf {
    let mut name = stem
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    name.push('.');
    name.push_str(label);
    name.push('.');
    name.push_str(ext);
    stem.with_file_name(name)
}
