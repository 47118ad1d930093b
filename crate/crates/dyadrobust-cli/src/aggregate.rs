use std::path::{Path, PathBuf};

use clap::Args;
use dyadrobust::error::{Error, Result};
use dyadrobust::reanalysis::{aggregate_reports_to_csv, isfw_aggregate, KevRecord, Transition};

use crate::manifest::{write_csv_artifact, write_json_artifact, RunManifest};

#[derive(Args)]
pub struct AggregateArgs {
    /// CSV of KEV records, as written by `fit --kev`.
    #[arg(long)]
    data: PathBuf,
    /// Optional metadata column to group by; absent means one "All" group.
    #[arg(long)]
    group_by: Option<String>,
    /// Output stem; artifacts are <stem>.aggregate.json / .csv. Defaults
    /// to the data path without extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

const REQUIRED: [&str; 9] = [
    "study_id",
    "kev_name",
    "estimate",
    "original_se",
    "dcr_se",
    "original_p",
    "dcr_p",
    "ser",
    "transition",
];

fn read_records(path: &Path, group_by: Option<&str>) -> Result<(Vec<KevRecord>, Vec<String>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let mut columns = [0usize; 9];
    for (slot, name) in REQUIRED.iter().enumerate() {
        columns[slot] = index_of(name)?;
    }
    let group_column = group_by.map(index_of).transpose()?;

    let mut records = Vec::new();
    let mut groups = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let rownum = i + 1;
        let cell = |slot: usize| row.get(columns[slot]).unwrap_or("").trim();
        let required_f64 = |slot: usize| -> Result<f64> {
            cell(slot).parse().map_err(|_| Error::UnparsableCell {
                row: rownum,
                column: REQUIRED[slot].to_string(),
                value: cell(slot).to_string(),
            })
        };
        let optional_f64 = |slot: usize| -> Result<Option<f64>> {
            let raw = cell(slot);
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse().map(Some).map_err(|_| Error::UnparsableCell {
                row: rownum,
                column: REQUIRED[slot].to_string(),
                value: raw.to_string(),
            })
        };
        let transition = {
            let raw = cell(8);
            if raw.is_empty() {
                None
            } else {
                Some(raw.parse::<Transition>().map_err(|_| Error::UnparsableCell {
                    row: rownum,
                    column: "transition".to_string(),
                    value: raw.to_string(),
                })?)
            }
        };
        records.push(KevRecord {
            study_id: cell(0).to_string(),
            kev_name: cell(1).to_string(),
            estimate: required_f64(2)?,
            original_se: required_f64(3)?,
            dcr_se: required_f64(4)?,
            original_p: optional_f64(5)?,
            dcr_p: optional_f64(6)?,
            ser: optional_f64(7)?,
            transition,
        });
        groups.push(match group_column {
            Some(col) => row.get(col).unwrap_or("").trim().to_string(),
            None => "All".to_string(),
        });
    }
    Ok((records, groups))
}

pub fn run(args: AggregateArgs) -> Result<()> {
    let (records, groups) = read_records(&args.data, args.group_by.as_deref())?;
    let reports = isfw_aggregate(&records, |i, _| groups[i].clone())?;

    let stem = args.out.clone().unwrap_or_else(|| args.data.with_extension(""));
    let mut manifest = RunManifest::new("aggregate", stem.to_string_lossy().into_owned());
    manifest.data = Some(args.data.to_string_lossy().into_owned());
    manifest.group_by = args.group_by.clone();

    let name = |ext: &str| {
        stem.with_file_name(format!(
            "{}.aggregate.{ext}",
            stem.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
        ))
    };
    manifest.outputs = vec![
        name("json").to_string_lossy().into_owned(),
        name("csv").to_string_lossy().into_owned(),
    ];
    write_json_artifact(&name("json"), &manifest, "reports", &reports)?;
    write_csv_artifact(&name("csv"), |w| aggregate_reports_to_csv(&reports, w))?;
    Ok(())
}
