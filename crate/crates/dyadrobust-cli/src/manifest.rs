//! Provenance block embedded verbatim in every JSON artifact. Contains
//! only inputs that determine the output bytes: thread counts, wall-clock
//! times, and argv order are deliberately absent so reruns and different
//! `--threads` values produce identical artifacts.

use dyadrobust::data::CsvSchema;
use dyadrobust::simulate::SimConfig;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct DesignSummary {
    pub include_intercept: bool,
    pub member_fixed_effects: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_member: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub subcommand: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schema: Option<CsvSchema>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub small_sample: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kev: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_incomplete: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
    pub out_stem: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, out_stem: String) -> RunManifest {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            subcommand,
            data: None,
            schema: None,
            design: None,
            estimators: None,
            small_sample: None,
            level: None,
            kev: None,
            baseline: None,
            study: None,
            drop_incomplete: None,
            group_by: None,
            seed: None,
            simulation: None,
            out_stem,
            outputs: Vec::new(),
        }
    }
}

/// Serializes a JSON artifact with the manifest embedded and writes it
/// with a trailing newline.
pub fn write_json_artifact<T: Serialize>(
    path: &std::path::Path,
    manifest: &RunManifest,
    key: &str,
    body: &T,
) -> dyadrobust::Result<()> {
    let mut doc = serde_json::Map::new();
    doc.insert(
        "manifest".to_string(),
        serde_json::to_value(manifest).expect("manifest serializes"),
    );
    doc.insert(
        key.to_string(),
        serde_json::to_value(body).map_err(|e| {
            dyadrobust::Error::Config(format!("failed to serialize artifact body: {e}"))
        })?,
    );
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(doc))
        .expect("json document serializes");
    std::fs::write(path, text + "\n")?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn write_csv_artifact(
    path: &std::path::Path,
    render: impl FnOnce(&mut Vec<u8>) -> dyadrobust::Result<()>,
) -> dyadrobust::Result<()> {
    let mut bytes = Vec::new();
    render(&mut bytes)?;
    std::fs::write(path, bytes)?;
    println!("wrote {}", path.display());
    Ok(())
}
