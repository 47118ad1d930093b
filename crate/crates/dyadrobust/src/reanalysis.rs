//! Reanalysis metrics: per-coefficient standard-error ratios, significance
//! transitions at the 5% level, and inverse study-frequency weighted (ISFW)
//! aggregation across studies.
//!
//! ISFW is an average of averages: within each study the designated key
//! explanatory variables (KEVs) are averaged first, then studies are
//! averaged with equal weight, so a study contributing twenty KEVs counts
//! no more than one contributing a single KEV.
//!
//! Records with an undefined ratio or transition (a zero standard error on
//! either side) are excluded from the corresponding aggregate and counted
//! in the report; exclusion is logged, never silent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::InferenceTable;

/// Strict threshold: p < 0.05 is "significant", p = 0.05 is not.
pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// Significance state before and after switching to the dyadic estimator:
/// first letter under the original SEs, second under DCR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Transition {
    Ss,
    Si,
    Is,
    Ii,
}

impl Transition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Transition::Ss => "SS",
            Transition::Si => "SI",
            Transition::Is => "IS",
            Transition::Ii => "II",
        }
    }
}

impl std::fmt::Display for Transition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Transition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Transition> {
        match s {
            "SS" => Ok(Transition::Ss),
            "SI" => Ok(Transition::Si),
            "IS" => Ok(Transition::Is),
            "II" => Ok(Transition::Ii),
            other => Err(Error::Config(format!(
                "unknown transition `{other}` (expected SS, SI, IS, or II)"
            ))),
        }
    }
}

/// Classifies a p-value pair. `S` means strictly below
/// [`SIGNIFICANCE_LEVEL`].
pub fn transition(original_p: f64, dcr_p: f64) -> Transition {
    match (original_p < SIGNIFICANCE_LEVEL, dcr_p < SIGNIFICANCE_LEVEL) {
        (true, true) => Transition::Ss,
        (true, false) => Transition::Si,
        (false, true) => Transition::Is,
        (false, false) => Transition::Ii,
    }
}

/// One key explanatory variable compared under the original and dyadic
/// estimators. `ser` and `transition` are absent when either side is
/// degenerate (zero SE).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KevRecord {
    pub study_id: String,
    pub kev_name: String,
    pub estimate: f64,
    pub original_se: f64,
    pub dcr_se: f64,
    pub original_p: Option<f64>,
    pub dcr_p: Option<f64>,
    pub ser: Option<f64>,
    pub transition: Option<Transition>,
}

/// Builds one record per KEV name from two inference tables over the same
/// fit. The baseline table supplies the denominator of the ratio.
pub fn ser(
    original: &InferenceTable,
    dcr: &InferenceTable,
    kev_names: &[String],
    study_id: &str,
) -> Result<Vec<KevRecord>> {
    let mut records = Vec::with_capacity(kev_names.len());
    for name in kev_names {
        let orig = original.get(name).ok_or_else(|| {
            Error::MismatchedCoefficients(format!("`{name}` missing from the baseline table"))
        })?;
        let new = dcr.get(name).ok_or_else(|| {
            Error::MismatchedCoefficients(format!("`{name}` missing from the comparison table"))
        })?;
        if orig.estimate.to_bits() != new.estimate.to_bits() {
            return Err(Error::MismatchedCoefficients(format!(
                "`{name}` has estimate {} in one table and {} in the other; \
                 both tables must come from the same fit",
                orig.estimate, new.estimate
            )));
        }
        let defined = !orig.zero_se && !new.zero_se;
        records.push(KevRecord {
            study_id: study_id.to_string(),
            kev_name: name.clone(),
            estimate: orig.estimate,
            original_se: orig.se,
            dcr_se: new.se,
            original_p: orig.p_value,
            dcr_p: new.p_value,
            ser: defined.then(|| new.se / orig.se),
            transition: match (orig.p_value, new.p_value) {
                (Some(a), Some(b)) => Some(transition(a, b)),
                _ => None,
            },
        });
    }
    Ok(records)
}

/// Per-group ISFW summary. Metric fields are absent when no study in the
/// group had a defined value for them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub group: String,
    pub n_studies: usize,
    pub n_kevs: usize,
    pub isfw_ser: Option<f64>,
    pub prop_ss: Option<f64>,
    pub prop_si: Option<f64>,
    pub prop_is: Option<f64>,
    pub prop_ii: Option<f64>,
    pub excluded_ser: usize,
    pub excluded_transition: usize,
}

impl AggregateReport {
    pub fn transition_proportions(&self) -> Option<[f64; 4]> {
        Some([self.prop_ss?, self.prop_si?, self.prop_is?, self.prop_ii?])
    }
}

/// Average of averages within each group: per-study means first, then an
/// equal-weight mean across studies. Groups are keyed by `group_of(index,
/// record)` and reported in key order.
pub fn isfw_aggregate(
    records: &[KevRecord],
    group_of: impl Fn(usize, &KevRecord) -> String,
) -> Result<Vec<AggregateReport>> {
    if records.is_empty() {
        return Err(Error::EmptyGroup("no records to aggregate".into()));
    }
    // group -> study -> record indices, all BTree-ordered for determinism.
    let mut groups: std::collections::BTreeMap<
        String,
        std::collections::BTreeMap<&str, Vec<usize>>,
    > = std::collections::BTreeMap::new();
    for (idx, record) in records.iter().enumerate() {
        groups
            .entry(group_of(idx, record))
            .or_default()
            .entry(record.study_id.as_str())
            .or_default()
            .push(idx);
    }

    let mut reports = Vec::with_capacity(groups.len());
    for (group, studies) in groups {
        let n_studies = studies.len();
        let mut n_kevs = 0;
        let mut excluded_ser = 0;
        let mut excluded_transition = 0;
        let mut ser_means = Vec::new();
        let mut prop_sums = [0.0; 4];
        let mut studies_with_transitions = 0usize;
        for indices in studies.values() {
            n_kevs += indices.len();
            let sers: Vec<f64> = indices
                .iter()
                .filter_map(|&i| records[i].ser)
                .collect();
            excluded_ser += indices.len() - sers.len();
            if !sers.is_empty() {
                ser_means.push(sers.iter().sum::<f64>() / sers.len() as f64);
            }
            let transitions: Vec<Transition> = indices
                .iter()
                .filter_map(|&i| records[i].transition)
                .collect();
            excluded_transition += indices.len() - transitions.len();
            if !transitions.is_empty() {
                studies_with_transitions += 1;
                let total = transitions.len() as f64;
                for t in transitions {
                    let slot = match t {
                        Transition::Ss => 0,
                        Transition::Si => 1,
                        Transition::Is => 2,
                        Transition::Ii => 3,
                    };
                    prop_sums[slot] += 1.0 / total;
                }
            }
        }
        if excluded_ser > 0 || excluded_transition > 0 {
            log::warn!(
                "group `{group}`: excluded {excluded_ser} undefined ratio(s) and \
                 {excluded_transition} undefined transition(s)"
            );
        }
        let isfw_ser = if ser_means.is_empty() {
            None
        } else {
            Some(ser_means.iter().sum::<f64>() / ser_means.len() as f64)
        };
        let props = if studies_with_transitions == 0 {
            [None; 4]
        } else {
            let d = studies_with_transitions as f64;
            [
                Some(prop_sums[0] / d),
                Some(prop_sums[1] / d),
                Some(prop_sums[2] / d),
                Some(prop_sums[3] / d),
            ]
        };
        reports.push(AggregateReport {
            group,
            n_studies,
            n_kevs,
            isfw_ser,
            prop_ss: props[0],
            prop_si: props[1],
            prop_is: props[2],
            prop_ii: props[3],
            excluded_ser,
            excluded_transition,
        });
    }
    Ok(reports)
}

/// Writes KEV records in a fixed column order; optional fields serialize
/// as empty cells.
pub fn kev_records_to_csv<W: std::io::Write>(records: &[KevRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "study_id",
        "kev_name",
        "estimate",
        "original_se",
        "dcr_se",
        "original_p",
        "dcr_p",
        "ser",
        "transition",
    ])?;
    let mut buf = ryu::Buffer::new();
    for r in records {
        w.write_record([
            r.study_id.clone(),
            r.kev_name.clone(),
            buf.format(r.estimate).to_string(),
            buf.format(r.original_se).to_string(),
            buf.format(r.dcr_se).to_string(),
            float_cell(&mut buf, r.original_p),
            float_cell(&mut buf, r.dcr_p),
            float_cell(&mut buf, r.ser),
            r.transition.map(|t| t.as_str().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn aggregate_reports_to_csv<W: std::io::Write>(
    reports: &[AggregateReport],
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "group",
        "n_studies",
        "n_kevs",
        "isfw_ser",
        "prop_ss",
        "prop_si",
        "prop_is",
        "prop_ii",
        "excluded_ser",
        "excluded_transition",
    ])?;
    let mut buf = ryu::Buffer::new();
    for r in reports {
        w.write_record([
            r.group.clone(),
            r.n_studies.to_string(),
            r.n_kevs.to_string(),
            float_cell(&mut buf, r.isfw_ser),
            float_cell(&mut buf, r.prop_ss),
            float_cell(&mut buf, r.prop_si),
            float_cell(&mut buf, r.prop_is),
            float_cell(&mut buf, r.prop_ii),
            r.excluded_ser.to_string(),
            r.excluded_transition.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn float_cell(buf: &mut ryu::Buffer, value: Option<f64>) -> String {
    value.map(|v| buf.format(v).to_string()).unwrap_or_default()
}
