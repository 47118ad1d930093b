//! Dyadic dataset ingestion and canonicalization.
//!
//! Observations are undirected dyads: an unordered pair of members observed
//! at a time period with an outcome and a regressor vector. Input pairs are
//! canonicalized so that `member_a < member_b` (lexicographic order on the
//! trimmed identity), which makes directed and undirected encodings of the
//! same data collapse to identical datasets. Members are indexed densely,
//! `0..N-1`, in order of first appearance.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque member identity (for instance a country code).
///
/// Identities compare by exact string equality after trimming surrounding
/// whitespace; the canonical dyad order is the lexicographic order on the
/// trimmed string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MemberId(String);

impl MemberId {
    /// Returns `None` when the identity is empty after trimming.
    pub fn new(raw: &str) -> Option<MemberId> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            None
        } else {
            Some(MemberId(trimmed.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One dyad-period observation in canonical undirected form.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadObservation {
    /// Canonically the smaller member: `member_a < member_b` always holds.
    pub member_a: MemberId,
    pub member_b: MemberId,
    pub time: i64,
    pub outcome: f64,
    pub regressors: Vec<f64>,
}

impl DyadObservation {
    /// Builds the canonical form, swapping the pair when needed.
    /// Returns `None` for self-dyads.
    pub fn new(
        first: MemberId,
        second: MemberId,
        time: i64,
        outcome: f64,
        regressors: Vec<f64>,
    ) -> Option<DyadObservation> {
        match first.cmp(&second) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some(DyadObservation {
                member_a: first,
                member_b: second,
                time,
                outcome,
                regressors,
            }),
            std::cmp::Ordering::Greater => Some(DyadObservation {
                member_a: second,
                member_b: first,
                time,
                outcome,
                regressors,
            }),
        }
    }
}

/// Column-name map for CSV ingestion. When `time` is `None` each row is
/// assigned a unique period index (its 0-based row number), so no two rows
/// form a repeated dyad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub member_a: String,
    pub member_b: String,
    pub time: Option<String>,
    pub outcome: String,
    pub regressors: Vec<String>,
}

impl CsvSchema {
    /// Conventional column names: `member_a,member_b,time,outcome,<regressors>`.
    pub fn canonical(regressors: Vec<String>) -> CsvSchema {
        CsvSchema {
            member_a: "member_a".to_string(),
            member_b: "member_b".to_string(),
            time: Some("time".to_string()),
            outcome: "outcome".to_string(),
            regressors,
        }
    }
}

/// Ingestion behavior for incomplete rows.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Drop rows with empty cells instead of failing. The number of dropped
    /// rows is logged. Non-empty cells that fail to parse are always errors.
    pub drop_incomplete: bool,
}

/// Canonicalized dyadic dataset with a dense member index.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadDataset {
    observations: Vec<DyadObservation>,
    members: Vec<MemberId>,
    // Dense member indices of each observation, aligned with `observations`.
    pairs: Vec<(usize, usize)>,
    regressor_names: Vec<String>,
}

impl DyadDataset {
    /// Validates and indexes a set of canonical observations. Regressor
    /// names default to `x1..xp` when not supplied via [`DyadDataset::with_names`].
    ///
    /// Fails on an empty set, inconsistent regressor lengths, or non-finite
    /// values. Input order is preserved; members are indexed by first
    /// appearance (`member_a` before `member_b` within a row).
    pub fn new(observations: Vec<DyadObservation>) -> Result<DyadDataset> {
        let p_raw = observations.first().map(|o| o.regressors.len());
        let p_raw = match p_raw {
            None => return Err(Error::EmptyDataset),
            Some(p) => p,
        };
        let names = (1..=p_raw).map(|j| format!("x{j}")).collect();
        DyadDataset::with_names(observations, names)
    }

    /// As [`DyadDataset::new`] with explicit regressor names.
    pub fn with_names(
        observations: Vec<DyadObservation>,
        regressor_names: Vec<String>,
    ) -> Result<DyadDataset> {
        if observations.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p_raw = regressor_names.len();
        for (row, obs) in observations.iter().enumerate() {
            match obs.member_a.cmp(&obs.member_b) {
                std::cmp::Ordering::Equal => return Err(Error::SelfDyad(row + 1)),
                std::cmp::Ordering::Greater => {
                    return Err(Error::Config(format!(
                        "row {}: members not in canonical order; construct via DyadObservation::new",
                        row + 1
                    )))
                }
                std::cmp::Ordering::Less => {}
            }
            if obs.regressors.len() != p_raw {
                return Err(Error::Config(format!(
                    "row {}: expected {} regressors, found {}",
                    row + 1,
                    p_raw,
                    obs.regressors.len()
                )));
            }
            if !obs.outcome.is_finite() || obs.regressors.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("row {}: non-finite value", row + 1)));
            }
        }
        let mut members: Vec<MemberId> = Vec::new();
        let mut index: BTreeMap<MemberId, usize> = BTreeMap::new();
        let mut pairs = Vec::with_capacity(observations.len());
        for obs in &observations {
            let mut dense = [0usize; 2];
            for (slot, m) in [&obs.member_a, &obs.member_b].into_iter().enumerate() {
                dense[slot] = match index.get(m) {
                    Some(&i) => i,
                    None => {
                        members.push(m.clone());
                        index.insert(m.clone(), members.len() - 1);
                        members.len() - 1
                    }
                };
            }
            pairs.push((dense[0], dense[1]));
        }
        Ok(DyadDataset {
            observations,
            members,
            pairs,
            regressor_names,
        })
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    /// Number of distinct members N.
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn p_raw(&self) -> usize {
        self.regressor_names.len()
    }

    pub fn observations(&self) -> &[DyadObservation] {
        &self.observations
    }

    /// Members in dense-index order (order of first appearance).
    pub fn members(&self) -> &[MemberId] {
        &self.members
    }

    pub fn regressor_names(&self) -> &[String] {
        &self.regressor_names
    }

    pub fn member_index(&self, id: &MemberId) -> Option<usize> {
        self.members.iter().position(|m| m == id)
    }

    /// Dense member indices `(a, b)` of observation `k`.
    pub fn member_pair(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }

    /// Per-member lists of incident observation indices, in member order.
    /// Every observation appears in exactly two lists, so the lengths sum
    /// to 2n.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut incident = vec![Vec::new(); self.members.len()];
        for (k, &(a, b)) in self.pairs.iter().enumerate() {
            incident[a].push(k);
            incident[b].push(k);
        }
        incident
    }

    /// Loads a CSV file (header row required, RFC 4180 quoting).
    pub fn load_csv(path: &Path, schema: &CsvSchema, options: LoadOptions) -> Result<DyadDataset> {
        let file = std::fs::File::open(path)?;
        DyadDataset::from_csv_reader(file, schema, options)
    }

    pub fn from_csv_reader<R: Read>(
        reader: R,
        schema: &CsvSchema,
        options: LoadOptions,
    ) -> Result<DyadDataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let a_col = col(&schema.member_a)?;
        let b_col = col(&schema.member_b)?;
        let t_col = match &schema.time {
            Some(name) => Some(col(name)?),
            None => None,
        };
        let y_col = col(&schema.outcome)?;
        let x_cols: Vec<(usize, &String)> = schema
            .regressors
            .iter()
            .map(|name| Ok((col(name)?, name)))
            .collect::<Result<_>>()?;

        let mut observations = Vec::new();
        let mut dropped = 0usize;
        'rows: for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row = i + 1;
            let cell = |c: usize| record.get(c).unwrap_or("");
            if options.drop_incomplete {
                let mut cells = vec![cell(a_col), cell(b_col), cell(y_col)];
                if let Some(t) = t_col {
                    cells.push(cell(t));
                }
                cells.extend(x_cols.iter().map(|&(c, _)| cell(c)));
                if cells.iter().any(|v| v.trim().is_empty()) {
                    dropped += 1;
                    continue 'rows;
                }
            }
            let parse_f64 = |c: usize, name: &str| -> Result<f64> {
                let raw = cell(c);
                match raw.trim().parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(Error::UnparsableCell {
                        row,
                        column: name.to_string(),
                        value: raw.to_string(),
                    }),
                }
            };
            let member = |c: usize, name: &str| -> Result<MemberId> {
                MemberId::new(cell(c)).ok_or_else(|| Error::UnparsableCell {
                    row,
                    column: name.to_string(),
                    value: cell(c).to_string(),
                })
            };
            let a = member(a_col, &schema.member_a)?;
            let b = member(b_col, &schema.member_b)?;
            let time = match t_col {
                Some(c) => {
                    let name = schema.time.as_deref().unwrap_or("time");
                    let raw = cell(c);
                    raw.trim().parse::<i64>().map_err(|_| Error::UnparsableCell {
                        row,
                        column: name.to_string(),
                        value: raw.to_string(),
                    })?
                }
                None => i as i64,
            };
            let outcome = parse_f64(y_col, &schema.outcome)?;
            let regressors = x_cols
                .iter()
                .map(|&(c, name)| parse_f64(c, name))
                .collect::<Result<Vec<f64>>>()?;
            let obs = DyadObservation::new(a, b, time, outcome, regressors)
                .ok_or(Error::SelfDyad(row))?;
            observations.push(obs);
        }
        if dropped > 0 {
            log::warn!("dropped {dropped} incomplete rows");
        }
        DyadDataset::with_names(observations, schema.regressors.clone())
    }

    /// Writes the canonical CSV form: header
    /// `member_a,member_b,time,outcome,<regressor names>`. Loading the
    /// output with the matching schema reproduces this dataset exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![
            "member_a".to_string(),
            "member_b".to_string(),
            "time".to_string(),
            "outcome".to_string(),
        ];
        header.extend(self.regressor_names.iter().cloned());
        wtr.write_record(&header)?;
        // Shortest round-trip formatting keeps load -> write -> load exact.
        let mut buf = ryu::Buffer::new();
        for obs in &self.observations {
            let mut record = vec![
                obs.member_a.as_str().to_string(),
                obs.member_b.as_str().to_string(),
                obs.time.to_string(),
                buf.format(obs.outcome).to_string(),
            ];
            record.extend(obs.regressors.iter().map(|&v| buf.format(v).to_string()));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Schema matching [`DyadDataset::write_csv`] output.
    pub fn canonical_schema(&self) -> CsvSchema {
        CsvSchema::canonical(self.regressor_names.clone())
    }
}

/// Design-matrix layout: intercept first, then raw regressors, then member
/// fixed-effect dummies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub include_intercept: bool,
    /// Adds one participation dummy per member (1 when the member is either
    /// side of the dyad), omitting a reference member to keep the design
    /// full rank alongside the intercept.
    pub member_fixed_effects: bool,
    /// Reference member to drop; defaults to the first indexed member.
    pub reference_member: Option<MemberId>,
}

impl Default for DesignSpec {
    fn default() -> DesignSpec {
        DesignSpec {
            include_intercept: true,
            member_fixed_effects: false,
            reference_member: None,
        }
    }
}

/// Materializes the design matrix and its column names.
///
/// `p = p_raw + intercept + (N - 1 if member fixed effects)`. Rank is not
/// checked here; deficient designs surface as `RankDeficient` at fit time.
pub fn build_design(data: &DyadDataset, spec: &DesignSpec) -> Result<(DMatrix<f64>, Vec<String>)> {
    let n = data.n();
    let p_raw = data.p_raw();
    let reference = if spec.member_fixed_effects {
        let r = match &spec.reference_member {
            Some(id) => data
                .member_index(id)
                .ok_or_else(|| Error::Config(format!("reference member `{id}` not in dataset")))?,
            None => 0,
        };
        Some(r)
    } else {
        None
    };
    let n_fe = if spec.member_fixed_effects {
        data.n_members() - 1
    } else {
        0
    };
    let p = p_raw + usize::from(spec.include_intercept) + n_fe;

    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut names = Vec::with_capacity(p);
    let mut j0 = 0;
    if spec.include_intercept {
        names.push("intercept".to_string());
        for k in 0..n {
            x[(k, 0)] = 1.0;
        }
        j0 = 1;
    }
    names.extend(data.regressor_names().iter().cloned());
    for (k, obs) in data.observations().iter().enumerate() {
        for (j, &v) in obs.regressors.iter().enumerate() {
            x[(k, j0 + j)] = v;
        }
    }
    if let Some(reference) = reference {
        let mut fe_col = j0 + p_raw;
        let mut fe_of_member = vec![None; data.n_members()];
        for (m, _) in data.members().iter().enumerate() {
            if m == reference {
                continue;
            }
            names.push(format!("fe_{}", data.members()[m]));
            fe_of_member[m] = Some(fe_col);
            fe_col += 1;
        }
        for k in 0..n {
            let (a, b) = data.member_pair(k);
            for m in [a, b] {
                if let Some(col) = fe_of_member[m] {
                    x[(k, col)] = 1.0;
                }
            }
        }
    }
    Ok((x, names))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn mid(s: &str) -> MemberId {
        MemberId::new(s).unwrap()
    }

    /// Four observations on three members: dyads (1,2), (1,2), (1,3), (2,3)
    /// with x = 0,1,2,3 and y = 0,1,2,3.5.
    pub(crate) fn fixture_d1() -> DyadDataset {
        let rows = [
            ("1", "2", 0, 0.0, 0.0),
            ("1", "2", 1, 1.0, 1.0),
            ("1", "3", 0, 2.0, 2.0),
            ("2", "3", 0, 3.5, 3.0),
        ];
        let observations = rows
            .iter()
            .map(|&(a, b, t, y, x)| {
                DyadObservation::new(mid(a), mid(b), t, y, vec![x]).unwrap()
            })
            .collect();
        DyadDataset::new(observations).unwrap()
    }

    #[test]
    fn canonicalizes_member_order() {
        let obs = DyadObservation::new(mid("US"), mid("UK"), 1, 3.5, vec![1.0]).unwrap();
        assert_eq!(obs.member_a, mid("UK"));
        assert_eq!(obs.member_b, mid("US"));
        assert_eq!(obs.outcome, 3.5);
    }

    #[test]
    fn rejects_self_dyads() {
        assert!(DyadObservation::new(mid("US"), mid("US"), 1, 1.0, vec![0.0]).is_none());
        assert!(DyadObservation::new(mid("US"), mid(" US "), 1, 1.0, vec![0.0]).is_none());
    }

    #[test]
    fn csv_schema_remaps_and_canonicalizes() {
        let csv = "b,a,t,y,x1\nUK,US,1,3.5,1.0\n";
        let schema = CsvSchema {
            member_a: "a".to_string(),
            member_b: "b".to_string(),
            time: Some("t".to_string()),
            outcome: "y".to_string(),
            regressors: vec!["x1".to_string()],
        };
        let data =
            DyadDataset::from_csv_reader(csv.as_bytes(), &schema, LoadOptions::default()).unwrap();
        assert_eq!(data.n(), 1);
        let obs = &data.observations()[0];
        assert_eq!(obs.member_a, mid("UK"));
        assert_eq!(obs.member_b, mid("US"));
        assert_eq!(obs.outcome, 3.5);
        assert_eq!(obs.regressors, vec![1.0]);
    }

    #[test]
    fn csv_self_dyad_is_an_error() {
        let csv = "a,b,t,y,x1\nUS,US,1,1.0,0.0\n";
        let schema = CsvSchema {
            member_a: "a".to_string(),
            member_b: "b".to_string(),
            time: Some("t".to_string()),
            outcome: "y".to_string(),
            regressors: vec!["x1".to_string()],
        };
        let err = DyadDataset::from_csv_reader(csv.as_bytes(), &schema, LoadOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::SelfDyad(1)));
    }

    #[test]
    fn csv_missing_column_is_an_error() {
        let csv = "a,b,t,y\nUK,US,1,3.5\n";
        let schema = CsvSchema {
            member_a: "a".to_string(),
            member_b: "b".to_string(),
            time: Some("t".to_string()),
            outcome: "y".to_string(),
            regressors: vec!["x1".to_string()],
        };
        let err = DyadDataset::from_csv_reader(csv.as_bytes(), &schema, LoadOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "x1"));
    }

    #[test]
    fn csv_unparsable_cell_reports_row_and_column() {
        let csv = "a,b,t,y,x1\nUK,US,1,3.5,1.0\nUK,FR,1,oops,0.0\n";
        let schema = CsvSchema {
            member_a: "a".to_string(),
            member_b: "b".to_string(),
            time: Some("t".to_string()),
            outcome: "y".to_string(),
            regressors: vec!["x1".to_string()],
        };
        let err = DyadDataset::from_csv_reader(csv.as_bytes(), &schema, LoadOptions::default())
            .unwrap_err();
        match err {
            Error::UnparsableCell { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
                assert_eq!(value, "oops");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn drop_incomplete_skips_empty_cells() {
        let csv = "a,b,t,y,x1\nUK,US,1,3.5,1.0\nUK,FR,1,,0.0\nFR,US,2,1.0,2.0\n";
        let schema = CsvSchema {
            member_a: "a".to_string(),
            member_b: "b".to_string(),
            time: Some("t".to_string()),
            outcome: "y".to_string(),
            regressors: vec!["x1".to_string()],
        };
        let strict = DyadDataset::from_csv_reader(csv.as_bytes(), &schema, LoadOptions::default());
        assert!(matches!(strict, Err(Error::UnparsableCell { row: 2, .. })));
        let lenient = DyadDataset::from_csv_reader(
            csv.as_bytes(),
            &schema,
            LoadOptions {
                drop_incomplete: true,
            },
        )
        .unwrap();
        assert_eq!(lenient.n(), 2);
    }

    #[test]
    fn fixture_d1_counts() {
        let data = fixture_d1();
        assert_eq!(data.n(), 4);
        assert_eq!(data.n_members(), 3);
        assert_eq!(data.p_raw(), 1);
    }

    #[test]
    fn incidence_enumerates_member_observations() {
        let data = fixture_d1();
        let inc = data.incidence();
        assert_eq!(inc[0], vec![0, 1, 2]); // member "1"
        assert_eq!(inc[1], vec![0, 1, 3]); // member "2"
        assert_eq!(inc[2], vec![2, 3]); // member "3"
        let total: usize = inc.iter().map(Vec::len).sum();
        assert_eq!(total, 2 * data.n());
    }

    #[test]
    fn incidence_single_observation() {
        let data = DyadDataset::new(vec![
            DyadObservation::new(mid("1"), mid("2"), 0, 1.0, vec![]).unwrap(),
        ])
        .unwrap();
        assert_eq!(data.incidence(), vec![vec![0], vec![0]]);
    }

    #[test]
    fn design_with_intercept_only_regressor() {
        let data = fixture_d1();
        let (x, names) = build_design(&data, &DesignSpec::default()).unwrap();
        assert_eq!(names, vec!["intercept".to_string(), "x1".to_string()]);
        let expected = DMatrix::from_row_slice(4, 2, &[1., 0., 1., 1., 1., 2., 1., 3.]);
        assert_eq!(x, expected);
    }

    #[test]
    fn design_member_fixed_effects() {
        let data = fixture_d1();
        let spec = DesignSpec {
            include_intercept: true,
            member_fixed_effects: true,
            reference_member: Some(mid("3")),
        };
        let (x, names) = build_design(&data, &spec).unwrap();
        assert_eq!(names, vec!["intercept", "x1", "fe_1", "fe_2"]);
        assert_eq!(x.ncols(), 4);
        // Dyad (1,2) participates in both retained fixed effects.
        assert_eq!(x[(0, 2)], 1.0);
        assert_eq!(x[(0, 3)], 1.0);
        // Dyad (1,3): member 3 is the reference, so only fe_1 is set.
        assert_eq!(x[(2, 2)], 1.0);
        assert_eq!(x[(2, 3)], 0.0);
    }

    #[test]
    fn design_intercept_only_is_all_ones() {
        let observations = vec![
            DyadObservation::new(mid("1"), mid("2"), 0, 1.0, vec![]).unwrap(),
            DyadObservation::new(mid("2"), mid("3"), 0, 2.0, vec![]).unwrap(),
        ];
        let data = DyadDataset::new(observations).unwrap();
        let (x, names) = build_design(&data, &DesignSpec::default()).unwrap();
        assert_eq!(names, vec!["intercept"]);
        assert_eq!(x, DMatrix::from_element(2, 1, 1.0));
    }

    #[test]
    fn csv_round_trip_is_identity() {
        let data = fixture_d1();
        let mut bytes = Vec::new();
        data.write_csv(&mut bytes).unwrap();
        let reloaded = DyadDataset::from_csv_reader(
            bytes.as_slice(),
            &data.canonical_schema(),
            LoadOptions::default(),
        )
        .unwrap();
        assert_eq!(reloaded, data);
    }

    #[test]
    fn directed_input_collapses_to_one_dataset() {
        let forward = DyadDataset::new(vec![
            DyadObservation::new(mid("FR"), mid("US"), 0, 1.0, vec![2.0]).unwrap(),
        ])
        .unwrap();
        let reversed = DyadDataset::new(vec![
            DyadObservation::new(mid("US"), mid("FR"), 0, 1.0, vec![2.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(forward, reversed);
    }
}
