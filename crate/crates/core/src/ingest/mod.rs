//! Loading, validating, filtering and splitting material records.
//!
//! Records travel as JSON lines, one object per line, keyed by the names in
//! [`FEATURE_NAMES`] plus `band_gap`. [`synth_generate`] produces records with
//! a known band-gap law for experiments that do not have a real database at
//! hand.

mod record;
mod split;
mod synth;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub use record::{Features, MaterialRecord, FEATURE_NAMES};
pub use split::{stratified_split, stratified_split_values, Splits};
pub use synth::{synth_generate, synthetic_band_gap, SYNTH_NOISE_SD};

/// Where a [`RecordSet`] came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    File(PathBuf),
    Synthetic { n: usize, seed: u64 },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::File(p) => write!(f, "{}", p.display()),
            Provenance::Synthetic { .. } => f.write_str("synthetic"),
        }
    }
}

/// An ordered collection of records.
///
/// `source_index[i]` is the position of `records[i]` in the original source,
/// so filtered sets can still be traced back to input lines.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    pub records: Vec<MaterialRecord>,
    pub source_index: Vec<usize>,
    pub provenance: Provenance,
}

impl RecordSet {
    pub fn new(records: Vec<MaterialRecord>, provenance: Provenance) -> Self {
        let source_index = (0..records.len()).collect();
        RecordSet {
            records,
            source_index,
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn band_gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.band_gap).collect()
    }

    /// Records at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Vec<&MaterialRecord> {
        indices.iter().map(|&i| &self.records[i]).collect()
    }

    /// Writes the set as JSON lines.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Parses one JSON-lines record. `line` is 1-based and only used in errors.
pub fn parse_record_line(text: &str, line: usize) -> Result<MaterialRecord> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Schema {
        line,
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Schema {
        line,
        message: "expected a JSON object".into(),
    })?;
    for field in FEATURE_NAMES.iter().chain(std::iter::once(&"band_gap")) {
        if !obj.contains_key(*field) {
            return Err(Error::MissingField {
                line,
                field: field.to_string(),
            });
        }
    }
    if let Some(extra) = obj
        .keys()
        .find(|k| *k != "band_gap" && !FEATURE_NAMES.contains(&k.as_str()))
    {
        return Err(Error::Schema {
            line,
            message: format!("unknown field `{extra}`"),
        });
    }
    let record: MaterialRecord = serde_json::from_value(value).map_err(|e| Error::Schema {
        line,
        message: e.to_string(),
    })?;
    record
        .validate()
        .map_err(|message| Error::Validation { line, message })?;
    Ok(record)
}

/// Loads a JSON-lines record file. Blank lines are skipped.
pub fn load_records(path: impl AsRef<Path>) -> Result<RecordSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record_line(line, i + 1)?);
    }
    Ok(RecordSet::new(records, Provenance::File(path.to_path_buf())))
}

/// Keeps records with `lo <= band_gap <= hi`, preserving order.
pub fn filter_bandgap(rs: &RecordSet, lo: f64, hi: f64) -> RecordSet {
    debug_assert!(lo <= hi, "filter bounds out of order");
    let (records, source_index) = rs
        .records
        .iter()
        .zip(&rs.source_index)
        .filter(|(r, _)| lo <= r.band_gap && r.band_gap <= hi)
        .map(|(r, &i)| (r.clone(), i))
        .unzip();
    RecordSet {
        records,
        source_index,
        provenance: rs.provenance.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_gaps(gaps: &[f64]) -> RecordSet {
        let base = synth_generate(gaps.len(), 1);
        let records = base
            .records
            .into_iter()
            .zip(gaps)
            .map(|(mut r, &g)| {
                r.band_gap = g;
                r
            })
            .collect();
        RecordSet::new(records, Provenance::Synthetic { n: gaps.len(), seed: 1 })
    }

    #[test]
    fn filter_bounds_are_inclusive() {
        let rs = with_gaps(&[0.0, 2.5, 5.0, 5.1]);
        let kept = filter_bandgap(&rs, 0.0, 5.0);
        assert_eq!(kept.band_gaps(), vec![0.0, 2.5, 5.0]);
        assert_eq!(kept.source_index, vec![0, 1, 2]);
    }

    #[test]
    fn filter_degenerate_interval() {
        let rs = with_gaps(&[0.0, 1.0]);
        assert_eq!(filter_bandgap(&rs, 0.0, 0.0).band_gaps(), vec![0.0]);
    }

    #[test]
    fn filter_empty_input() {
        let rs = with_gaps(&[]);
        assert!(filter_bandgap(&rs, 0.0, 5.0).is_empty());
    }

    #[test]
    fn filter_is_idempotent() {
        let rs = with_gaps(&[-1.0, 0.3, 4.9, 7.0, 2.0]);
        let once = filter_bandgap(&rs, 0.0, 5.0);
        assert_eq!(filter_bandgap(&once, 0.0, 5.0), once);
    }

    #[test]
    fn missing_field_names_field_and_line() {
        let rs = synth_generate(1, 3);
        let mut v = serde_json::to_value(&rs.records[0]).unwrap();
        v.as_object_mut().unwrap().remove("geometry");
        let err = parse_record_line(&v.to_string(), 7).unwrap_err();
        match err {
            Error::MissingField { line, field } => {
                assert_eq!(line, 7);
                assert_eq!(field, "geometry");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn unknown_field_is_schema_error() {
        let rs = synth_generate(1, 3);
        let mut v = serde_json::to_value(&rs.records[0]).unwrap();
        v.as_object_mut().unwrap().insert("colour".into(), Value::from("red"));
        assert!(matches!(
            parse_record_line(&v.to_string(), 1),
            Err(Error::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn length_mismatch_is_validation_error() {
        let rs = synth_generate(1, 3);
        let mut v = serde_json::to_value(&rs.records[0]).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.insert("species".into(), serde_json::json!(["A", "B", "C"]));
        obj.insert("composition".into(), serde_json::json!([1, 3]));
        assert!(matches!(
            parse_record_line(&v.to_string(), 4),
            Err(Error::Validation { line: 4, .. })
        ));
    }
}
