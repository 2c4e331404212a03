//! CSV readers and writers for breath-feature tables and heartbeat rows.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! `f64` exactly.

use std::path::Path;

use crate::features::{normalize_length, FeatureMatrix, BREATH_FEATURES, ECG_LENGTH};
use crate::synth::{BREATH_CLASSES, ECG_BINARY_CLASSES, ECG_FIVE_CLASSES};
use crate::{Error, Result};

pub const PATIENT_COLUMN: &str = "patient_id";
pub const LABEL_COLUMN: &str = "label";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

fn reader(path: &Path, headers: bool) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(headers).flexible(!headers).trim(csv::Trim::All).from_reader(file))
}

fn parse_cell(v: &str, row: usize, col: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::Data(format!("row {row}, column {col:?}: cannot parse {v:?} as a number")))?;
    if !x.is_finite() {
        return Err(Error::Data(format!("row {row}, column {col:?}: value {v:?} is not finite")));
    }
    Ok(x)
}

/// Known class vocabularies, tried in order when reading a generic table.
const CLASS_SETS: [&[&str]; 3] = [&BREATH_CLASSES, &ECG_FIVE_CLASSES, &ECG_BINARY_CLASSES];

struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<f64>>,
    groups: Option<Vec<String>>,
    labels: Vec<String>,
}

fn read_table(path: &Path) -> Result<Table> {
    let mut rdr = reader(path, true)?;
    let header: Vec<String> = rdr.headers().map_err(|e| csv_err(path, e))?.iter().map(str::to_string).collect();
    let label_at = header
        .iter()
        .position(|h| h == LABEL_COLUMN)
        .ok_or_else(|| Error::Data(format!("{}: missing required column {LABEL_COLUMN:?}", path.display())))?;
    let group_at = header.iter().position(|h| h == PATIENT_COLUMN);
    let feature_at: Vec<usize> = (0..header.len()).filter(|&i| i != label_at && Some(i) != group_at).collect();
    let mut t = Table {
        columns: feature_at.iter().map(|&i| header[i].clone()).collect(),
        rows: Vec::new(),
        groups: group_at.map(|_| Vec::new()),
        labels: Vec::new(),
    };
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = r + 1;
        let row_vals = feature_at
            .iter()
            .map(|&i| parse_cell(rec.get(i).unwrap_or(""), row, &header[i]))
            .collect::<Result<Vec<_>>>()?;
        t.rows.push(row_vals);
        t.labels.push(rec.get(label_at).unwrap_or("").to_string());
        if let (Some(g), Some(gi)) = (t.groups.as_mut(), group_at) {
            g.push(rec.get(gi).unwrap_or("").to_string());
        }
    }
    Ok(t)
}

fn label_ids(labels: &[String], classes: &[String]) -> Result<Vec<usize>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| {
            classes
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| Error::Data(format!("row {}: unknown label {l:?}", i + 1)))
        })
        .collect()
}

/// Breath feature table with the eleven breath feature columns, `patient_id` and `label`.
pub fn load_breath_csv(path: &Path) -> Result<FeatureMatrix> {
    let t = read_table(path)?;
    if t.groups.is_none() {
        return Err(Error::Data(format!("{}: missing required column {PATIENT_COLUMN:?}", path.display())));
    }
    let classes: Vec<String> = BREATH_CLASSES.iter().map(|s| s.to_string()).collect();
    let labels = label_ids(&t.labels, &classes)?;
    let m = FeatureMatrix::new(t.columns, t.rows, labels, classes, t.groups)?;
    m.select_columns(&BREATH_FEATURES)
}

/// Any table with a `label` column; all other columns except `patient_id` are features.
pub fn load_feature_csv(path: &Path) -> Result<FeatureMatrix> {
    let t = read_table(path)?;
    let classes: Vec<String> = match CLASS_SETS.iter().find(|set| t.labels.iter().all(|l| set.contains(&l.as_str()))) {
        Some(set) => set.iter().map(|s| s.to_string()).collect(),
        None => {
            let mut c = t.labels.clone();
            c.sort();
            c.dedup();
            c
        }
    };
    let labels = label_ids(&t.labels, &classes)?;
    FeatureMatrix::new(t.columns, t.rows, labels, classes, t.groups)
}

/// Writes feature columns, then `patient_id` when groups are present, then `label`.
pub fn write_feature_csv(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = matrix.column_names.clone();
    if matrix.groups.is_some() {
        header.push(PATIENT_COLUMN.into());
    }
    header.push(LABEL_COLUMN.into());
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (i, row) in matrix.rows.iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        if let Some(g) = &matrix.groups {
            rec.push(g[i].clone());
        }
        rec.push(matrix.class_names[matrix.labels[i]].clone());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EcgLabelSet {
    /// Integer codes 0..4 for N, S, V, F, Q.
    #[default]
    FiveClass,
    /// 0 for normal, 1 for abnormal.
    Binary,
}

impl EcgLabelSet {
    pub fn class_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            EcgLabelSet::FiveClass => &ECG_FIVE_CLASSES,
            EcgLabelSet::Binary => &ECG_BINARY_CLASSES,
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

/// Headerless heartbeat rows: samples followed by an integer class code.
/// Every row is truncated or zero-padded to 144 samples.
pub fn load_ecg_csv(path: &Path, labels: EcgLabelSet) -> Result<FeatureMatrix> {
    let mut rdr = reader(path, false)?;
    let classes = labels.class_names();
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = r + 1;
        let fields: Vec<&str> = rec.iter().collect();
        if fields.len() < 2 {
            return Err(Error::Data(format!("row {row}: need at least one sample and a label")));
        }
        let (samples, label) = fields.split_at(fields.len() - 1);
        let values = samples
            .iter()
            .enumerate()
            .map(|(c, v)| parse_cell(v, row, &format!("s{c}")))
            .collect::<Result<Vec<_>>>()?;
        let code = parse_cell(label[0], row, LABEL_COLUMN)?;
        if code.fract() != 0.0 || code < 0.0 || code as usize >= classes.len() {
            return Err(Error::Data(format!("row {row}: unknown label code {:?}", label[0])));
        }
        rows.push(normalize_length(&values, ECG_LENGTH)?);
        ids.push(code as usize);
    }
    FeatureMatrix::new((0..ECG_LENGTH).map(|i| format!("s{i}")).collect(), rows, ids, classes, None)
}

pub fn write_ecg_csv(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(|e| csv_err(path, e))?;
    for (row, &l) in matrix.rows.iter().zip(&matrix.labels) {
        let mut rec: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        rec.push(l.to_string());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123_456_789.123_456_78, f64::MIN_POSITIVE] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
