//! Splits, confusion matrices and classification metrics.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::rng::{seeded, Rng};
use crate::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_TEST_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    /// Row indices outside fold `i`.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.folds.iter().enumerate().filter(|(j, _)| *j != i).flat_map(|(_, f)| f.iter().copied()).collect();
        v.sort_unstable();
        v
    }
}

fn indices_by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by = vec![Vec::new(); n_classes];
    for (i, &l) in labels.iter().enumerate() {
        by[l].push(i);
    }
    by.retain(|v| !v.is_empty());
    by
}

/// Stratified k-fold assignment of `labels.len()` rows.
pub fn kfold_split(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Contract(format!("k-fold needs k >= 2, got {k}")));
    }
    let by = indices_by_class(labels);
    let min = by.iter().map(Vec::len).min().unwrap_or(0);
    if k > min {
        return Err(Error::Contract(format!("k = {k} exceeds the smallest class count {min}")));
    }
    let mut rng = seeded(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut idx in by {
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { k, folds, seed })
}

/// Stratified split; each class contributes `round(n_c * test_fraction)` test rows.
/// Returns sorted `(train, test)` index lists.
pub fn train_test_split(labels: &[usize], test_fraction: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Contract(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut idx in indices_by_class(labels) {
        idx.shuffle(rng);
        let n_test = ((idx.len() as f64 * test_fraction).round() as usize).clamp(1, idx.len().saturating_sub(1).max(1));
        if idx.len() < 2 {
            return Err(Error::Data("every class needs at least 2 rows to split".into()));
        }
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Counts indexed `[predicted][true]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(class_names: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let m = class_names.len();
        if counts.len() != m || counts.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension(format!("confusion counts must be {m}x{m}")));
        }
        Ok(ConfusionMatrix { class_names, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn position(&self, class: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == class)
    }
}

pub fn confusion(pred: &[usize], truth: &[usize], class_names: &[String]) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!("{} predictions vs {} truths", pred.len(), truth.len())));
    }
    let m = class_names.len();
    let mut counts = vec![vec![0u64; m]; m];
    for (&p, &t) in pred.iter().zip(truth) {
        if p >= m || t >= m {
            return Err(Error::Data(format!("class id {} outside {m} classes", p.max(t))));
        }
        counts[p][t] += 1;
    }
    Ok(ConfusionMatrix { class_names: class_names.to_vec(), counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollapseMode {
    /// Predicted-positive records of another true class count as false negatives.
    #[default]
    Literal,
    /// Textbook one-vs-rest: false negatives are missed positives.
    Conventional,
}

impl FromStr for CollapseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(CollapseMode::Literal),
            "conventional" => Ok(CollapseMode::Conventional),
            other => Err(Error::Config(format!("unknown collapse mode {other:?}"))),
        }
    }
}

impl fmt::Display for CollapseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollapseMode::Literal => "literal",
            CollapseMode::Conventional => "conventional",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }
}

pub fn binary_collapse(matrix: &ConfusionMatrix, positive: usize, mode: CollapseMode) -> Result<BinaryCounts> {
    let m = matrix.counts.len();
    if positive >= m {
        return Err(Error::Contract(format!("positive class {positive} outside {m} classes")));
    }
    let c = &matrix.counts;
    let tp = c[positive][positive];
    let row: u64 = c[positive].iter().sum::<u64>() - tp;
    let col: u64 = (0..m).map(|q| c[q][positive]).sum::<u64>() - tp;
    let tn = matrix.total() - tp - row - col;
    let (fn_, fp) = match mode {
        CollapseMode::Literal => (row, col),
        CollapseMode::Conventional => (col, row),
    };
    Ok(BinaryCounts { tp, fn_, fp, tn })
}

/// A ratio whose denominator may be zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    fn ratio(num: u64, den: u64) -> Metric {
        if den == 0 {
            Metric::Undefined
        } else {
            Metric::Value(num as f64 / den as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Value(v) => write!(f, "{v:.4}"),
            Metric::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: Metric,
    pub sensitivity: Metric,
    pub specificity: Metric,
    pub fpr: Metric,
    pub precision: Metric,
}

pub fn metrics(c: &BinaryCounts) -> Metrics {
    Metrics {
        accuracy: Metric::ratio(c.tp + c.tn, c.total()),
        sensitivity: Metric::ratio(c.tp, c.tp + c.fn_),
        specificity: Metric::ratio(c.tn, c.tn + c.fp),
        fpr: Metric::ratio(c.fp, c.fp + c.tn),
        precision: Metric::ratio(c.tp, c.tp + c.fp),
    }
}

pub fn multiclass_accuracy(matrix: &ConfusionMatrix) -> Result<f64> {
    let total = matrix.total();
    if total == 0 {
        return Err(Error::Contract("accuracy of an empty confusion matrix".into()));
    }
    Ok(matrix.trace() as f64 / total as f64)
}

fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut w = vec![0; cols];
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            w[i] = w[i].max(c.chars().count());
        }
    }
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r.iter().enumerate().map(|(i, c)| format!("{c:>width$}", width = w[i])).collect();
        out.push_str(&cells.join("  "));
        out.push('\n');
    }
    out
}

/// Aligned confusion matrix followed by per-class one-vs-rest metrics.
pub fn metrics_text(matrix: &ConfusionMatrix, mode: CollapseMode) -> Result<String> {
    let mut grid = vec![std::iter::once("pred\\true".to_string()).chain(matrix.class_names.iter().cloned()).collect()];
    for (i, r) in matrix.counts.iter().enumerate() {
        grid.push(std::iter::once(matrix.class_names[i].clone()).chain(r.iter().map(u64::to_string)).collect());
    }
    let mut out = align(&grid);
    let _ = writeln!(out, "\naccuracy {:.4} ({} of {})", multiclass_accuracy(matrix)?, matrix.trace(), matrix.total());
    let _ = writeln!(out, "collapse mode {mode}\n");
    let mut rows = vec![["class", "tp", "fn", "fp", "tn", "accuracy", "sensitivity", "specificity", "fpr", "precision"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    for (p, name) in matrix.class_names.iter().enumerate() {
        let b = binary_collapse(matrix, p, mode)?;
        let m = metrics(&b);
        rows.push(vec![
            name.clone(),
            b.tp.to_string(),
            b.fn_.to_string(),
            b.fp.to_string(),
            b.tn.to_string(),
            m.accuracy.to_string(),
            m.sensitivity.to_string(),
            m.specificity.to_string(),
            m.fpr.to_string(),
            m.precision.to_string(),
        ]);
    }
    out.push_str(&align(&rows));
    Ok(out)
}

fn kv_metric(out: &mut String, key: &str, m: Metric) {
    match m {
        Metric::Value(v) => {
            let _ = writeln!(out, "{key}={v:?}");
        }
        Metric::Undefined => {
            let _ = writeln!(out, "{key}=undefined");
        }
    }
}

pub fn metrics_kv(matrix: &ConfusionMatrix, mode: CollapseMode) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "classes={}", matrix.class_names.join(","));
    for (p, row) in matrix.counts.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "confusion.{}={}", matrix.class_names[p], cells.join(","));
    }
    let _ = writeln!(out, "total={}", matrix.total());
    let _ = writeln!(out, "accuracy={:?}", multiclass_accuracy(matrix)?);
    let _ = writeln!(out, "collapse={mode}");
    for (p, name) in matrix.class_names.iter().enumerate() {
        let b = binary_collapse(matrix, p, mode)?;
        let m = metrics(&b);
        let _ = writeln!(out, "{name}.tp={}", b.tp);
        let _ = writeln!(out, "{name}.fn={}", b.fn_);
        let _ = writeln!(out, "{name}.fp={}", b.fp);
        let _ = writeln!(out, "{name}.tn={}", b.tn);
        kv_metric(&mut out, &format!("{name}.accuracy"), m.accuracy);
        kv_metric(&mut out, &format!("{name}.sensitivity"), m.sensitivity);
        kv_metric(&mut out, &format!("{name}.specificity"), m.specificity);
        kv_metric(&mut out, &format!("{name}.fpr"), m.fpr);
        kv_metric(&mut out, &format!("{name}.precision"), m.precision);
    }
    Ok(out)
}
