//! Feature tables, feature scoring and record-level transforms.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::special::{chi2_sf, digamma};
use crate::{Error, Result};

/// Rows of named numeric features with a class id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    /// Patient or segment id per row.
    pub groups: Option<Vec<String>>,
    /// Stable record ids, used to audit train/test separation.
    pub ids: Vec<u64>,
}

impl FeatureMatrix {
    pub fn new(
        column_names: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        groups: Option<Vec<String>>,
    ) -> Result<Self> {
        let ids = (0..rows.len() as u64).collect();
        let m = FeatureMatrix { column_names, rows, labels, class_names, groups, ids };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let width = self.column_names.len();
        let mut seen = HashSet::new();
        for name in &self.column_names {
            if !seen.insert(name) {
                return Err(Error::Data(format!("duplicate column name {name:?}")));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::Data(format!("row {i} has {} values, expected {width}", r.len())));
            }
        }
        if self.labels.len() != self.rows.len() {
            return Err(Error::Data(format!("{} labels for {} rows", self.labels.len(), self.rows.len())));
        }
        if self.ids.len() != self.rows.len() {
            return Err(Error::Data(format!("{} ids for {} rows", self.ids.len(), self.rows.len())));
        }
        if let Some(g) = &self.groups {
            if g.len() != self.rows.len() {
                return Err(Error::Data(format!("{} group ids for {} rows", g.len(), self.rows.len())));
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.class_names.len()) {
            return Err(Error::Data(format!("label {bad} outside {} classes", self.class_names.len())));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.class_names.len()];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            column_names: self.column_names.clone(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            groups: self.groups.as_ref().map(|g| idx.iter().map(|&i| g[i].clone()).collect()),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    pub fn select_columns(&self, names: &[impl AsRef<str>]) -> Result<FeatureMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| Error::Data(format!("missing feature column {:?}", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeatureMatrix {
            column_names: idx.iter().map(|&j| self.column_names[j].clone()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect(),
            ..self.clone()
        })
    }

    /// Keeps the rows whose label is in `keep` and renumbers classes in that order.
    pub fn filter_classes(&self, keep: &[&str]) -> Result<FeatureMatrix> {
        let mut map = vec![None; self.class_names.len()];
        for (new, name) in keep.iter().enumerate() {
            let old = self
                .class_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::Data(format!("unknown class {name:?}")))?;
            map[old] = Some(new);
        }
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| map[self.labels[i]].is_some()).collect();
        let mut out = self.select_rows(&idx);
        out.labels = idx.iter().map(|&i| map[self.labels[i]].unwrap_or(0)).collect();
        out.class_names = keep.iter().map(|s| s.to_string()).collect();
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMethod {
    Mi,
    Chi2,
    Fisher,
    Pearson,
}

impl FromStr for ScoreMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mi" => Ok(ScoreMethod::Mi),
            "chi2" => Ok(ScoreMethod::Chi2),
            "fisher" => Ok(ScoreMethod::Fisher),
            "pearson" => Ok(ScoreMethod::Pearson),
            other => Err(Error::Config(format!("unknown scoring method {other:?}"))),
        }
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreMethod::Mi => "mi",
            ScoreMethod::Chi2 => "chi2",
            ScoreMethod::Fisher => "fisher",
            ScoreMethod::Pearson => "pearson",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScore {
    pub name: String,
    pub method: ScoreMethod,
    pub score: f64,
    pub p_value: Option<f64>,
}

pub const DEFAULT_MI_NEIGHBORS: usize = 3;
pub const DEFAULT_CHI2_BINS: usize = 10;
const MIN_MI_SAMPLES: usize = 20;

/// Distance from `xs[i]` to its `k`-th nearest neighbour in the sorted slice `xs`.
fn kth_distance(xs: &[f64], i: usize, k: usize) -> f64 {
    let (mut l, mut r) = (i as isize - 1, i + 1);
    let mut d = 0.0;
    for _ in 0..k {
        let dl = if l >= 0 { xs[i] - xs[l as usize] } else { f64::INFINITY };
        let dr = if r < xs.len() { xs[r] - xs[i] } else { f64::INFINITY };
        if dl <= dr {
            d = dl;
            l -= 1;
        } else {
            d = dr;
            r += 1;
        }
    }
    d
}

/// Mutual information (nats) between a continuous column and discrete labels,
/// by the mixed k-nearest-neighbour estimator. Negative estimates clamp to 0.
pub fn mi_gain(x: &[f64], y: &[usize], k: usize) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} values vs {} labels", x.len(), y.len())));
    }
    if k == 0 {
        return Err(Error::Contract("mi_gain needs k >= 1".into()));
    }
    if x.len() < MIN_MI_SAMPLES {
        return Err(Error::Contract(format!("mi_gain needs at least {MIN_MI_SAMPLES} samples, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("mi_gain input contains a non-finite value".into()));
    }
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in y.iter().enumerate() {
        by_label.entry(l).or_default().push(i);
    }
    if by_label.len() < 2 {
        return Ok(0.0);
    }
    let mut radius = vec![0.0; x.len()];
    let mut k_used = vec![0usize; x.len()];
    let mut label_count = vec![0usize; x.len()];
    let mut keep = vec![false; x.len()];
    for idx in by_label.values() {
        if idx.len() < 2 {
            continue;
        }
        let kk = k.min(idx.len() - 1);
        let mut order = idx.clone();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
        for (pos, &i) in order.iter().enumerate() {
            radius[i] = kth_distance(&xs, pos, kk);
            k_used[i] = kk;
            label_count[i] = idx.len();
            keep[i] = true;
        }
    }
    let kept: Vec<usize> = (0..x.len()).filter(|&i| keep[i]).collect();
    let n = kept.len();
    if n == 0 {
        return Ok(0.0);
    }
    let mut sorted: Vec<f64> = kept.iter().map(|&i| x[i]).collect();
    sorted.sort_by(f64::total_cmp);
    let mut sum_k = 0.0;
    let mut sum_label = 0.0;
    let mut sum_m = 0.0;
    for &i in &kept {
        // points with |x_j - x_i| <= nextafter(radius, 0), self included
        let r = if radius[i] > 0.0 { f64::from_bits(radius[i].to_bits() - 1) } else { 0.0 };
        let lo = sorted.partition_point(|&v| x[i] - v > r);
        let hi = sorted.partition_point(|&v| v - x[i] <= r);
        let m = (hi - lo).max(1);
        sum_k += digamma(k_used[i] as f64);
        sum_label += digamma(label_count[i] as f64);
        sum_m += digamma(m as f64);
    }
    let nf = n as f64;
    let mi = digamma(nf) + (sum_k - sum_label - sum_m) / nf;
    Ok(mi.max(0.0))
}

/// Pearson chi-square of equal-frequency bins of `x` against the labels.
/// Returns `(statistic, p_value)`.
pub fn chi_square(x: &[f64], y: &[usize], bins: usize) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} values vs {} labels", x.len(), y.len())));
    }
    if x.is_empty() || bins == 0 {
        return Err(Error::Contract("chi_square needs data and at least one bin".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..bins).map(|i| sorted[i * n / bins]).collect();
    edges.dedup();
    edges.retain(|&e| e > sorted[0]);
    let n_bins = edges.len() + 1;
    if n_bins < 2 {
        return Err(Error::Data("fewer than 2 non-empty bins after merging".into()));
    }
    let mut classes: Vec<usize> = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Data("chi_square needs at least 2 label values".into()));
    }
    let mut table = vec![vec![0.0; classes.len()]; n_bins];
    for (&v, &l) in x.iter().zip(y) {
        let b = edges.partition_point(|&e| e <= v);
        let c = classes.binary_search(&l).unwrap_or(0);
        table[b][c] += 1.0;
    }
    let row_tot: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_tot: Vec<f64> = (0..classes.len()).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let total = n as f64;
    let mut stat = 0.0;
    for (b, row) in table.iter().enumerate() {
        for (c, &obs) in row.iter().enumerate() {
            let exp = row_tot[b] * col_tot[c] / total;
            stat += (obs - exp).powi(2) / exp;
        }
    }
    let df = ((n_bins - 1) * (classes.len() - 1)) as f64;
    Ok((stat, chi2_sf(stat, df)))
}

/// `Σ n_c (μ_c − μ)² / Σ n_c σ_c²` with population variances.
pub fn fisher_score(x: &[f64], y: &[usize]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} values vs {} labels", x.len(), y.len())));
    }
    let mut by_label: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (&v, &l) in x.iter().zip(y) {
        by_label.entry(l).or_default().push(v);
    }
    if by_label.len() < 2 {
        return Err(Error::Contract("fisher_score needs at least 2 classes".into()));
    }
    if let Some((l, v)) = by_label.iter().find(|(_, v)| v.len() < 2) {
        return Err(Error::Contract(format!("class {l} has {} samples, need at least 2", v.len())));
    }
    let mu = x.iter().sum::<f64>() / x.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for v in by_label.values() {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        num += n * (m - mu).powi(2);
        den += v.iter().map(|a| (a - m).powi(2)).sum::<f64>();
    }
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(num / den)
}

pub fn pearson_corr(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Contract("pearson_corr needs at least 2 values".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Numerical("pearson correlation of a constant column is undefined".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn score_column(x: &[f64], y: &[usize], method: ScoreMethod) -> Result<(f64, Option<f64>)> {
    match method {
        ScoreMethod::Mi => Ok((mi_gain(x, y, DEFAULT_MI_NEIGHBORS)?, None)),
        ScoreMethod::Chi2 => chi_square(x, y, DEFAULT_CHI2_BINS).map(|(s, p)| (s, Some(p))),
        ScoreMethod::Fisher => Ok((fisher_score(x, y)?, None)),
        ScoreMethod::Pearson => {
            let yf: Vec<f64> = y.iter().map(|&l| l as f64).collect();
            Ok((pearson_corr(x, &yf)?.abs(), None))
        }
    }
}

/// Scores every column and sorts descending; ties keep column order.
/// Pearson ranks by absolute correlation with the numeric label.
pub fn rank_features(matrix: &FeatureMatrix, method: ScoreMethod) -> Result<Vec<FeatureScore>> {
    if matrix.n_rows() == 0 || matrix.n_cols() == 0 {
        return Err(Error::Data("cannot rank features of an empty matrix".into()));
    }
    let mut scores = Vec::with_capacity(matrix.n_cols());
    for (j, name) in matrix.column_names.iter().enumerate() {
        let (score, p_value) = score_column(&matrix.column(j), &matrix.labels, method)?;
        if score.is_nan() {
            return Err(Error::Numerical(format!("score of {name:?} is NaN")));
        }
        scores.push(FeatureScore { name: name.clone(), method, score, p_value });
    }
    scores.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(scores)
}

/// Appends the features of the previous `n` records of the same group to each record.
///
/// The first `n` records of each group are dropped, as are groups with fewer
/// than `n + 1` records. Returns the new matrix and the number of dropped groups.
pub fn augment_previous(matrix: &FeatureMatrix, n: usize) -> Result<(FeatureMatrix, usize)> {
    if n == 0 {
        return Ok((matrix.clone(), 0));
    }
    let group_of = |i: usize| matrix.groups.as_ref().map(|g| g[i].as_str()).unwrap_or("");
    let mut order: Vec<&str> = Vec::new();
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for i in 0..matrix.n_rows() {
        let g = group_of(i);
        let e = members.entry(g).or_default();
        if e.is_empty() {
            order.push(g);
        }
        e.push(i);
    }
    let mut keep_rows = Vec::new();
    let mut rows = Vec::new();
    let mut dropped = 0;
    for g in order {
        let idx = &members[g];
        if idx.len() < n + 1 {
            dropped += 1;
            continue;
        }
        for t in n..idx.len() {
            let mut row = matrix.rows[idx[t]].clone();
            for p in 1..=n {
                row.extend_from_slice(&matrix.rows[idx[t - p]]);
            }
            rows.push(row);
            keep_rows.push(idx[t]);
        }
    }
    if dropped > 0 {
        log::warn!("augment_previous: dropped {dropped} group(s) shorter than {} records", n + 1);
    }
    let mut names = matrix.column_names.clone();
    for p in 1..=n {
        names.extend(matrix.column_names.iter().map(|c| format!("{c}_prev{p}")));
    }
    let base = matrix.select_rows(&keep_rows);
    Ok((FeatureMatrix { column_names: names, rows, ..base }, dropped))
}

pub const ECG_LENGTH: usize = 144;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthMode {
    /// Keep the first `target` samples.
    #[default]
    Truncate,
    /// Take `target` evenly spaced samples.
    Subsample,
}

pub fn normalize_length(signal: &[f64], target: usize) -> Result<Vec<f64>> {
    normalize_length_with(signal, target, LengthMode::Truncate)
}

pub fn normalize_length_with(signal: &[f64], target: usize, mode: LengthMode) -> Result<Vec<f64>> {
    if signal.is_empty() {
        return Err(Error::Data("cannot normalize an empty signal".into()));
    }
    let mut out = if signal.len() <= target {
        signal.to_vec()
    } else {
        match mode {
            LengthMode::Truncate => signal[..target].to_vec(),
            LengthMode::Subsample => (0..target).map(|i| signal[i * signal.len() / target]).collect(),
        }
    };
    out.resize(target, 0.0);
    Ok(out)
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Data("cannot standardize zero rows".into()))?;
        let w = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; w];
        for r in rows {
            if r.len() != w {
                return Err(Error::Dimension(format!("ragged row of width {} (expected {w})", r.len())));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; w];
        for r in rows {
            for j in 0..w {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn transform(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, v)| if self.std[j] > 0.0 { (v - self.mean[j]) / self.std[j] } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    pub fn inverse(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| v * self.std[j] + self.mean[j]).collect())
            .collect()
    }
}

/// Standardizes every column of the matrix with its own statistics.
pub fn standardize(matrix: &FeatureMatrix) -> Result<(FeatureMatrix, Standardizer)> {
    let s = Standardizer::fit(&matrix.rows)?;
    let rows = s.transform(&matrix.rows);
    Ok((FeatureMatrix { rows, ..matrix.clone() }, s))
}

pub const BREATH_FEATURES: [&str; 11] = [
    "TVi", "TVe", "iTime", "eTime", "maxF", "minF", "ipAUC", "epAUC", "I:E ratio", "inst_RR", "tve:tvi ratio",
];

pub const BSA_PRESET: [&str; 8] = ["TVi", "TVe", "eTime", "iTime", "maxF", "minF", "ipAUC", "epAUC"];
pub const DTA_PRESET: [&str; 8] = ["I:E ratio", "inst_RR", "tve:tvi ratio", "iTime", "eTime", "TVi", "TVe", "ipAUC"];
