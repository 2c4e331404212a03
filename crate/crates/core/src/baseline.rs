//! Reference classifiers used as comparison groups.

use crate::resampling::knn;
use crate::{Error, Result};

pub trait Classifier {
    fn name(&self) -> &str;
    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>>;
}

/// Multinomial logistic regression fitted by full-batch gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    /// `[features][classes]`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    pub learning_rate: f64,
    pub iterations: usize,
    pub l2: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions { learning_rate: 0.5, iterations: 300, l2: 1e-4 }
    }
}

fn softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

fn check_rows(rows: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Data(format!("{} rows with {} labels", rows.len(), labels.len())));
    }
    let w = rows[0].len();
    if rows.iter().any(|r| r.len() != w) {
        return Err(Error::Dimension("ragged rows".into()));
    }
    Ok(w)
}

impl LogisticRegression {
    pub fn fit(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, opts: LogisticOptions) -> Result<Self> {
        let f = check_rows(rows, labels)?;
        if labels.iter().any(|&l| l >= n_classes) {
            return Err(Error::Data("label outside class range".into()));
        }
        let mut m = LogisticRegression { weights: vec![vec![0.0; n_classes]; f], bias: vec![0.0; n_classes] };
        let n = rows.len() as f64;
        for _ in 0..opts.iterations {
            let mut gw = vec![vec![0.0; n_classes]; f];
            let mut gb = vec![0.0; n_classes];
            for (x, &y) in rows.iter().zip(labels) {
                let mut p = m.logits(x);
                softmax(&mut p);
                p[y] -= 1.0;
                for (k, &d) in p.iter().enumerate() {
                    gb[k] += d;
                    for j in 0..f {
                        gw[j][k] += d * x[j];
                    }
                }
            }
            for j in 0..f {
                for k in 0..n_classes {
                    m.weights[j][k] -= opts.learning_rate * (gw[j][k] / n + opts.l2 * m.weights[j][k]);
                }
            }
            for k in 0..n_classes {
                m.bias[k] -= opts.learning_rate * gb[k] / n;
            }
        }
        if m.weights.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("logistic regression diverged".into()));
        }
        Ok(m)
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (j, &xj) in x.iter().enumerate() {
            for (k, zk) in z.iter_mut().enumerate() {
                *zk += xj * self.weights[j][k];
            }
        }
        z
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits(x);
        softmax(&mut z);
        z
    }
}

impl Classifier for LogisticRegression {
    fn name(&self) -> &str {
        "Logistic"
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        let f = self.weights.len();
        rows.iter()
            .map(|r| {
                if r.len() != f {
                    return Err(Error::Dimension(format!("row width {} vs model width {f}", r.len())));
                }
                Ok(crate::lgan::argmax(&self.probabilities(r)))
            })
            .collect()
    }
}

/// Majority vote of the `k` nearest training rows (Euclidean); ties go to the
/// class of the nearest tied neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct KNearest {
    pub k: usize,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl KNearest {
    pub fn fit(rows: &[Vec<f64>], labels: &[usize], n_classes: usize, k: usize) -> Result<Self> {
        check_rows(rows, labels)?;
        if k == 0 || k > rows.len() {
            return Err(Error::Contract(format!("k = {k} must be in 1..={}", rows.len())));
        }
        Ok(KNearest { k, rows: rows.to_vec(), labels: labels.to_vec(), n_classes })
    }
}

impl Classifier for KNearest {
    fn name(&self) -> &str {
        "kNN"
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
        rows.iter()
            .map(|q| {
                let nn = knn(&self.rows, q, self.k, None)?;
                let mut votes = vec![0usize; self.n_classes];
                for &i in &nn {
                    votes[self.labels[i]] += 1;
                }
                let top = *votes.iter().max().unwrap_or(&0);
                let winner = nn
                    .iter()
                    .map(|&i| self.labels[i])
                    .find(|&l| votes[l] == top)
                    .unwrap_or(0);
                Ok(winner)
            })
            .collect()
    }
}
