//! Exact nearest neighbours, SMOTE and Borderline-SMOTE oversampling.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPoint {
    pub features: Vec<f64>,
    pub label: usize,
}

impl LabeledPoint {
    pub fn new(features: Vec<f64>, label: usize) -> Self {
        Self { features, label }
    }
}

/// Borderline-SMOTE classification of a minority sample by the share of
/// majority points among its `m` nearest neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinorityCategory {
    /// Every neighbour is majority.
    Noise,
    /// At least half, but not all, of the neighbours are majority.
    Danger,
    Safe,
}

impl MinorityCategory {
    /// `majority` of the `m` neighbours belong to another class.
    pub fn from_counts(majority: usize, m: usize) -> Self {
        if majority == m {
            Self::Noise
        } else if 2 * majority >= m {
            Self::Danger
        } else {
            Self::Safe
        }
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` points closest to `query` (Euclidean), nearest first,
/// ties broken by lower index. `exclude` removes one index from consideration,
/// typically the query's own position.
pub fn knn<P: AsRef<[f64]>>(points: &[P], query: &[f64], k: usize, exclude: Option<usize>) -> Result<Vec<usize>> {
    let available = points.len() - usize::from(exclude.is_some_and(|e| e < points.len()));
    if k == 0 || k > available {
        return Err(Error::Contract(format!(
            "k = {k} out of range: {available} candidate points"
        )));
    }
    let mut cand: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != exclude)
        .map(|(i, p)| (squared_distance(p.as_ref(), query), i))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    Ok(cand.into_iter().map(|(_, i)| i).collect())
}

/// Source of the two random choices made per synthetic sample.
pub trait InterpolationSource {
    /// Uniform index in `0..n`.
    fn pick(&mut self, n: usize) -> usize;
    /// Gap in `[0, 1]`.
    fn gap(&mut self) -> f64;
}

impl<R: Rng> InterpolationSource for R {
    fn pick(&mut self, n: usize) -> usize {
        self.random_range(0..n)
    }

    fn gap(&mut self) -> f64 {
        self.random::<f64>()
    }
}

/// `p + u · (q − p)`.
pub fn interpolate(p: &[f64], q: &[f64], u: f64) -> Vec<f64> {
    p.iter().zip(q).map(|(a, b)| a + u * (b - a)).collect()
}

/// Classic SMOTE: `amount` synthetic samples per minority point, each on the
/// segment to one of its `k` nearest minority neighbours.
pub fn smote<P, S>(minority: &[P], k: usize, amount: usize, src: &mut S) -> Result<Vec<Vec<f64>>>
where
    P: AsRef<[f64]>,
    S: InterpolationSource + ?Sized,
{
    if minority.len() <= k {
        return Err(Error::Data(format!(
            "SMOTE with k = {k} needs at least {} minority points, got {}",
            k + 1,
            minority.len()
        )));
    }
    let mut out = Vec::with_capacity(minority.len() * amount);
    for (i, p) in minority.iter().enumerate() {
        let p = p.as_ref();
        let nn = knn(minority, p, k, Some(i))?;
        for _ in 0..amount {
            let q = minority[nn[src.pick(k)]].as_ref();
            out.push(interpolate(p, q, src.gap()));
        }
    }
    Ok(out)
}

fn check_uniform_width(data: &[LabeledPoint]) -> Result<()> {
    if let Some(first) = data.first() {
        let w = first.features.len();
        if let Some((i, _)) = data.iter().enumerate().find(|(_, p)| p.features.len() != w) {
            return Err(Error::Data(format!("point {i} has a different feature width than point 0")));
        }
    }
    if data.iter().flat_map(|p| &p.features).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite feature value".into()));
    }
    Ok(())
}

/// Categorizes each minority point (`label == minority`) against its `m`
/// nearest neighbours in the whole dataset. Returns `(dataset index, category)`
/// in dataset order.
pub fn bsmote_categorize(
    dataset: &[LabeledPoint],
    minority: usize,
    m: usize,
) -> Result<Vec<(usize, MinorityCategory)>> {
    check_uniform_width(dataset)?;
    if !dataset.iter().any(|p| p.label == minority) {
        return Err(Error::Data(format!("class {minority} has no samples")));
    }
    if m == 0 || m + 1 > dataset.len() {
        return Err(Error::Contract(format!(
            "m = {m} needs 1 <= m <= {} (dataset size − 1)",
            dataset.len() - 1
        )));
    }
    let feats: Vec<&[f64]> = dataset.iter().map(|p| p.features.as_slice()).collect();
    dataset
        .iter()
        .enumerate()
        .filter(|(_, p)| p.label == minority)
        .map(|(i, p)| {
            let nn = knn(&feats, &p.features, m, Some(i))?;
            let majority = nn.iter().filter(|&&j| dataset[j].label != minority).count();
            Ok((i, MinorityCategory::from_counts(majority, m)))
        })
        .collect()
}

/// Provenance of one synthetic point: dataset indices of the seed (danger)
/// point and the minority neighbour, and the interpolation gap.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticOrigin {
    pub seed: usize,
    pub neighbor: usize,
    pub gap: f64,
}

#[derive(Clone, Debug)]
pub struct Resampled {
    /// Original points in their original order, followed by synthetic ones.
    pub points: Vec<LabeledPoint>,
    pub original_len: usize,
    pub origins: Vec<SyntheticOrigin>,
}

impl Resampled {
    pub fn synthetic(&self) -> &[LabeledPoint] {
        &self.points[self.original_len..]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BsmoteParams {
    /// Interpolation neighbours among minority points.
    pub k: usize,
    /// Neighbourhood size used for danger/safe/noise categorization.
    pub m: usize,
    /// Desired minority:majority count ratio after resampling.
    pub target_ratio: f64,
}

impl Default for BsmoteParams {
    fn default() -> Self {
        Self {
            k: 5,
            m: 10,
            target_ratio: 1.0,
        }
    }
}

fn synthetic_quota(minority: usize, majority: usize, ratio: f64) -> Result<usize> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::Config(format!("target ratio {ratio} must be positive")));
    }
    let target = (ratio * majority as f64).round() as usize;
    Ok(target.saturating_sub(minority))
}

/// Borderline-SMOTE: oversamples `minority` from its danger points only,
/// distributing the quota round-robin over them, until the minority count is
/// `round(target_ratio × majority count)`. Points not labelled `minority` are
/// the majority. Originals are never modified.
pub fn bsmote_resample<S: InterpolationSource + ?Sized>(
    dataset: &[LabeledPoint],
    minority: usize,
    params: BsmoteParams,
    src: &mut S,
) -> Result<Resampled> {
    let n_min = dataset.iter().filter(|p| p.label == minority).count();
    let n_maj = dataset.len() - n_min;
    let quota = synthetic_quota(n_min, n_maj, params.target_ratio)?;
    let mut out = Resampled {
        points: dataset.to_vec(),
        original_len: dataset.len(),
        origins: Vec::new(),
    };
    if quota == 0 {
        return Ok(out);
    }
    let cats = bsmote_categorize(dataset, minority, params.m)?;
    let danger: Vec<usize> = cats
        .iter()
        .filter(|(_, c)| *c == MinorityCategory::Danger)
        .map(|&(i, _)| i)
        .collect();
    if danger.is_empty() {
        return Err(Error::NoDangerPoints { label: minority });
    }
    // interpolation targets: non-noise minority points
    let targets: Vec<usize> = cats
        .iter()
        .filter(|(_, c)| *c != MinorityCategory::Noise)
        .map(|&(i, _)| i)
        .collect();
    let target_feats: Vec<&[f64]> = targets.iter().map(|&i| dataset[i].features.as_slice()).collect();
    let neighbours: Vec<Vec<usize>> = danger
        .iter()
        .map(|&d| {
            let own = targets.iter().position(|&t| t == d);
            let avail = targets.len() - usize::from(own.is_some());
            let k = params.k.min(avail);
            if k == 0 {
                return Err(Error::Data(format!(
                    "danger point {d} has no other non-noise minority point to interpolate toward"
                )));
            }
            Ok(knn(&target_feats, &dataset[d].features, k, own)?
                .into_iter()
                .map(|j| targets[j])
                .collect())
        })
        .collect::<Result<_>>()?;
    for j in 0..quota {
        let slot = j % danger.len();
        let seed = danger[slot];
        let nn = &neighbours[slot];
        let neighbor = nn[src.pick(nn.len())];
        let gap = src.gap();
        let feats = interpolate(&dataset[seed].features, &dataset[neighbor].features, gap);
        out.points.push(LabeledPoint::new(feats, minority));
        out.origins.push(SyntheticOrigin { seed, neighbor, gap });
    }
    Ok(out)
}

/// Plain-SMOTE fallback with the same output contract as [`bsmote_resample`]:
/// seeds cycle round-robin over all minority points.
pub fn smote_resample<S: InterpolationSource + ?Sized>(
    dataset: &[LabeledPoint],
    minority: usize,
    params: BsmoteParams,
    src: &mut S,
) -> Result<Resampled> {
    check_uniform_width(dataset)?;
    let idx: Vec<usize> = (0..dataset.len()).filter(|&i| dataset[i].label == minority).collect();
    let quota = synthetic_quota(idx.len(), dataset.len() - idx.len(), params.target_ratio)?;
    let mut out = Resampled {
        points: dataset.to_vec(),
        original_len: dataset.len(),
        origins: Vec::new(),
    };
    if quota == 0 {
        return Ok(out);
    }
    if idx.len() < 2 {
        return Err(Error::Data(format!(
            "class {minority} needs at least 2 samples to oversample"
        )));
    }
    let k = params.k.min(idx.len() - 1);
    let feats: Vec<&[f64]> = idx.iter().map(|&i| dataset[i].features.as_slice()).collect();
    let neighbours: Vec<Vec<usize>> = (0..idx.len())
        .map(|s| knn(&feats, feats[s], k, Some(s)))
        .collect::<Result<_>>()?;
    for j in 0..quota {
        let s = j % idx.len();
        let nb = idx[neighbours[s][src.pick(k)]];
        let gap = src.gap();
        let feats = interpolate(&dataset[idx[s]].features, &dataset[nb].features, gap);
        out.points.push(LabeledPoint::new(feats, minority));
        out.origins.push(SyntheticOrigin {
            seed: idx[s],
            neighbor: nb,
            gap,
        });
    }
    Ok(out)
}

/// Outcome of balancing every class against the largest one.
#[derive(Clone, Debug)]
pub struct Balanced {
    pub points: Vec<LabeledPoint>,
    pub original_len: usize,
    /// Classes that had no danger points and were oversampled with plain SMOTE.
    pub smote_fallbacks: Vec<usize>,
}

/// Brings every class up to `target_ratio ×` the largest class using
/// one-vs-rest Borderline-SMOTE. Categorization always runs on the original
/// points only; synthetic points of earlier classes are carried along.
pub fn balance_classes<R: Rng>(dataset: &[LabeledPoint], params: BsmoteParams, rng: &mut R) -> Result<Balanced> {
    let classes = dataset.iter().map(|p| p.label).max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; classes];
    for p in dataset {
        counts[p.label] += 1;
    }
    let largest = counts.iter().copied().max().unwrap_or(0);
    let mut points = dataset.to_vec();
    let mut fallbacks = Vec::new();
    for class in 0..classes {
        if counts[class] == 0 || counts[class] == largest {
            continue;
        }
        // one-vs-rest, but sized against the largest class rather than the rest
        let quota = synthetic_quota(counts[class], largest, params.target_ratio)?;
        if quota == 0 {
            continue;
        }
        let ratio = (counts[class] + quota) as f64 / (dataset.len() - counts[class]) as f64;
        let p = BsmoteParams {
            target_ratio: ratio,
            ..params
        };
        let res = match bsmote_resample(dataset, class, p, rng) {
            Err(Error::NoDangerPoints { .. }) => {
                fallbacks.push(class);
                smote_resample(dataset, class, p, rng)?
            }
            other => other?,
        };
        debug_assert_eq!(res.synthetic().len(), quota);
        points.extend_from_slice(res.synthetic());
    }
    Ok(Balanced {
        points,
        original_len: dataset.len(),
        smote_fallbacks: fallbacks,
    })
}
