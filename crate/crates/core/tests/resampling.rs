use lockgan::resampling::{
    balance_classes, bsmote_categorize, bsmote_resample, knn, smote, smote_resample, squared_distance,
    BsmoteParams, InterpolationSource, LabeledPoint, MinorityCategory,
};
use lockgan::rng::seeded;
use lockgan::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

struct Fixed {
    u: f64,
}

impl InterpolationSource for Fixed {
    fn pick(&mut self, _: usize) -> usize {
        0
    }
    fn gap(&mut self) -> f64 {
        self.u
    }
}

fn brute_knn(points: &[Vec<f64>], q: &[f64], k: usize, exclude: Option<usize>) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, p)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

#[test]
fn knn_examples() {
    let pts = vec![vec![0.0], vec![1.0], vec![2.0], vec![10.0]];
    assert_eq!(knn(&pts, &[0.0], 1, Some(0)).unwrap(), vec![1]);
    let mut two = knn(&pts, &[0.0], 2, Some(0)).unwrap();
    two.sort_unstable();
    assert_eq!(two, vec![1, 2]);
    assert!(matches!(knn(&pts, &[0.0], 4, Some(0)), Err(Error::Contract(_))));
    assert!(knn(&pts, &[0.0], 0, None).is_err());

    let mut rng = seeded(1);
    let pts: Vec<Vec<f64>> = (0..50).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    for k in 1..=50 {
        assert_eq!(knn(&pts, &q, k, None).unwrap(), brute_knn(&pts, &q, k, None));
    }
}

#[test]
fn knn_ties_go_to_lower_index() {
    let pts = vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]];
    assert_eq!(knn(&pts, &[0.0], 3, None).unwrap(), vec![0, 1, 2]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn knn_is_permutation_invariant(seed in 0u64..100_000) {
        let mut rng = seeded(seed);
        let pts: Vec<Vec<f64>> = (0..30).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let q = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let mut perm: Vec<usize> = (0..30).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
        let a = knn(&pts, &q, 7, None).unwrap();
        let b: Vec<usize> = knn(&shuffled, &q, 7, None).unwrap().into_iter().map(|i| perm[i]).collect();
        // distinct random distances, so no ties
        prop_assert_eq!(a, b);
    }
}

#[test]
fn smote_gap_extremes() {
    let minority = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0]];
    let at_seed = smote(&minority, 1, 1, &mut Fixed { u: 0.0 }).unwrap();
    assert_eq!(at_seed, minority);
    let at_neighbor = smote(&minority, 1, 1, &mut Fixed { u: 1.0 }).unwrap();
    for (i, s) in at_neighbor.iter().enumerate() {
        let nn = knn(&minority, &minority[i], 1, Some(i)).unwrap()[0];
        assert_eq!(s, &minority[nn]);
    }
    assert!(matches!(smote(&minority, 3, 1, &mut seeded(0)), Err(Error::Data(_))));
}

#[test]
fn smote_points_stay_in_bounding_box() {
    let mut rng = seeded(12);
    let minority: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
    let out = smote(&minority, 5, 25, &mut rng).unwrap();
    assert_eq!(out.len(), 1000);
    for (j, s) in out.iter().enumerate() {
        let p = &minority[j / 25];
        let nn = knn(&minority, p, 5, Some(j / 25)).unwrap();
        let inside = nn.iter().any(|&q| {
            s.iter().enumerate().all(|(d, &v)| {
                let (lo, hi) = (p[d].min(minority[q][d]), p[d].max(minority[q][d]));
                v >= lo - 1e-12 && v <= hi + 1e-12
            })
        });
        assert!(inside);
    }
}

fn brute_categories(data: &[LabeledPoint], minority: usize, m: usize) -> Vec<(usize, MinorityCategory)> {
    let mut out = Vec::new();
    for (i, p) in data.iter().enumerate() {
        if p.label != minority {
            continue;
        }
        let feats: Vec<Vec<f64>> = data.iter().map(|q| q.features.clone()).collect();
        let nn = brute_knn(&feats, &p.features, m, Some(i));
        let maj = nn.iter().filter(|&&j| data[j].label != minority).count();
        let cat = if maj == m {
            MinorityCategory::Noise
        } else if maj * 2 >= m {
            MinorityCategory::Danger
        } else {
            MinorityCategory::Safe
        };
        out.push((i, cat));
    }
    out
}

#[test]
fn categorize_examples() {
    let all_min: Vec<LabeledPoint> = (0..8).map(|i| LabeledPoint::new(vec![i as f64], 1)).collect();
    let cats = bsmote_categorize(&all_min, 1, 3).unwrap();
    assert!(cats.iter().all(|(_, c)| *c == MinorityCategory::Safe));

    // minority point 0 inside a tight majority ring
    let mut data = vec![LabeledPoint::new(vec![0.0, 0.0], 1)];
    for a in 0..5 {
        let t = a as f64 * std::f64::consts::TAU / 5.0;
        data.push(LabeledPoint::new(vec![0.1 * t.cos(), 0.1 * t.sin()], 0));
    }
    data.push(LabeledPoint::new(vec![9.0, 9.0], 1));
    assert_eq!(bsmote_categorize(&data, 1, 5).unwrap()[0], (0, MinorityCategory::Noise));
}

/// Twelve points: a majority block on the left, a minority cluster on the right,
/// border minority points touching the block and one minority point deep inside it.
fn twelve_points() -> Vec<LabeledPoint> {
    let maj = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0], [0.5, 0.5], [0.0, 2.0], [1.0, 2.0]];
    let min = [[0.4, 0.6], [1.6, 0.5], [1.7, 1.5], [3.0, 0.5], [3.0, 1.5]];
    maj.iter()
        .map(|p| LabeledPoint::new(p.to_vec(), 0))
        .chain(min.iter().map(|p| LabeledPoint::new(p.to_vec(), 1)))
        .collect()
}

#[test]
fn categorize_constructed_instance() {
    let data = twelve_points();
    let cats = bsmote_categorize(&data, 1, 3).unwrap();
    assert_eq!(cats, brute_categories(&data, 1, 3));
    assert_eq!(cats[0], (7, MinorityCategory::Noise));
    assert_eq!(cats[1].1, MinorityCategory::Danger);
    assert_eq!(cats[3].1, MinorityCategory::Safe);
    let single: Vec<LabeledPoint> = data.iter().filter(|p| p.label == 0).cloned().collect();
    assert!(bsmote_categorize(&single, 1, 3).is_err());
}

fn random_dataset(seed: u64) -> Vec<LabeledPoint> {
    let mut rng = seeded(seed);
    let n = rng.random_range(20..=200);
    let frac = rng.random_range(0.15..0.45);
    (0..n)
        .map(|_| {
            let label = usize::from(rng.random::<f64>() < frac);
            let shift = if label == 1 { 0.8 } else { 0.0 };
            LabeledPoint::new(vec![rng.random_range(-1.0..1.0) + shift, rng.random_range(-1.0..1.0)], label)
        })
        .collect()
}

#[test]
fn categorization_matches_brute_force_on_random_sets() {
    for seed in 0..50 {
        let data = random_dataset(seed);
        if data.iter().all(|p| p.label == 0) {
            continue;
        }
        assert_eq!(bsmote_categorize(&data, 1, 5).unwrap(), brute_categories(&data, 1, 5));
    }
}

fn on_segment(s: &[f64], p: &[f64], q: &[f64]) -> bool {
    let d = squared_distance(p, q);
    if d == 0.0 {
        return squared_distance(s, p) < 1e-20;
    }
    let u: f64 = s.iter().zip(p).zip(q).map(|((s, p), q)| (s - p) * (q - p)).sum::<f64>() / d;
    let proj: Vec<f64> = p.iter().zip(q).map(|(a, b)| a + u * (b - a)).collect();
    (-1e-12..=1.0 + 1e-12).contains(&u) && squared_distance(&proj, s) < 1e-18
}

#[test]
fn bsmote_resample_contracts() {
    let mut rng = seeded(3);
    let mut data: Vec<LabeledPoint> =
        (0..100).map(|_| LabeledPoint::new(vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)], 0)).collect();
    data.extend((0..40).map(|_| LabeledPoint::new(vec![rng.random_range(0.7..1.4), rng.random_range(0.0..1.0)], 1)));
    let out = bsmote_resample(&data, 1, BsmoteParams::default(), &mut rng).unwrap();
    assert_eq!(out.points.len(), 200);
    assert_eq!(out.synthetic().len(), 60);
    assert_eq!(&out.points[..140], data.as_slice());
    let cats = bsmote_categorize(&data, 1, 10).unwrap();
    for (s, o) in out.synthetic().iter().zip(&out.origins) {
        assert_eq!(s.label, 1);
        assert!(cats.contains(&(o.seed, MinorityCategory::Danger)));
        assert!(cats.iter().any(|&(i, c)| i == o.neighbor && c != MinorityCategory::Noise));
        assert!(on_segment(&s.features, &data[o.seed].features, &data[o.neighbor].features));
    }

    let balanced: Vec<LabeledPoint> = data[..40].iter().cloned().chain(data[100..140].iter().cloned()).collect();
    let same = bsmote_resample(&balanced, 1, BsmoteParams::default(), &mut rng).unwrap();
    assert_eq!(same.points, balanced);
}

#[test]
fn no_danger_points_is_an_explicit_error() {
    let mut data: Vec<LabeledPoint> = (0..30).map(|i| LabeledPoint::new(vec![i as f64 * 0.01], 0)).collect();
    data.extend((0..5).map(|i| LabeledPoint::new(vec![100.0 + i as f64 * 0.01], 1)));
    let err = bsmote_resample(&data, 1, BsmoteParams { k: 2, m: 3, target_ratio: 1.0 }, &mut seeded(0)).unwrap_err();
    assert!(matches!(err, Error::NoDangerPoints { label: 1 }));
    let out = smote_resample(&data, 1, BsmoteParams { k: 2, m: 3, target_ratio: 1.0 }, &mut seeded(0)).unwrap();
    assert_eq!(out.points.iter().filter(|p| p.label == 1).count(), 30);
}

#[test]
fn balance_is_exact_and_reproducible() {
    for seed in 0..50 {
        let mut data = random_dataset(seed);
        data.extend((0..3).map(|i| LabeledPoint::new(vec![5.0 + i as f64, 5.0], 2)));
        if data.iter().filter(|p| p.label == 1).count() < 3 {
            continue;
        }
        let a = balance_classes(&data, BsmoteParams { k: 2, m: 5, target_ratio: 1.0 }, &mut seeded(seed)).unwrap();
        let b = balance_classes(&data, BsmoteParams { k: 2, m: 5, target_ratio: 1.0 }, &mut seeded(seed)).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(&a.points[..data.len()], data.as_slice());
        let mut counts = [0usize; 3];
        for p in &a.points {
            counts[p.label] += 1;
        }
        assert!(counts[0] == counts[1] && counts[1] == counts[2], "{counts:?}");
    }
}
