use lockgan::features::{
    augment_previous, chi_square, fisher_score, mi_gain, normalize_length, normalize_length_with, pearson_corr,
    rank_features, standardize, FeatureMatrix, LengthMode, ScoreMethod, Standardizer,
};
use lockgan::rng::seeded;
use lockgan::Error;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn uniform(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>()).collect()
}

#[test]
fn mi_of_a_balanced_threshold_is_ln2() {
    let mut rng = seeded(5);
    let x = uniform(2000, &mut rng);
    let mut s = x.clone();
    s.sort_by(f64::total_cmp);
    let med = 0.5 * (s[999] + s[1000]);
    let y: Vec<usize> = x.iter().map(|&v| usize::from(v > med)).collect();
    let mi = mi_gain(&x, &y, 3).unwrap();
    assert!((mi - 2f64.ln()).abs() < 0.1 * 2f64.ln(), "{mi}");
}

#[test]
fn mi_of_independent_columns_is_small() {
    for seed in 0..5 {
        let mut rng = seeded(seed);
        let x = uniform(2000, &mut rng);
        let y: Vec<usize> = (0..2000).map(|_| rng.random_range(0..2)).collect();
        assert!(mi_gain(&x, &y, 3).unwrap() < 0.05);
    }
}

#[test]
fn mi_edge_cases() {
    let y: Vec<usize> = (0..40).map(|i| i % 2).collect();
    assert_eq!(mi_gain(&[1.5; 40], &y, 3).unwrap(), 0.0);
    assert_eq!(mi_gain(&[1.5; 40], &[0; 40], 3).unwrap(), 0.0);
    assert!(matches!(mi_gain(&[0.0; 10], &[0; 10], 3), Err(Error::Contract(_))));
    assert!(matches!(mi_gain(&[0.0; 30], &[0; 29], 3), Err(Error::Dimension(_))));
}

#[test]
fn chi_square_under_the_null() {
    let mut accepted = 0;
    for seed in 0..100 {
        let mut rng = seeded(1000 + seed);
        let x = uniform(1000, &mut rng);
        let y: Vec<usize> = (0..1000).map(|_| rng.random_range(0..3)).collect();
        let (_, p) = chi_square(&x, &y, 10).unwrap();
        accepted += usize::from(p > 0.05);
    }
    assert!(accepted >= 90, "{accepted}");
}

#[test]
fn chi_square_separated_and_degenerate() {
    let mut rng = seeded(2);
    let mut x: Vec<f64> = (0..300).map(|_| -rng.random::<f64>() - 0.01).collect();
    x.extend((0..300).map(|_| rng.random::<f64>() + 0.01));
    let y: Vec<usize> = (0..600).map(|i| usize::from(i >= 300)).collect();
    let (stat, p) = chi_square(&x, &y, 2).unwrap();
    assert!((stat - 600.0).abs() < 1e-9);
    assert!(p < 1e-100);
    assert!(matches!(chi_square(&[3.0; 50], &[0; 50], 10), Err(Error::Data(_))));
}

/// Hand-built 2×2 table: bins {a,a,a,b} / {a,b,b,b}.
#[test]
fn chi_square_small_table() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
    let y = [0, 0, 0, 1, 0, 1, 1, 1];
    let (stat, _) = chi_square(&x, &y, 2).unwrap();
    // expected 2 everywhere; (3-2)^2/2 * 4
    assert!((stat - 2.0).abs() < 1e-12);
}

#[test]
fn fisher_examples() {
    // class 0 at 0 ± 0.5, class 1 at 1 ± 0.5: variances 0.25 each
    let x = [-0.5, 0.5, -0.5, 0.5, 0.5, 1.5, 0.5, 1.5];
    let y = [0, 0, 0, 0, 1, 1, 1, 1];
    assert!((fisher_score(&x, &y).unwrap() - 1.0).abs() < 1e-12);
    let x10: Vec<f64> = x.iter().map(|v| v * 10.0).collect();
    assert!((fisher_score(&x10, &y).unwrap() - 1.0).abs() < 1e-12);

    let same = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
    assert!(fisher_score(&same, &[0, 0, 0, 1, 1, 1]).unwrap().abs() < 1e-12);
    assert_eq!(fisher_score(&[0.0, 0.0, 1.0, 1.0], &[0, 0, 1, 1]).unwrap(), f64::INFINITY);
    assert!(fisher_score(&[0.0, 1.0, 2.0], &[0, 0, 1]).is_err());
}

#[test]
fn pearson_examples_and_oracle() {
    let x = [1.0, 3.0, 2.0, 7.0];
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert!((pearson_corr(&x, &x).unwrap() - 1.0).abs() < 1e-15);
    assert!((pearson_corr(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
    assert!(matches!(pearson_corr(&x, &[2.0; 4]), Err(Error::Numerical(_))));

    let mut rng = seeded(3);
    for _ in 0..50 {
        let n = rng.random_range(3..60);
        let a = uniform(n, &mut rng);
        let b: Vec<f64> = a.iter().map(|v| v * 0.3 + rng.random::<f64>()).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a.iter().zip(&b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>() / (n - 1) as f64;
        let sd = |v: &[f64], m: f64| (v.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let want = cov / (sd(&a, ma) * sd(&b, mb));
        assert!((pearson_corr(&a, &b).unwrap() - want).abs() < 1e-12);
    }
}

fn matrix(cols: Vec<Vec<f64>>, labels: Vec<usize>, names: &[&str]) -> FeatureMatrix {
    let rows = (0..labels.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
    FeatureMatrix::new(
        names.iter().map(|s| s.to_string()).collect(),
        rows,
        labels,
        vec!["a".into(), "b".into()],
        None,
    )
    .unwrap()
}

#[test]
fn ranking_finds_the_informative_column() {
    let mut rng = seeded(11);
    let n = 400;
    let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let signal: Vec<f64> = y.iter().map(|&l| l as f64 * 3.0 + rng.random::<f64>()).collect();
    let noise1 = uniform(n, &mut rng);
    let noise2 = uniform(n, &mut rng);
    let m = matrix(vec![noise1.clone(), signal, noise2, noise1], y, &["maxF", "TVi", "minF", "maxF_copy"]);
    for method in [ScoreMethod::Mi, ScoreMethod::Chi2, ScoreMethod::Fisher, ScoreMethod::Pearson] {
        let r = rank_features(&m, method).unwrap();
        assert_eq!(r[0].name, "TVi", "{method}");
        let a = r.iter().find(|s| s.name == "maxF").unwrap().score;
        let b = r.iter().find(|s| s.name == "maxF_copy").unwrap().score;
        assert_eq!(a, b);
        assert!(r.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(r[0].p_value.is_some(), method == ScoreMethod::Chi2);
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let shuffled = m.select_rows(&perm);
    for method in [ScoreMethod::Mi, ScoreMethod::Fisher] {
        let names = |r: Vec<lockgan::features::FeatureScore>| r.into_iter().map(|s| s.name).collect::<Vec<_>>();
        assert_eq!(names(rank_features(&m, method).unwrap()), names(rank_features(&shuffled, method).unwrap()));
    }
}

#[test]
fn augment_previous_contract() {
    let mut rng = seeded(21);
    let groups: Vec<String> = ["p1", "p1", "p2", "p1", "p2", "p2", "p1", "p1", "p3", "p2"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<f64>> = (0..groups.len()).map(|_| uniform(3, &mut rng)).collect();
    let m = FeatureMatrix::new(
        vec!["a".into(), "b".into(), "c".into()],
        rows.clone(),
        vec![0; groups.len()],
        vec!["x".into()],
        Some(groups.clone()),
    )
    .unwrap();

    assert_eq!(augment_previous(&m, 0).unwrap(), (m.clone(), 0));

    let (out, dropped) = augment_previous(&m, 2).unwrap();
    assert_eq!(dropped, 1);
    // p1 has 5 records, p2 has 4
    assert_eq!(out.n_rows(), 3 + 2);
    assert_eq!(out.n_cols(), 9);
    assert_eq!(out.column_names[3], "a_prev1");
    assert_eq!(out.column_names[8], "c_prev2");
    for (r, &id) in out.rows.iter().zip(&out.ids) {
        let i = id as usize;
        let g = &groups[i];
        let earlier: Vec<usize> = (0..i).filter(|&j| &groups[j] == g).collect();
        assert!(earlier.len() >= 2);
        assert_eq!(&r[..3], rows[i].as_slice());
        assert_eq!(&r[3..6], rows[earlier[earlier.len() - 1]].as_slice());
        assert_eq!(&r[6..9], rows[earlier[earlier.len() - 2]].as_slice());
    }
}

#[test]
fn normalize_length_cases() {
    let s: Vec<f64> = (0..200).map(|i| i as f64).collect();
    assert_eq!(normalize_length(&s[..144], 144).unwrap(), s[..144].to_vec());
    let padded = normalize_length(&s[1..101], 144).unwrap();
    assert_eq!(padded.len(), 144);
    assert_eq!(&padded[..100], &s[1..101]);
    assert!(padded[100..].iter().all(|&v| v == 0.0));
    assert_eq!(normalize_length(&s, 144).unwrap(), s[..144].to_vec());
    let sub = normalize_length_with(&s, 100, LengthMode::Subsample).unwrap();
    assert_eq!(sub.len(), 100);
    assert_eq!(sub[1], 2.0);
    assert!(matches!(normalize_length(&[], 144), Err(Error::Data(_))));
}

#[test]
fn standardize_round_trip() {
    let mut rng = seeded(31);
    let n = Normal::new(4.0, 3.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..500).map(|_| vec![n.sample(&mut rng), 7.0, n.sample(&mut rng) * 100.0]).collect();
    let m = FeatureMatrix::new(
        vec!["a".into(), "k".into(), "b".into()],
        rows.clone(),
        vec![0; 500],
        vec!["x".into()],
        None,
    )
    .unwrap();
    let (z, s) = standardize(&m).unwrap();
    for j in [0, 2] {
        let col = z.column(j);
        let mu = col.iter().sum::<f64>() / 500.0;
        let sd = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 500.0).sqrt();
        assert!(mu.abs() < 1e-12);
        assert!((sd - 1.0).abs() < 1e-9);
    }
    assert!(z.column(1).iter().all(|&v| v == 0.0));
    let back = s.inverse(&z.rows);
    for (a, b) in back.iter().zip(&rows) {
        assert!((a[0] - b[0]).abs() < 1e-9 && (a[2] - b[2]).abs() < 1e-9);
    }
    let again = Standardizer::fit(&z.rows).unwrap().transform(&z.rows);
    for (a, b) in again.iter().zip(&z.rows) {
        assert!((a[0] - b[0]).abs() < 1e-9);
    }
}
