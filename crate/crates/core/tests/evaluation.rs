use lockgan::evaluation::{
    binary_collapse, confusion, kfold_split, metrics, metrics_kv, metrics_text, multiclass_accuracy,
    train_test_split, BinaryCounts, CollapseMode, ConfusionMatrix, Metric,
};
use lockgan::rng::seeded;
use lockgan::Error;
use rand::Rng;

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

fn published(counts: [[u64; 3]; 3]) -> ConfusionMatrix {
    ConfusionMatrix::from_counts(
        vec!["Non-PVA".into(), "DTA".into(), "BSA".into()],
        counts.iter().map(|r| r.to_vec()).collect(),
    )
    .unwrap()
}

#[test]
fn kfold_examples() {
    let labels = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
    let plan = kfold_split(&labels, 5, 3).unwrap();
    for f in &plan.folds {
        assert_eq!(f.len(), 2);
        assert_eq!(f.iter().filter(|&&i| labels[i] == 0).count(), 1);
    }
    assert!(matches!(kfold_split(&[0, 0, 1], 2, 0), Err(Error::Contract(_))));
    assert!(kfold_split(&labels, 1, 0).is_err());
}

#[test]
fn kfold_is_stratified_and_exhaustive() {
    let mut rng = seeded(4);
    for trial in 0..30 {
        let k = rng.random_range(2..7);
        let n_classes = rng.random_range(2..5);
        let n = rng.random_range(k * n_classes..300);
        let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
        // guarantee every class has k members
        for c in 0..n_classes {
            for j in 0..k {
                labels[c * k + j] = c;
            }
        }
        let plan = kfold_split(&labels, k, trial).unwrap();
        let mut all: Vec<usize> = plan.folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        for c in 0..n_classes {
            let total = labels.iter().filter(|&&l| l == c).count() as f64;
            for f in &plan.folds {
                let here = f.iter().filter(|&&i| labels[i] == c).count() as f64;
                assert!((here - total / k as f64).abs() <= 1.0);
            }
        }
        let mut rest = plan.train_indices(0);
        rest.extend(&plan.folds[0]);
        rest.sort_unstable();
        assert_eq!(rest.len(), n);
    }
}

#[test]
fn kfold_seeds() {
    let labels: Vec<usize> = (0..100).map(|i| i % 3).collect();
    assert_eq!(kfold_split(&labels, 5, 9).unwrap(), kfold_split(&labels, 5, 9).unwrap());
    let base = kfold_split(&labels, 5, 0).unwrap();
    for s in 1..=10 {
        assert_ne!(kfold_split(&labels, 5, s).unwrap().folds, base.folds);
    }
}

#[test]
fn split_is_stratified() {
    let labels: Vec<usize> = (0..1000).map(|i| usize::from(i % 10 < 3)).collect();
    let (train, test) = train_test_split(&labels, 0.1, &mut seeded(1)).unwrap();
    assert_eq!(test.len(), 100);
    assert_eq!(test.iter().filter(|&&i| labels[i] == 1).count(), 30);
    assert!(train.iter().all(|i| test.binary_search(i).is_err()));
    assert_eq!(train.len() + test.len(), 1000);
    assert!(train_test_split(&labels, 1.0, &mut seeded(1)).is_err());
}

#[test]
fn confusion_matches_tally() {
    let n = names(3);
    let m = confusion(&[0, 1, 2], &[0, 1, 2], &n).unwrap();
    assert_eq!(m.trace(), 3);
    assert_eq!(m.total(), 3);
    let wrong = confusion(&[1, 0, 1], &[0, 1, 0], &names(2)).unwrap();
    assert_eq!(wrong.trace(), 0);
    assert!(matches!(confusion(&[3], &[0], &n), Err(Error::Data(_))));

    let mut rng = seeded(5);
    let pred: Vec<usize> = (0..500).map(|_| rng.random_range(0..3)).collect();
    let truth: Vec<usize> = (0..500).map(|_| rng.random_range(0..3)).collect();
    let m = confusion(&pred, &truth, &n).unwrap();
    for p in 0..3 {
        for t in 0..3 {
            let tally = pred.iter().zip(&truth).filter(|&(&a, &b)| a == p && b == t).count() as u64;
            assert_eq!(m.counts[p][t], tally);
        }
    }
}

#[test]
fn collapse_examples() {
    let id = ConfusionMatrix::from_counts(names(3), vec![vec![10, 0, 0], vec![0, 10, 0], vec![0, 0, 10]]).unwrap();
    assert_eq!(binary_collapse(&id, 0, CollapseMode::Literal).unwrap(), BinaryCounts { tp: 10, fn_: 0, fp: 0, tn: 20 });

    let m = published([[655, 7, 9], [15, 650, 6], [10, 7, 654]]);
    let lit = binary_collapse(&m, 0, CollapseMode::Literal).unwrap();
    assert_eq!(lit, BinaryCounts { tp: 655, fn_: 16, fp: 25, tn: 1317 });
    let conv = binary_collapse(&m, 0, CollapseMode::Conventional).unwrap();
    assert_eq!(conv, BinaryCounts { tp: 655, fn_: 25, fp: 16, tn: 1317 });
    assert_eq!(lit.total(), 2013);
    assert_eq!(conv.total(), 2013);
    assert!(binary_collapse(&m, 3, CollapseMode::Literal).is_err());

    let tp_sum: u64 = (0..3).map(|c| binary_collapse(&m, c, CollapseMode::Literal).unwrap().tp).sum();
    assert_eq!(tp_sum, m.trace());
}

#[test]
fn collapse_conserves_totals_on_random_matrices() {
    let mut rng = seeded(6);
    for _ in 0..100 {
        let k = rng.random_range(2..6);
        let counts: Vec<Vec<u64>> = (0..k).map(|_| (0..k).map(|_| rng.random_range(0..50)).collect()).collect();
        let m = ConfusionMatrix::from_counts(names(k), counts).unwrap();
        for c in 0..k {
            for mode in [CollapseMode::Literal, CollapseMode::Conventional] {
                assert_eq!(binary_collapse(&m, c, mode).unwrap().total(), m.total());
            }
        }
    }
}

#[test]
fn metric_examples() {
    let perfect = metrics(&BinaryCounts { tp: 50, fn_: 0, fp: 0, tn: 50 });
    for v in [perfect.accuracy, perfect.sensitivity, perfect.specificity, perfect.precision] {
        assert_eq!(v, Metric::Value(1.0));
    }
    assert_eq!(perfect.fpr, Metric::Value(0.0));
    let missed = metrics(&BinaryCounts { tp: 0, fn_: 10, fp: 0, tn: 5 });
    assert_eq!(missed.sensitivity, Metric::Value(0.0));
    assert_eq!(missed.precision, Metric::Undefined);

    let mut rng = seeded(7);
    for _ in 0..200 {
        let c = BinaryCounts {
            tp: rng.random_range(0..100),
            fn_: rng.random_range(0..100),
            fp: rng.random_range(0..100),
            tn: rng.random_range(1..100),
        };
        let m = metrics(&c);
        assert!((m.fpr.value().unwrap() + m.specificity.value().unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn accuracy_of_published_blocks() {
    let lgmn = published([[655, 7, 9], [15, 650, 6], [10, 7, 654]]);
    assert!((multiclass_accuracy(&lgmn).unwrap() - 0.973).abs() < 5e-4);
    let convlstm = published([[657, 6, 8], [7, 654, 10], [10, 21, 640]]);
    assert!((multiclass_accuracy(&convlstm).unwrap() - 0.969).abs() < 5e-4);
    let id = ConfusionMatrix::from_counts(names(2), vec![vec![3, 0], vec![0, 4]]).unwrap();
    assert_eq!(multiclass_accuracy(&id).unwrap(), 1.0);
    let empty = ConfusionMatrix::from_counts(names(2), vec![vec![0, 0], vec![0, 0]]).unwrap();
    assert!(multiclass_accuracy(&empty).is_err());
}

#[test]
fn reports_render() {
    let m = published([[655, 7, 9], [15, 650, 6], [10, 7, 654]]);
    let text = metrics_text(&m, CollapseMode::Literal).unwrap();
    assert!(text.contains("Non-PVA"));
    assert!(text.contains("0.9732"));
    let kv = metrics_kv(&m, CollapseMode::Literal).unwrap();
    assert!(kv.lines().all(|l| l.split_once('=').is_some_and(|(k, _)| !k.contains(' '))));
    assert!(kv.contains("Non-PVA.tp=655\n"));
}
