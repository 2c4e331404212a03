use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use lockgan::config::{FeaturePreset, RunConfig, Task};
use lockgan::pipeline::{execute, replicate_chunks, run_pipeline, summary_text, SYNTHETIC_ID_BASE};
use lockgan::rng::seeded;
use lockgan::Error;
use rand::Rng;

fn small(extra: &str) -> RunConfig {
    let text = format!(
        "# tiny run\n\
         synth_n = 300\n\
         cv_folds = 0   # off\n\
         lgan.epochs = 15\n\
         lgan.batch_size = 32\n\
         lgan.d_pretrain_epochs = 2\n\
         lgan.d_learning_rate = 0.001\n\
         lgan.noise_dim = 4\n\
         lgan.gen_encoder = 4\n\
         lgan.gen_decoder = 4\n\
         lgan.disc_hidden = 4\n\
         lgan.repeat_count = 2\n\
         {extra}\n"
    );
    RunConfig::parse_str(&text).unwrap()
}

#[test]
fn config_text_parses_and_validates() {
    let c = small("seed = 9\nformat = kv\nfeatures = top:mi:4");
    assert_eq!(c.synth_n, 300);
    assert_eq!(c.seed, 9);
    assert_eq!(c.lgan.gen_encoder, vec![4]);
    assert_eq!(c.features, FeaturePreset::Top(lockgan::features::ScoreMethod::Mi, 4));
    c.validate().unwrap();
    assert_eq!(RunConfig::parse_str(&c.to_text()).unwrap().to_text(), c.to_text());

    let err = RunConfig::parse_str("seed = 1\nbogus = 2\n").unwrap_err();
    assert!(matches!(err, Error::Config(ref m) if m.contains("line 2") && m.contains("bogus")), "{err}");
    assert!(matches!(RunConfig::parse_str("task = nope"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::parse_str("no equals sign"), Err(Error::Config(_))));
    assert!(matches!(RunConfig::parse_str("lgan.epochs = many"), Err(Error::Config(_))));

    for bad in ["prev_breaths = 4", "cv_folds = 1", "replicates = 1", "test_fraction = 0", "task = ecg-binary\nprev_breaths = 1"] {
        assert!(matches!(small(bad).validate(), Err(Error::Config(_))), "{bad}");
    }
}

#[test]
fn replicate_chunks_partition_and_stratify() {
    let mut rng = seeded(3);
    let labels: Vec<usize> = (0..203).map(|_| rng.random_range(0..3)).collect();
    let chunks = replicate_chunks(&labels, 10, &mut rng).unwrap();
    let mut all: Vec<usize> = chunks.iter().flatten().copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..203).collect::<Vec<_>>());
    for c in &chunks {
        assert!(c.len() == 20 || c.len() == 21);
        for k in 0..3 {
            let total = labels.iter().filter(|&&l| l == k).count() as f64 / 10.0;
            let here = c.iter().filter(|&&i| labels[i] == k).count() as f64;
            assert!((here - total).abs() <= 1.0);
        }
    }
    assert!(replicate_chunks(&labels[..5], 10, &mut rng).is_err());
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn identical_configs_give_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut ca = small("seed = 5");
    ca.out_dir = a.path().to_path_buf();
    let mut cb = ca.clone();
    cb.out_dir = b.path().to_path_buf();
    let ra = run_pipeline(&ca).unwrap();
    let rb = run_pipeline(&cb).unwrap();
    assert_eq!(summary_text(&ra), summary_text(&rb));
    assert_eq!(ra.algorithms, rb.algorithms);

    let fa = read_dir(a.path());
    let fb = read_dir(b.path());
    assert_eq!(fa, fb);
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    for want in ["model.lgan", "config.txt", "history.csv", "replicates.csv", "summary.txt", "metrics_lgan.txt", "anova.txt"] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }

    let mut other = ca.clone();
    other.seed = 6;
    let ro = execute(&other).unwrap();
    assert_ne!(ro.test_ids, ra.test_ids);
}

#[test]
fn test_rows_never_reach_training() {
    for (task, prev) in [(Task::PvaMulticlass, 0), (Task::PvaMulticlass, 2), (Task::PvaBinaryBsa, 1), (Task::EcgBinary, 0)] {
        let mut c = small("baselines = false");
        c.task = task;
        c.prev_breaths = prev;
        let r = execute(&c).unwrap();
        let test: BTreeSet<u64> = r.test_ids.iter().copied().collect();
        assert_eq!(r.leaked, 0);
        assert!(r.balanced_ids.iter().all(|id| !test.contains(id)), "{task}");
        assert!(r.train_ids.iter().all(|id| !test.contains(id)));
        assert!(r.balanced_ids.iter().filter(|&&id| id >= SYNTHETIC_ID_BASE).count() > 0);
        assert!(r.model.history.all_finite());

        let lgan = r.lgan();
        assert_eq!(lgan.confusion.total() as usize, r.test_ids.len());
        assert_eq!(lgan.replicates.len(), 10);
    }
}

#[test]
fn replicate_groups_match_with_and_without_baselines() {
    let with = execute(&small("baselines = true")).unwrap();
    let without = execute(&small("baselines = false")).unwrap();
    assert_eq!(with.algorithms.len(), 3);
    assert_eq!(without.algorithms.len(), 1);
    for a in with.algorithms.iter().chain(&without.algorithms) {
        assert_eq!(a.replicates.len(), 10);
    }
    assert_eq!(with.algorithms[0], without.algorithms[0]);
    let anova = with.anova.unwrap();
    assert_eq!((anova.df_between, anova.df_within), (2, 27));
    assert!(without.anova.is_none());
}

#[test]
fn stage_errors_name_the_stage() {
    let mut c = small("");
    c.data = Some("/nonexistent/breaths.csv".into());
    match execute(&c) {
        Err(Error::Stage { stage, source }) => {
            assert_eq!(stage, "load");
            assert!(matches!(*source, Error::Io { .. }));
        }
        other => panic!("{other:?}"),
    }
    let c = small("replicates = 1");
    assert!(matches!(execute(&c), Err(Error::Stage { stage: "config", .. })));
    let c = small("features = top:fisher:40");
    assert!(matches!(execute(&c), Err(Error::Stage { stage: "select-features", .. })));
}

#[test]
fn cross_validation_reports_every_fold() {
    let r = execute(&small("cv_folds = 3\nbaselines = false\nlgan.epochs = 5")).unwrap();
    assert_eq!(r.cv_accuracies.len(), 3);
    assert!(r.cv_accuracies.iter().all(|a| (0.0..=1.0).contains(a)));
}
