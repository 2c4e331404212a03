//! End-to-end driver: split, select, augment, resample, train, evaluate, compare.
//!
//! Resampling touches the training portion only. Every record carries an id;
//! synthetic records get ids from [`SYNTHETIC_ID_BASE`] upward, and the run
//! fails if any test id shows up in the training data.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::baseline::{Classifier, KNearest, LogisticOptions, LogisticRegression};
use crate::config::{FeaturePreset, OutputFormat, RunConfig, Task};
use crate::evaluation::{confusion, kfold_split, metrics_kv, metrics_text, multiclass_accuracy, train_test_split, ConfusionMatrix};
use crate::features::{augment_previous, rank_features, FeatureMatrix, Standardizer};
use crate::io::{fmt_f64, load_breath_csv, load_ecg_csv, EcgLabelSet};
use crate::lgan::{predict, save_model, train_lgan, LganModel, RecordLayout};
use crate::resampling::{balance_classes, LabeledPoint};
use crate::rng::{derive_seed, stage, stage_rng, Rng};
use crate::stats::{anova_kv, anova_text, one_way_anova, tukey_hsd, tukey_kv, tukey_text, AnovaTable, TukeyRow, DEFAULT_ALPHA};
use crate::synth::{synth_breaths, synth_heartbeats, EcgClasses, BREATH_CLASSES};
use crate::{Error, Result};

pub const SYNTHETIC_ID_BASE: u64 = 1 << 32;
pub const BASELINE_NEIGHBOURS: usize = 5;
pub const LGAN_NAME: &str = "LGAN";

fn at<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage { stage, source: Box::new(e) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmResult {
    pub name: String,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    /// Accuracy on each replicate chunk of the test set.
    pub replicates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub task: Task,
    pub columns: Vec<String>,
    pub class_names: Vec<String>,
    pub n_records: usize,
    pub dropped_groups: usize,
    pub train_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
    /// Ids of the resampled training set, originals and synthetic.
    pub balanced_ids: Vec<u64>,
    pub smote_fallbacks: Vec<usize>,
    pub model: LganModel,
    pub cv_accuracies: Vec<f64>,
    /// LGAN first, then baselines.
    pub algorithms: Vec<AlgorithmResult>,
    pub anova: Option<AnovaTable>,
    pub tukey: Option<Vec<TukeyRow>>,
    pub leaked: usize,
    pub files: Vec<PathBuf>,
}

impl PipelineReport {
    pub fn lgan(&self) -> &AlgorithmResult {
        &self.algorithms[0]
    }
}

fn task_classes(task: Task) -> Option<Vec<&'static str>> {
    match task {
        Task::PvaBinaryBsa => Some(vec![BREATH_CLASSES[0], BREATH_CLASSES[1]]),
        Task::PvaBinaryDta => Some(vec![BREATH_CLASSES[0], BREATH_CLASSES[2]]),
        _ => None,
    }
}

/// Raw records for the task, from file or generator.
pub fn load_input(config: &RunConfig) -> Result<FeatureMatrix> {
    let ecg_set = if config.task == Task::EcgBinary { EcgLabelSet::Binary } else { EcgLabelSet::FiveClass };
    let m = match (&config.data, config.task.is_pva()) {
        (Some(p), true) => load_breath_csv(p)?,
        (Some(p), false) => load_ecg_csv(p, ecg_set)?,
        (None, pva) => {
            let mut rng = stage_rng(config.seed, stage::SYNTH);
            if pva {
                synth_breaths(config.synth_n, config.anomaly_fraction, config.patients, &mut rng)?
            } else {
                let classes = if ecg_set == EcgLabelSet::Binary { EcgClasses::Binary } else { EcgClasses::FiveClass };
                synth_heartbeats(config.synth_n, config.anomaly_fraction, classes, &mut rng)?
            }
        }
    };
    match task_classes(config.task) {
        Some(keep) => m.filter_classes(&keep),
        None => Ok(m),
    }
}

fn choose_columns(config: &RunConfig, train: &FeatureMatrix) -> Result<Vec<String>> {
    if let Some(cols) = config.features.columns(config.task) {
        return Ok(cols);
    }
    match config.features {
        FeaturePreset::Top(method, n) => {
            if n == 0 || n > train.n_cols() {
                return Err(Error::Config(format!("top:{method}:{n} needs 1..={} features", train.n_cols())));
            }
            Ok(rank_features(train, method)?.into_iter().take(n).map(|s| s.name).collect())
        }
        _ => Ok(train.column_names.clone()),
    }
}

fn layout_for(config: &RunConfig, n_cols: usize) -> Result<RecordLayout> {
    if config.task.is_pva() {
        RecordLayout::breaths(config.prev_breaths, n_cols)
    } else {
        let l = RecordLayout::ecg();
        if l.features() != n_cols {
            return Err(Error::Config(format!("heartbeat layout needs {} columns, got {n_cols}", l.features())));
        }
        Ok(l)
    }
}

fn rows_with_ids(m: &FeatureMatrix, ids: &BTreeSet<u64>) -> FeatureMatrix {
    let idx: Vec<usize> = (0..m.n_rows()).filter(|&i| ids.contains(&m.ids[i])).collect();
    m.select_rows(&idx)
}

/// Standardizes with statistics of `train` only.
fn scale(train: &FeatureMatrix, test: &FeatureMatrix) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let s = Standardizer::fit(&train.rows)?;
    let tr = FeatureMatrix { rows: s.transform(&train.rows), ..train.clone() };
    let te = FeatureMatrix { rows: s.transform(&test.rows), ..test.clone() };
    Ok((tr, te))
}

/// Balanced copy of `train`; synthetic rows get fresh ids and no group.
pub fn resample_training(
    train: &FeatureMatrix,
    config: &RunConfig,
    rng: &mut Rng,
) -> Result<(FeatureMatrix, Vec<usize>)> {
    if !config.resample {
        return Ok((train.clone(), Vec::new()));
    }
    let pts: Vec<LabeledPoint> =
        train.rows.iter().zip(&train.labels).map(|(r, &l)| LabeledPoint::new(r.clone(), l)).collect();
    let b = balance_classes(&pts, config.bsmote, rng)?;
    let mut ids = train.ids.clone();
    ids.extend((0..(b.points.len() - b.original_len) as u64).map(|i| SYNTHETIC_ID_BASE + i));
    let out = FeatureMatrix {
        column_names: train.column_names.clone(),
        rows: b.points.iter().map(|p| p.features.clone()).collect(),
        labels: b.points.iter().map(|p| p.label).collect(),
        class_names: train.class_names.clone(),
        groups: None,
        ids,
    };
    out.validate()?;
    Ok((out, b.smote_fallbacks))
}

/// Stratified partition of `labels` into `k` chunks: each class is shuffled
/// and dealt round-robin, continuing across classes.
pub fn replicate_chunks(labels: &[usize], k: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
    if k == 0 || labels.len() < k {
        return Err(Error::Data(format!("{} test rows cannot fill {k} replicates", labels.len())));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut chunks = vec![Vec::new(); k];
    let mut next = 0;
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        idx.shuffle(rng);
        for i in idx {
            chunks[next].push(i);
            next = (next + 1) % k;
        }
    }
    for c in &mut chunks {
        c.sort_unstable();
    }
    Ok(chunks)
}

fn score(name: &str, pred: &[usize], test: &FeatureMatrix, chunks: &[Vec<usize>]) -> Result<AlgorithmResult> {
    let cm = confusion(pred, &test.labels, &test.class_names)?;
    let replicates = chunks
        .iter()
        .map(|c| c.iter().filter(|&&i| pred[i] == test.labels[i]).count() as f64 / c.len() as f64)
        .collect();
    Ok(AlgorithmResult { name: name.to_string(), accuracy: multiclass_accuracy(&cm)?, confusion: cm, replicates })
}

fn cross_validate(train: &FeatureMatrix, layout: RecordLayout, config: &RunConfig) -> Result<Vec<f64>> {
    let plan = kfold_split(&train.labels, config.cv_folds, derive_seed(config.seed, stage::CV))?;
    let mut accs = Vec::with_capacity(plan.k);
    for (i, fold) in plan.folds.iter().enumerate() {
        let fold_seed = derive_seed(derive_seed(config.seed, stage::CV), i as u64 + 1);
        let (tr, va) = scale(&train.select_rows(&plan.train_indices(i)), &train.select_rows(fold))?;
        let (bal, _) = resample_training(&tr, config, &mut stage_rng(fold_seed, stage::RESAMPLE))?;
        let model = train_lgan(&bal, layout, &config.lgan, &mut stage_rng(fold_seed, stage::TRAIN))?;
        let pred = predict(&model, &va.rows)?;
        accs.push(multiclass_accuracy(&confusion(&pred, &va.labels, &va.class_names)?)?);
        log::info!("cv fold {}/{}: accuracy {:.4}", i + 1, plan.k, accs[i]);
    }
    Ok(accs)
}

/// Runs every stage and returns the report without touching the file system.
pub fn execute(config: &RunConfig) -> Result<PipelineReport> {
    at("config", config.validate())?;
    let raw = at("load", load_input(config))?;
    let n_records = raw.n_rows();

    let (train_idx, test_idx) = at("split", train_test_split(&raw.labels, config.test_fraction, &mut stage_rng(config.seed, stage::SPLIT)))?;
    let columns = at("select-features", choose_columns(config, &raw.select_rows(&train_idx)))?;
    let selected = at("select-features", raw.select_columns(&columns))?;
    let (augmented, dropped_groups) = at("augment", augment_previous(&selected, config.prev_breaths))?;
    let train_set: BTreeSet<u64> = train_idx.iter().map(|&i| raw.ids[i]).collect();
    let test_set: BTreeSet<u64> = test_idx.iter().map(|&i| raw.ids[i]).collect();
    let (train, test) = at("standardize", scale(&rows_with_ids(&augmented, &train_set), &rows_with_ids(&augmented, &test_set)))?;
    if test.n_rows() == 0 {
        return Err(Error::Stage { stage: "split", source: Box::new(Error::Data("empty test set".into())) });
    }
    let layout = at("train", layout_for(config, columns.len()))?;

    let (balanced, smote_fallbacks) =
        at("resample", resample_training(&train, config, &mut stage_rng(config.seed, stage::RESAMPLE)))?;
    let leaked = balanced.ids.iter().filter(|id| test_set.contains(id)).count();
    if leaked > 0 {
        return Err(Error::Stage {
            stage: "leakage",
            source: Box::new(Error::Contract(format!("{leaked} test records found in training data"))),
        });
    }
    log::info!("training on {} rows ({} original), testing on {}", balanced.n_rows(), train.n_rows(), test.n_rows());

    let model = at("train", train_lgan(&balanced, layout, &config.lgan, &mut stage_rng(config.seed, stage::TRAIN)))?;
    let cv_accuracies = if config.cv_folds > 0 { at("cross-validate", cross_validate(&train, layout, config))? } else { Vec::new() };

    let chunks = at("replicates", replicate_chunks(&test.labels, config.replicates, &mut stage_rng(config.seed, stage::REPLICATES)))?;
    let mut algorithms = vec![at("evaluate", predict(&model, &test.rows).and_then(|p| score(LGAN_NAME, &p, &test, &chunks)))?];
    if config.baselines {
        let k = test.n_classes();
        let lr = at("baseline", LogisticRegression::fit(&balanced.rows, &balanced.labels, k, LogisticOptions::default()))?;
        let kn = at("baseline", KNearest::fit(&balanced.rows, &balanced.labels, k, BASELINE_NEIGHBOURS.min(balanced.n_rows())))?;
        for c in [&lr as &dyn Classifier, &kn] {
            algorithms.push(at("baseline", c.predict(&test.rows).and_then(|p| score(c.name(), &p, &test, &chunks)))?);
        }
    }

    let (anova, tukey) = if algorithms.len() >= 2 {
        let groups: Vec<(String, Vec<f64>)> = algorithms.iter().map(|a| (a.name.clone(), a.replicates.clone())).collect();
        let values: Vec<Vec<f64>> = groups.iter().map(|g| g.1.clone()).collect();
        let table = at("anova", one_way_anova(&values))?;
        let tukey = if table.ss_within > 0.0 { Some(at("tukey", tukey_hsd(&groups, DEFAULT_ALPHA))?) } else { None };
        (Some(table), tukey)
    } else {
        (None, None)
    };

    Ok(PipelineReport {
        task: config.task,
        columns: balanced.column_names.clone(),
        class_names: balanced.class_names.clone(),
        n_records,
        dropped_groups,
        train_ids: train.ids.clone(),
        test_ids: test.ids.clone(),
        balanced_ids: balanced.ids.clone(),
        smote_fallbacks,
        model,
        cv_accuracies,
        algorithms,
        anova,
        tukey,
        leaked,
        files: Vec::new(),
    })
}

fn history_csv(model: &LganModel) -> String {
    let h = &model.history;
    let mut s = String::from("phase,epoch,loss\n");
    for (name, v) in [("pretrain_d", &h.pretrain_d_loss), ("d", &h.d_loss), ("g", &h.g_loss)] {
        for (e, x) in v.iter().enumerate() {
            let _ = writeln!(s, "{name},{},{}", e + 1, fmt_f64(*x));
        }
    }
    s
}

fn replicates_csv(report: &PipelineReport) -> String {
    let mut s = String::from("algorithm,replicate,accuracy\n");
    for a in &report.algorithms {
        for (i, v) in a.replicates.iter().enumerate() {
            let _ = writeln!(s, "{},{},{}", a.name, i + 1, fmt_f64(*v));
        }
    }
    s
}

/// Short human summary; contains nothing that varies between identical runs.
pub fn summary_text(report: &PipelineReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "task {}", report.task);
    let _ = writeln!(s, "classes {}", report.class_names.join(","));
    let _ = writeln!(s, "features {}", report.columns.join(","));
    let _ = writeln!(s, "records {} (dropped groups {})", report.n_records, report.dropped_groups);
    let _ = writeln!(s, "train {} resampled {} test {}", report.train_ids.len(), report.balanced_ids.len(), report.test_ids.len());
    let _ = writeln!(s, "leaked {}", report.leaked);
    let _ = writeln!(s, "history finite {}", report.model.history.all_finite());
    for a in &report.algorithms {
        let _ = writeln!(s, "{} accuracy {:.4}", a.name, a.accuracy);
    }
    if !report.cv_accuracies.is_empty() {
        let mean = report.cv_accuracies.iter().sum::<f64>() / report.cv_accuracies.len() as f64;
        let _ = writeln!(s, "cv accuracy mean {mean:.4} folds {}", report.cv_accuracies.len());
    }
    s
}

fn write(dir: &Path, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    files.push(p);
    Ok(())
}

/// Writes the report files into `config.out_dir`.
pub fn write_report(report: &mut PipelineReport, config: &RunConfig) -> Result<()> {
    let dir = &config.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let model_path = dir.join("model.lgan");
    save_model(&report.model, &model_path)?;
    files.push(model_path);
    write(dir, "config.txt", &config.to_text(), &mut files)?;
    write(dir, "history.csv", &history_csv(&report.model), &mut files)?;
    write(dir, "replicates.csv", &replicates_csv(report), &mut files)?;
    write(dir, "summary.txt", &summary_text(report), &mut files)?;
    let kv = config.format == OutputFormat::Kv;
    let ext = if kv { "kv" } else { "txt" };
    for a in &report.algorithms {
        let body = if kv { metrics_kv(&a.confusion, config.collapse)? } else { metrics_text(&a.confusion, config.collapse)? };
        write(dir, &format!("metrics_{}.{ext}", a.name.to_lowercase()), &body, &mut files)?;
    }
    if let Some(t) = &report.anova {
        let body = if kv { anova_kv(t) } else { anova_text(t, "Algorithm") };
        write(dir, &format!("anova.{ext}"), &body, &mut files)?;
    }
    if let Some(rows) = &report.tukey {
        let body = if kv { tukey_kv(rows) } else { tukey_text(rows) };
        write(dir, &format!("tukey.{ext}"), &body, &mut files)?;
    }
    report.files = files;
    Ok(())
}

/// [`execute`] followed by [`write_report`].
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineReport> {
    let mut report = execute(config)?;
    at("report", write_report(&mut report, config))?;
    Ok(report)
}
