use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lockgan::config::{FeaturePreset, OutputFormat, RunConfig, Task};
use lockgan::evaluation::{confusion, metrics_kv, metrics_text};
use lockgan::features::{augment_previous, rank_features, standardize, ScoreMethod};
use lockgan::io::{load_feature_csv, write_ecg_csv, write_feature_csv};
use lockgan::lgan::{load_model, predict, save_model, train_lgan, RecordLayout};
use lockgan::pipeline::{load_input, resample_training, run_pipeline, summary_text};
use lockgan::rng::{stage, stage_rng};
use lockgan::stats::{anova_kv, anova_text, one_way_anova, tukey_hsd, tukey_kv, tukey_text, DEFAULT_ALPHA};
use lockgan::{Error, Result};

#[derive(Parser)]
#[command(name = "lockgan", version, about = "Lock-GAN anomaly detection on breath and heartbeat records")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
    prev_breaths: Option<u8>,
    #[arg(long, value_parser = ["50", "100", "200"])]
    epochs: Option<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Extra `key=value` settings, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Kv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Pva,
    Ecg,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "pva")]
        kind: Kind,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        anomaly_fraction: Option<f64>,
    },
    /// Load a dataset for the task, select columns, append previous breaths, optionally standardize.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        standardize: bool,
    },
    /// Balance a feature table with Borderline-SMOTE.
    Resample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Rank the columns of a feature table.
    SelectFeatures {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "mi")]
        method: String,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Train on a prepared feature table and save the model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Score a saved model on a feature table.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// One-way ANOVA and Tukey HSD over a `group,...,value` CSV.
    Stats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
    },
    /// Run the full pipeline.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut c = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        c.set(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(o) = &common.out {
        c.out_dir = o.clone();
    }
    if let Some(t) = &common.task {
        c.task = t.parse()?;
    }
    if let Some(p) = common.prev_breaths {
        c.prev_breaths = p.into();
    }
    if let Some(e) = &common.epochs {
        c.lgan.set("epochs", e)?;
    }
    match common.format {
        Some(Format::Text) => c.format = OutputFormat::Text,
        Some(Format::Kv) => c.format = OutputFormat::Kv,
        None => {}
    }
    c.validate()?;
    Ok(c)
}

fn output_file(c: &RunConfig, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(&c.out_dir).map_err(|e| Error::Io { path: c.out_dir.clone(), source: e })?;
    Ok(c.out_dir.join(name))
}

fn layout_of(c: &RunConfig, n_cols: usize) -> Result<RecordLayout> {
    if c.task.is_pva() {
        RecordLayout::breaths(c.prev_breaths, n_cols / (c.prev_breaths + 1))
    } else {
        Ok(RecordLayout::ecg())
    }
}

fn synth(common: &Common, kind: Kind, n: Option<usize>, frac: Option<f64>) -> Result<()> {
    let mut c = resolve(common)?;
    c.data = None;
    c.task = match (kind, c.task.is_pva()) {
        (Kind::Pva, false) => Task::PvaMulticlass,
        (Kind::Ecg, true) => Task::EcgMulticlass,
        _ => c.task,
    };
    if let Some(n) = n {
        c.synth_n = n;
    }
    if let Some(f) = frac {
        c.anomaly_fraction = f;
    }
    let m = load_input(&c)?;
    let path = output_file(&c, if c.task.is_pva() { "breaths.csv" } else { "heartbeats.csv" })?;
    if c.task.is_pva() {
        write_feature_csv(&m, &path)?;
    } else {
        write_ecg_csv(&m, &path)?;
    }
    println!("wrote {} records to {}", m.n_rows(), path.display());
    Ok(())
}

fn preprocess(common: &Common, input: &Path, scale: bool) -> Result<()> {
    let mut c = resolve(common)?;
    c.data = Some(input.to_path_buf());
    let m = load_input(&c)?;
    let m = match c.features.columns(c.task) {
        Some(cols) => m.select_columns(&cols)?,
        None if matches!(c.features, FeaturePreset::Top(..)) => {
            return Err(Error::Config("use select-features for data-driven column choice".into()))
        }
        None => m,
    };
    let (mut m, dropped) = augment_previous(&m, c.prev_breaths)?;
    if scale {
        m = standardize(&m)?.0;
    }
    let path = output_file(&c, "features.csv")?;
    write_feature_csv(&m, &path)?;
    println!("wrote {} records x {} features to {} (dropped groups {dropped})", m.n_rows(), m.n_cols(), path.display());
    Ok(())
}

fn resample(common: &Common, input: &Path) -> Result<()> {
    let c = resolve(common)?;
    let m = load_feature_csv(input)?;
    let (b, fallbacks) = resample_training(&m, &c, &mut stage_rng(c.seed, stage::RESAMPLE))?;
    let path = output_file(&c, "resampled.csv")?;
    write_feature_csv(&b, &path)?;
    println!("class counts before {:?} after {:?}", m.class_counts(), b.class_counts());
    if !fallbacks.is_empty() {
        println!("plain SMOTE used for classes {fallbacks:?}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn select_features(common: &Common, input: &Path, method: &str, top: Option<usize>) -> Result<()> {
    let c = resolve(common)?;
    let method: ScoreMethod = method.parse()?;
    let m = load_feature_csv(input)?;
    let scores = rank_features(&m, method)?;
    let n = top.unwrap_or(scores.len()).min(scores.len());
    for (i, s) in scores.iter().take(n).enumerate() {
        let p = s.p_value.map_or("-".to_string(), |p| format!("{p:.6e}"));
        match c.format {
            OutputFormat::Text => println!("{:>3}  {:<16} {:>14.6}  {p}", i + 1, s.name, s.score),
            OutputFormat::Kv => println!("rank.{}={}\nscore.{}={:?}", i + 1, s.name, s.name, s.score),
        }
    }
    Ok(())
}

fn train(common: &Common, input: &Path) -> Result<()> {
    let c = resolve(common)?;
    let m = load_feature_csv(input)?;
    let layout = layout_of(&c, m.n_cols())?;
    let model = train_lgan(&m, layout, &c.lgan, &mut stage_rng(c.seed, stage::TRAIN))?;
    let path = output_file(&c, "model.lgan")?;
    save_model(&model, &path)?;
    let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} epochs, final d loss {:.6} g loss {:.6}; wrote {}",
        c.lgan.epochs,
        last(&model.history.d_loss),
        last(&model.history.g_loss),
        path.display()
    );
    Ok(())
}

fn eval(common: &Common, model: &Path, input: &Path) -> Result<()> {
    let c = resolve(common)?;
    let model = load_model(model)?;
    let m = load_feature_csv(input)?;
    if m.class_names != model.class_names {
        return Err(Error::Data(format!("table classes {:?} differ from model classes {:?}", m.class_names, model.class_names)));
    }
    let pred = predict(&model, &m.rows)?;
    let cm = confusion(&pred, &m.labels, &m.class_names)?;
    match c.format {
        OutputFormat::Text => print!("{}", metrics_text(&cm, c.collapse)?),
        OutputFormat::Kv => print!("{}", metrics_kv(&cm, c.collapse)?),
    }
    Ok(())
}

fn stats(common: &Common, input: &Path, alpha: f64) -> Result<()> {
    let c = resolve(common)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(input)
        .map_err(|e| Error::Data(format!("{}: {e}", input.display())))?;
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", input.display())))?;
        let name = rec.get(0).unwrap_or("").to_string();
        let raw = rec.get(rec.len().saturating_sub(1)).unwrap_or("");
        let v: f64 = raw.parse().map_err(|_| Error::Data(format!("row {}: cannot parse {raw:?} as a number", i + 1)))?;
        match groups.iter_mut().find(|g| g.0 == name) {
            Some(g) => g.1.push(v),
            None => groups.push((name, vec![v])),
        }
    }
    let values: Vec<Vec<f64>> = groups.iter().map(|g| g.1.clone()).collect();
    let table = one_way_anova(&values)?;
    let rows = tukey_hsd(&groups, alpha)?;
    match c.format {
        OutputFormat::Text => print!("{}\n{}", anova_text(&table, "Group"), tukey_text(&rows)),
        OutputFormat::Kv => print!("{}{}", anova_kv(&table), tukey_kv(&rows)),
    }
    Ok(())
}

fn pipeline(common: &Common) -> Result<()> {
    let c = resolve(common)?;
    let report = run_pipeline(&c)?;
    print!("{}", summary_text(&report));
    println!("wrote {} files to {}", report.files.len(), c.out_dir.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) => 2,
        Error::Numerical(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth { common, kind, n, anomaly_fraction } => synth(common, *kind, *n, *anomaly_fraction),
        Command::Preprocess { common, input, standardize } => preprocess(common, input, *standardize),
        Command::Resample { common, input } => resample(common, input),
        Command::SelectFeatures { common, input, method, top } => select_features(common, input, method, *top),
        Command::Train { common, input } => train(common, input),
        Command::Eval { common, model, input } => eval(common, model, input),
        Command::Stats { common, input, alpha } => stats(common, input, *alpha),
        Command::Pipeline { common } => pipeline(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
