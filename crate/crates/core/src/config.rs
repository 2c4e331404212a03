//! Run configuration: flat UTF-8 `key = value` text with `#` comments.
//!
//! Keys prefixed `lgan.` are forwarded to [`LganConfig::set`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::evaluation::{CollapseMode, DEFAULT_FOLDS, DEFAULT_TEST_FRACTION};
use crate::features::{ScoreMethod, BREATH_FEATURES, BSA_PRESET, DTA_PRESET};
use crate::lgan::LganConfig;
use crate::resampling::BsmoteParams;
use crate::synth::{DEFAULT_ANOMALY_FRACTION, DEFAULT_PATIENTS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    PvaBinaryBsa,
    PvaBinaryDta,
    PvaMulticlass,
    EcgBinary,
    EcgMulticlass,
}

impl Task {
    pub fn is_pva(self) -> bool {
        matches!(self, Task::PvaBinaryBsa | Task::PvaBinaryDta | Task::PvaMulticlass)
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pva-binary-bsa" => Ok(Task::PvaBinaryBsa),
            "pva-binary-dta" => Ok(Task::PvaBinaryDta),
            "pva-multiclass" => Ok(Task::PvaMulticlass),
            "ecg-binary" => Ok(Task::EcgBinary),
            "ecg-multiclass" => Ok(Task::EcgMulticlass),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::PvaBinaryBsa => "pva-binary-bsa",
            Task::PvaBinaryDta => "pva-binary-dta",
            Task::PvaMulticlass => "pva-multiclass",
            Task::EcgBinary => "ecg-binary",
            Task::EcgMulticlass => "ecg-multiclass",
        })
    }
}

/// Which feature columns feed the model.
#[derive(Debug, Clone, PartialEq)]
pub enum FeaturePreset {
    /// The task's own list: BSA or DTA preset, all breath features, or all samples.
    Auto,
    Bsa,
    Dta,
    All,
    /// The `n` best columns of the training portion under a scoring method.
    Top(ScoreMethod, usize),
}

impl FromStr for FeaturePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(FeaturePreset::Auto),
            "bsa" => Ok(FeaturePreset::Bsa),
            "dta" => Ok(FeaturePreset::Dta),
            "all" => Ok(FeaturePreset::All),
            other => {
                let parts: Vec<&str> = other.split(':').collect();
                match parts.as_slice() {
                    ["top", method, n] => Ok(FeaturePreset::Top(
                        method.parse()?,
                        n.parse().map_err(|_| Error::Config(format!("bad feature count in {other:?}")))?,
                    )),
                    _ => Err(Error::Config(format!("unknown feature preset {other:?}"))),
                }
            }
        }
    }
}

impl fmt::Display for FeaturePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeaturePreset::Auto => f.write_str("auto"),
            FeaturePreset::Bsa => f.write_str("bsa"),
            FeaturePreset::Dta => f.write_str("dta"),
            FeaturePreset::All => f.write_str("all"),
            FeaturePreset::Top(m, n) => write!(f, "top:{m}:{n}"),
        }
    }
}

impl FeaturePreset {
    /// Fixed column list for the task, or `None` when columns are chosen from data.
    pub fn columns(&self, task: Task) -> Option<Vec<String>> {
        let list: Vec<&str> = match (self, task.is_pva()) {
            (FeaturePreset::Top(..), _) => return None,
            (FeaturePreset::All, true) => BREATH_FEATURES.to_vec(),
            (FeaturePreset::All | FeaturePreset::Auto, false) => return None,
            (FeaturePreset::Bsa, _) => BSA_PRESET.to_vec(),
            (FeaturePreset::Dta, _) => DTA_PRESET.to_vec(),
            (FeaturePreset::Auto, true) => match task {
                Task::PvaBinaryBsa => BSA_PRESET.to_vec(),
                Task::PvaBinaryDta => DTA_PRESET.to_vec(),
                _ => BREATH_FEATURES.to_vec(),
            },
        };
        Some(list.into_iter().map(str::to_string).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Text,
    Kv,
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "kv" => Ok(OutputFormat::Kv),
            other => Err(Error::Config(format!("unknown output format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    /// Input table; a synthetic dataset is generated when absent.
    pub data: Option<PathBuf>,
    pub synth_n: usize,
    pub anomaly_fraction: f64,
    pub patients: usize,
    pub features: FeaturePreset,
    pub prev_breaths: usize,
    pub resample: bool,
    pub bsmote: BsmoteParams,
    pub lgan: LganConfig,
    pub test_fraction: f64,
    /// Folds of cross-validation on the training portion; 0 disables it.
    pub cv_folds: usize,
    pub replicates: usize,
    pub baselines: bool,
    pub collapse: CollapseMode,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::PvaMulticlass,
            data: None,
            synth_n: 2000,
            anomaly_fraction: DEFAULT_ANOMALY_FRACTION,
            patients: DEFAULT_PATIENTS,
            features: FeaturePreset::Auto,
            prev_breaths: 0,
            resample: true,
            bsmote: BsmoteParams::default(),
            lgan: LganConfig::default(),
            test_fraction: DEFAULT_TEST_FRACTION,
            cv_folds: DEFAULT_FOLDS,
            replicates: 10,
            baselines: true,
            collapse: CollapseMode::Literal,
            seed: 0,
            out_dir: PathBuf::from("lgan-out"),
            format: OutputFormat::Text,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "task" => self.task = value.parse()?,
            "data" => self.data = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            "synth_n" => self.synth_n = parse(key, value)?,
            "anomaly_fraction" => self.anomaly_fraction = parse(key, value)?,
            "patients" => self.patients = parse(key, value)?,
            "features" => self.features = value.parse()?,
            "prev_breaths" => self.prev_breaths = parse(key, value)?,
            "resample" => self.resample = parse_bool(key, value)?,
            "bsmote_k" => self.bsmote.k = parse(key, value)?,
            "bsmote_m" => self.bsmote.m = parse(key, value)?,
            "target_ratio" => self.bsmote.target_ratio = parse(key, value)?,
            "test_fraction" => self.test_fraction = parse(key, value)?,
            "cv_folds" => self.cv_folds = parse(key, value)?,
            "replicates" => self.replicates = parse(key, value)?,
            "baselines" => self.baselines = parse_bool(key, value)?,
            "collapse" => self.collapse = value.parse()?,
            "seed" => self.seed = parse(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "format" => self.format = value.parse()?,
            _ => match key.strip_prefix("lgan.") {
                Some(k) if self.lgan.set(k, value)? => {}
                _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
            },
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
            c.set(k.trim(), v.trim()).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", i + 1)),
                other => other,
            })?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.lgan.validate()?;
        if self.prev_breaths > 3 {
            return Err(Error::Config(format!("prev_breaths must be 0..=3, got {}", self.prev_breaths)));
        }
        if !self.task.is_pva() {
            if self.prev_breaths != 0 {
                return Err(Error::Config("prev_breaths applies to breath tasks only".into()));
            }
            if !matches!(self.features, FeaturePreset::Auto | FeaturePreset::All) {
                return Err(Error::Config(format!("feature preset {} needs a breath task", self.features)));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must be in (0, 1), got {}", self.test_fraction)));
        }
        if self.cv_folds == 1 {
            return Err(Error::Config("cv_folds must be 0 (off) or at least 2".into()));
        }
        if self.replicates < 2 {
            return Err(Error::Config("replicates must be at least 2".into()));
        }
        if self.bsmote.k == 0 || self.bsmote.m == 0 {
            return Err(Error::Config("bsmote_k and bsmote_m must be positive".into()));
        }
        Ok(())
    }

    /// Flat text accepted by [`parse_str`](Self::parse_str).
    pub fn to_text(&self) -> String {
        let mut s = format!("task = {}\n", self.task);
        if let Some(d) = &self.data {
            s += &format!("data = {}\n", d.display());
        }
        s += &format!(
            "synth_n = {}\nanomaly_fraction = {:?}\npatients = {}\nfeatures = {}\nprev_breaths = {}\n",
            self.synth_n, self.anomaly_fraction, self.patients, self.features, self.prev_breaths
        );
        s += &format!(
            "resample = {}\nbsmote_k = {}\nbsmote_m = {}\ntarget_ratio = {:?}\n",
            self.resample, self.bsmote.k, self.bsmote.m, self.bsmote.target_ratio
        );
        s += &format!(
            "test_fraction = {:?}\ncv_folds = {}\nreplicates = {}\nbaselines = {}\ncollapse = {}\nseed = {}\n",
            self.test_fraction, self.cv_folds, self.replicates, self.baselines, self.collapse, self.seed
        );
        for line in self.lgan.to_kv().lines() {
            s += &format!("lgan.{line}\n");
        }
        s
    }
}
