//! Lock-GAN training: a discriminator-only warm-up, then alternating phases in
//! which one network is frozen while the other updates.

use rand::seq::IndexedRandom;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::loss::{cross_entropy_graph, discriminator_loss_graph, generator_loss_graph, GeneratorLoss};
use super::network::{
    discriminator_graph, generator_graph, one_hot, uniform_condition, Discriminator, DiscriminatorSpec, Generator,
    GeneratorSpec, RecordLayout,
};
use crate::features::FeatureMatrix;
use crate::nn::{ComputeGraph, OptimizerConfig, OptimizerState, UpdateRule};
use crate::rng::Rng;
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LganConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub d_pretrain_epochs: usize,
    pub d_steps: usize,
    pub g_steps: usize,
    pub d_optimizer: OptimizerConfig,
    pub g_optimizer: OptimizerConfig,
    pub generator_loss: GeneratorLoss,
    /// Weight of the information regularizer; only 0 is supported.
    pub lambda: f64,
    pub init_bound: f64,
    pub noise_dim: usize,
    pub gen_seed_channels: usize,
    pub gen_encoder: Vec<usize>,
    pub gen_decoder: Vec<usize>,
    pub disc_hidden: usize,
    pub repeat_count: usize,
    pub kernel: usize,
    pub seed: u64,
}

pub const EPOCH_CHOICES: [usize; 3] = [50, 100, 200];

impl Default for LganConfig {
    fn default() -> Self {
        LganConfig {
            epochs: 100,
            batch_size: 64,
            d_pretrain_epochs: 5,
            d_steps: 1,
            g_steps: 1,
            d_optimizer: OptimizerConfig::adam(1e-4),
            g_optimizer: OptimizerConfig::sgd(0.005, 0.6, 0.1),
            generator_loss: GeneratorLoss::NonSaturating,
            lambda: 0.0,
            init_bound: 0.08,
            noise_dim: 16,
            gen_seed_channels: 4,
            gen_encoder: vec![8],
            gen_decoder: vec![8],
            disc_hidden: 8,
            repeat_count: 5,
            kernel: 3,
            seed: 0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl LganConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("d_steps", self.d_steps),
            ("g_steps", self.g_steps),
            ("noise_dim", self.noise_dim),
            ("gen_seed_channels", self.gen_seed_channels),
            ("disc_hidden", self.disc_hidden),
            ("repeat_count", self.repeat_count),
            ("kernel", self.kernel),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.lambda != 0.0 {
            return Err(Error::Config(format!("lambda must be 0, got {}", self.lambda)));
        }
        if !(self.init_bound > 0.0 && self.init_bound.is_finite()) {
            return Err(Error::Config(format!("init_bound {} must be > 0", self.init_bound)));
        }
        if self.gen_encoder.is_empty() {
            return Err(Error::Config("gen_encoder needs at least one layer".into()));
        }
        self.d_optimizer.validate()?;
        self.g_optimizer.validate()
    }

    /// Sets one `key = value` option. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "d_pretrain_epochs" => self.d_pretrain_epochs = parse(key, value)?,
            "d_steps" => self.d_steps = parse(key, value)?,
            "g_steps" => self.g_steps = parse(key, value)?,
            "d_optimizer" => self.d_optimizer.rule = value.trim().parse::<UpdateRule>()?,
            "d_learning_rate" => self.d_optimizer.learning_rate = parse(key, value)?,
            "d_momentum" => self.d_optimizer.momentum = parse(key, value)?,
            "d_l2" => self.d_optimizer.l2 = parse(key, value)?,
            "g_optimizer" => self.g_optimizer.rule = value.trim().parse::<UpdateRule>()?,
            "g_learning_rate" => self.g_optimizer.learning_rate = parse(key, value)?,
            "g_momentum" => self.g_optimizer.momentum = parse(key, value)?,
            "g_l2" => self.g_optimizer.l2 = parse(key, value)?,
            "generator_loss" => self.generator_loss = value.trim().parse()?,
            "lambda" => self.lambda = parse(key, value)?,
            "init_bound" => self.init_bound = parse(key, value)?,
            "noise_dim" => self.noise_dim = parse(key, value)?,
            "gen_seed_channels" => self.gen_seed_channels = parse(key, value)?,
            "gen_encoder" => self.gen_encoder = parse_list(key, value)?,
            "gen_decoder" => self.gen_decoder = parse_list(key, value)?,
            "disc_hidden" => self.disc_hidden = parse(key, value)?,
            "repeat_count" => self.repeat_count = parse(key, value)?,
            "kernel" => self.kernel = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// `key = value` lines accepted by [`set`](Self::set), floats in round-trip form.
    pub fn to_kv(&self) -> String {
        let d = &self.d_optimizer;
        let g = &self.g_optimizer;
        [
            format!("epochs = {}", self.epochs),
            format!("batch_size = {}", self.batch_size),
            format!("d_pretrain_epochs = {}", self.d_pretrain_epochs),
            format!("d_steps = {}", self.d_steps),
            format!("g_steps = {}", self.g_steps),
            format!("d_optimizer = {}", d.rule),
            format!("d_learning_rate = {:?}", d.learning_rate),
            format!("d_momentum = {:?}", d.momentum),
            format!("d_l2 = {:?}", d.l2),
            format!("g_optimizer = {}", g.rule),
            format!("g_learning_rate = {:?}", g.learning_rate),
            format!("g_momentum = {:?}", g.momentum),
            format!("g_l2 = {:?}", g.l2),
            format!("generator_loss = {}", self.generator_loss),
            format!("lambda = {:?}", self.lambda),
            format!("init_bound = {:?}", self.init_bound),
            format!("noise_dim = {}", self.noise_dim),
            format!("gen_seed_channels = {}", self.gen_seed_channels),
            format!("gen_encoder = {}", join(&self.gen_encoder)),
            format!("gen_decoder = {}", join(&self.gen_decoder)),
            format!("disc_hidden = {}", self.disc_hidden),
            format!("repeat_count = {}", self.repeat_count),
            format!("kernel = {}", self.kernel),
            format!("seed = {}", self.seed),
        ]
        .join("\n")
            + "\n"
    }

    pub fn generator_spec(&self, layout: RecordLayout, n_classes: usize) -> GeneratorSpec {
        GeneratorSpec {
            layout,
            noise_dim: self.noise_dim,
            seed_channels: self.gen_seed_channels,
            encoder: self.gen_encoder.clone(),
            decoder: self.gen_decoder.clone(),
            kernel: self.kernel,
            n_classes,
        }
    }

    pub fn discriminator_spec(&self, layout: RecordLayout, n_classes: usize) -> DiscriminatorSpec {
        DiscriminatorSpec {
            layout,
            repeat_count: self.repeat_count,
            hidden_channels: self.disc_hidden,
            kernel: self.kernel,
            n_classes,
        }
    }
}

/// Per-epoch mean losses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LganHistory {
    pub pretrain_d_loss: Vec<f64>,
    pub d_loss: Vec<f64>,
    pub g_loss: Vec<f64>,
}

impl LganHistory {
    pub fn all_finite(&self) -> bool {
        self.pretrain_d_loss.iter().chain(&self.d_loss).chain(&self.g_loss).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Discriminator update during the warm-up lock.
    Pretrain,
    Discriminator,
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepEvent {
    /// Network that was just updated.
    pub phase: Phase,
    pub epoch: usize,
    pub step: u64,
}

/// Called after every optimizer step with both parameter sets.
pub trait TrainObserver {
    fn on_step(&mut self, event: StepEvent, generator: &[Tensor], discriminator: &[Tensor]);
}

pub struct NoObserver;

impl TrainObserver for NoObserver {
    fn on_step(&mut self, _: StepEvent, _: &[Tensor], _: &[Tensor]) {}
}

#[derive(Debug, Clone, PartialEq)]
pub struct LganModel {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub history: LganHistory,
    pub config: LganConfig,
    pub class_names: Vec<String>,
}

impl LganModel {
    pub fn layout(&self) -> RecordLayout {
        self.discriminator.spec.layout
    }

    pub fn n_classes(&self) -> usize {
        self.discriminator.spec.n_classes
    }
}

pub fn train_lgan(train: &FeatureMatrix, layout: RecordLayout, config: &LganConfig, rng: &mut Rng) -> Result<LganModel> {
    train_lgan_observed(train, layout, config, rng, &mut NoObserver)
}

struct Trainer<'a> {
    x: &'a [Vec<f64>],
    labels: &'a [usize],
    k: usize,
    config: &'a LganConfig,
    gen: Generator,
    disc: Discriminator,
    d_opt: OptimizerState,
    g_opt: OptimizerState,
    step: u64,
}

impl Trainer<'_> {
    fn noise(&self, n: usize, rng: &mut Rng) -> Tensor {
        let data = (0..n * self.config.noise_dim).map(|_| StandardNormal.sample(rng)).collect();
        Tensor::new(vec![n, self.config.noise_dim], data).expect("noise shape")
    }

    fn fake_labels(&self, n: usize, rng: &mut Rng) -> Vec<usize> {
        (0..n).map(|_| *self.labels.choose(rng).expect("non-empty training set")).collect()
    }

    fn d_step(&mut self, batch: &[usize], rng: &mut Rng) -> Result<f64> {
        let n = batch.len();
        let real = Tensor::from_rows(&batch.iter().map(|&i| self.x[i].clone()).collect::<Vec<_>>())?;
        let real_y = one_hot(&batch.iter().map(|&i| self.labels[i]).collect::<Vec<_>>(), self.k);
        let z = self.noise(n, rng);
        let fake_y = one_hot(&self.fake_labels(n, rng), self.k);
        let fake = self.gen.generate(&z, &fake_y)?;

        let mut g = ComputeGraph::new();
        let ids = self.disc.bind(&mut g, true);
        let xr = g.constant(real);
        let yr = g.constant(real_y);
        let xf = g.constant(fake);
        let yf = g.constant(fake_y);
        let spec = &self.disc.spec;
        let on_real = discriminator_graph(&mut g, spec, &ids, xr, yr)?;
        let on_fake = discriminator_graph(&mut g, spec, &ids, xf, yf)?;
        let adv = discriminator_loss_graph(&mut g, on_real.real_prob, on_fake.real_prob);
        let ce = cross_entropy_graph(&mut g, on_real.class_probs, yr)?;
        let loss = g.add(adv, ce)?;
        let value = g.value(loss).item()?;
        let mut grads = g.backward(loss)?;
        let grads: Vec<Tensor> = ids.iter().map(|&id| grads.take(id).expect("trainable")).collect();
        self.d_opt.step(&mut self.disc.params, &grads)?;
        Ok(value)
    }

    fn g_step(&mut self, n: usize, rng: &mut Rng) -> Result<f64> {
        let z = self.noise(n, rng);
        let cond = one_hot(&self.fake_labels(n, rng), self.k);
        let mut g = ComputeGraph::new();
        let gen_ids = self.gen.bind(&mut g, true);
        let disc_ids = self.disc.bind(&mut g, false);
        let zn = g.constant(z);
        let cn = g.constant(cond);
        let fake = generator_graph(&mut g, &self.gen.spec, &gen_ids, zn, cn)?;
        let out = discriminator_graph(&mut g, &self.disc.spec, &disc_ids, fake, cn)?;
        let loss = generator_loss_graph(&mut g, out.real_prob, self.config.generator_loss);
        let value = g.value(loss).item()?;
        let mut grads = g.backward(loss)?;
        let grads: Vec<Tensor> = gen_ids.iter().map(|&id| grads.take(id).expect("trainable")).collect();
        self.g_opt.step(&mut self.gen.params, &grads)?;
        Ok(value)
    }

    fn notify(&mut self, obs: &mut dyn TrainObserver, phase: Phase, epoch: usize) {
        self.step += 1;
        obs.on_step(StepEvent { phase, epoch, step: self.step }, &self.gen.params, &self.disc.params);
    }
}

fn guard(value: f64, what: &str, epoch: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Numerical(format!("{what} loss became {value} at epoch {epoch}")))
    }
}

fn batches(n: usize, m: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(m).map(<[usize]>::to_vec).collect()
}

/// Trains generator and discriminator on `train`, reporting every optimizer
/// step to `observer`.
///
/// One epoch is one pass over the shuffled training rows in batches of
/// `batch_size`. Each batch drives one discriminator update; after every
/// `d_steps` discriminator updates the generator takes `g_steps` updates.
pub fn train_lgan_observed(
    train: &FeatureMatrix,
    layout: RecordLayout,
    config: &LganConfig,
    rng: &mut Rng,
    observer: &mut dyn TrainObserver,
) -> Result<LganModel> {
    config.validate()?;
    if train.n_rows() == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    if train.n_cols() != layout.features() {
        return Err(Error::Dimension(format!(
            "training records have {} features, layout expects {}",
            train.n_cols(),
            layout.features()
        )));
    }
    let k = train.n_classes();
    let gen = Generator::new(config.generator_spec(layout, k), config.init_bound, rng)?;
    let disc = Discriminator::new(config.discriminator_spec(layout, k), config.init_bound, rng)?;
    let d_opt = OptimizerState::new(config.d_optimizer, &disc.params)?;
    let g_opt = OptimizerState::new(config.g_optimizer, &gen.params)?;
    let mut t = Trainer { x: &train.rows, labels: &train.labels, k, config, gen, disc, d_opt, g_opt, step: 0 };
    let m = config.batch_size.min(train.n_rows());
    let mut history = LganHistory::default();

    for epoch in 0..config.d_pretrain_epochs {
        let mut total = 0.0;
        let bs = batches(train.n_rows(), m, rng);
        for b in &bs {
            total += guard(t.d_step(b, rng)?, "discriminator", epoch)?;
            t.notify(observer, Phase::Pretrain, epoch);
        }
        history.pretrain_d_loss.push(total / bs.len() as f64);
        log::debug!("pretrain epoch {epoch}: d_loss {}", total / bs.len() as f64);
    }

    for epoch in 0..config.epochs {
        let (mut d_total, mut d_count, mut g_total, mut g_count) = (0.0, 0usize, 0.0, 0usize);
        let bs = batches(train.n_rows(), m, rng);
        for (i, b) in bs.iter().enumerate() {
            d_total += guard(t.d_step(b, rng)?, "discriminator", epoch)?;
            d_count += 1;
            t.notify(observer, Phase::Discriminator, epoch);
            if (i + 1) % config.d_steps == 0 || i + 1 == bs.len() {
                for _ in 0..config.g_steps {
                    g_total += guard(t.g_step(m, rng)?, "generator", epoch)?;
                    g_count += 1;
                    t.notify(observer, Phase::Generator, epoch);
                }
            }
        }
        history.d_loss.push(d_total / d_count as f64);
        history.g_loss.push(g_total / g_count as f64);
        log::debug!("epoch {epoch}: d_loss {} g_loss {}", d_total / d_count as f64, g_total / g_count as f64);
    }

    Ok(LganModel {
        generator: t.gen,
        discriminator: t.disc,
        history,
        config: config.clone(),
        class_names: train.class_names.clone(),
    })
}

const EVAL_BATCH: usize = 256;

/// Class probabilities from the discriminator's class head, with the label
/// condition set to the uniform vector.
pub fn class_probabilities(model: &LganModel, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let width = model.layout().features();
    if let Some(r) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::Dimension(format!("record width {} does not match model width {width}", r.len())));
    }
    let k = model.n_classes();
    let mut out = Vec::with_capacity(rows.len());
    for chunk in rows.chunks(EVAL_BATCH) {
        let x = Tensor::from_rows(chunk)?;
        let probs = model.discriminator.forward(&x, &uniform_condition(chunk.len(), k))?.class_probs;
        out.extend(probs.data().chunks(k).map(<[f64]>::to_vec));
    }
    Ok(out)
}

/// Index of the largest probability; ties go to the lower index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn classify(model: &LganModel, record: &[f64]) -> Result<(usize, Vec<f64>)> {
    let p = class_probabilities(model, std::slice::from_ref(&record.to_vec()))?.remove(0);
    Ok((argmax(&p), p))
}

pub fn predict(model: &LganModel, rows: &[Vec<f64>]) -> Result<Vec<usize>> {
    Ok(class_probabilities(model, rows)?.iter().map(|p| argmax(p)).collect())
}
