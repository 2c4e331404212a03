use lockgan::features::FeatureMatrix;
use lockgan::lgan::{
    bce_loss, classify, discriminator_graph, discriminator_loss, discriminator_loss_graph, generator_graph,
    generator_loss, generator_loss_graph, jsd, minimax_value, minimax_value_at_optimum, model_from_bytes,
    model_to_bytes, one_hot, optimal_discriminator, predict, save_model, load_model, train_lgan,
    train_lgan_observed, uniform_condition, Discriminator, DiscriminatorSpec, Generator, GeneratorLoss,
    GeneratorSpec, LganConfig, Phase, RecordLayout, StepEvent, TrainObserver,
};
use lockgan::nn::gradcheck::check_gradients;
use lockgan::nn::ComputeGraph;
use lockgan::rng::seeded;
use lockgan::{Error, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

const LN2: f64 = std::f64::consts::LN_2;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn bce_examples() {
    assert!(bce_loss(&[1.0], &[1.0]).unwrap().abs() < 1e-11);
    assert!((bce_loss(&[1.0], &[0.5]).unwrap() - LN2).abs() < 1e-15);
    assert!(bce_loss(&[1.0, 0.0], &[0.5]).is_err());

    let mut rng = seeded(1);
    for _ in 0..100 {
        let logits: Vec<f64> = (0..8).map(|_| rng.random_range(-6.0..6.0)).collect();
        let y: Vec<f64> = (0..8).map(|_| f64::from(rng.random_range(0..2u8))).collect();
        let p: Vec<f64> = logits.iter().map(|&a| sig(a)).collect();
        // logit form: max(a,0) - a y + ln(1 + e^-|a|)
        let direct: f64 =
            logits.iter().zip(&y).map(|(&a, &t)| a.max(0.0) - a * t + (-a.abs()).exp().ln_1p()).sum::<f64>() / 8.0;
        assert!((bce_loss(&y, &p).unwrap() - direct).abs() < 1e-10);
    }
}

#[test]
fn discriminator_loss_examples() {
    assert!(discriminator_loss(&[1.0], &[0.0]).unwrap().abs() < 1e-11);
    assert!((discriminator_loss(&[0.5], &[0.5]).unwrap() - LN2).abs() < 1e-15);
    let mut rng = seeded(2);
    for _ in 0..100 {
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(0.01..0.99)).collect();
        let f: Vec<f64> = (0..7).map(|_| rng.random_range(0.01..0.99)).collect();
        let want = -0.5 * r.iter().map(|v| v.ln()).sum::<f64>() / 5.0
            - 0.5 * f.iter().map(|v| (1.0 - v).ln()).sum::<f64>() / 7.0;
        assert!((discriminator_loss(&r, &f).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn generator_loss_examples() {
    assert!((generator_loss(&[0.5], GeneratorLoss::Saturating).unwrap() + LN2).abs() < 1e-15);
    assert!(generator_loss(&[1.0], GeneratorLoss::NonSaturating).unwrap().abs() < 1e-11);
    let h = 1e-6;
    for i in 1..100 {
        let d = i as f64 / 100.0;
        for v in [GeneratorLoss::Saturating, GeneratorLoss::NonSaturating] {
            let slope = (generator_loss(&[d + h], v).unwrap() - generator_loss(&[d - h], v).unwrap()) / (2.0 * h);
            assert!(slope < 0.0, "{v} at {d}");
        }
    }
}

#[test]
fn optimal_discriminator_examples() {
    let p = [0.2, 0.3, 0.5];
    assert_eq!(optimal_discriminator(&p, &p).unwrap(), vec![0.5; 3]);
    assert_eq!(optimal_discriminator(&[0.6, 0.4, 0.0], &[0.0, 0.5, 0.5]).unwrap()[0], 1.0);
    assert_eq!(optimal_discriminator(&[0.0, 1.0], &[0.0, 1.0]).unwrap()[0], 0.5);
    let d = optimal_discriminator(&[2.0 / 3.0, 1.0 / 3.0], &[1.0 / 3.0, 2.0 / 3.0]).unwrap();
    assert!((d[0] - 2.0 / 3.0).abs() < 1e-15);
    assert!(matches!(optimal_discriminator(&[-0.1, 1.1], &[0.5, 0.5]), Err(Error::Contract(_))));
}

fn random_distribution(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.15 { 0.0 } else { rng.random::<f64>() }).collect();
    let s: f64 = w.iter().sum();
    if s == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    w.iter().map(|v| v / s).collect()
}

/// JSD straight from the entropy form H(M) - (H(P) + H(Q)) / 2.
fn jsd_entropy(p: &[f64], q: &[f64]) -> f64 {
    let h = |v: &mut dyn Iterator<Item = f64>| -> f64 { v.filter(|&x| x > 0.0).map(|x| -x * x.ln()).sum() };
    h(&mut p.iter().zip(q).map(|(a, b)| 0.5 * (a + b))) - 0.5 * (h(&mut p.iter().copied()) + h(&mut q.iter().copied()))
}

#[test]
fn minimax_identity() {
    let mut rng = seeded(3);
    for _ in 0..100 {
        let n = rng.random_range(2..12);
        let (pd, pg) = (random_distribution(n, &mut rng), random_distribution(n, &mut rng));
        let d = optimal_discriminator(&pd, &pg).unwrap();
        let direct = minimax_value(&pd, &pg, &d).unwrap();
        assert!((direct - minimax_value_at_optimum(&pd, &pg).unwrap()).abs() < 1e-10);
        assert!((jsd(&pg, &pd).unwrap() - jsd_entropy(&pg, &pd)).abs() < 1e-12);
    }
    let p = random_distribution(6, &mut rng);
    assert!((minimax_value_at_optimum(&p, &p).unwrap() + 2.0 * LN2).abs() < 1e-12);
    let v = minimax_value_at_optimum(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.3, 0.7]).unwrap();
    assert!(v.abs() < 1e-12);
}

fn tiny_disc(layout: RecordLayout, k: usize) -> DiscriminatorSpec {
    DiscriminatorSpec { layout, repeat_count: 2, hidden_channels: 2, kernel: 3, n_classes: k }
}

fn tiny_gen(layout: RecordLayout, k: usize) -> GeneratorSpec {
    GeneratorSpec { layout, noise_dim: 3, seed_channels: 2, encoder: vec![2], decoder: vec![2], kernel: 3, n_classes: k }
}

#[test]
fn label_enters_the_real_logit_linearly() {
    let mut rng = seeded(4);
    let layout = RecordLayout::new(2, 2, 3).unwrap();
    let d = Discriminator::new(tiny_disc(layout, 3), 0.5, &mut rng).unwrap();
    let x = Tensor::uniform(&[1, 12], 1.0, &mut rng);
    let f = d.spec.feature_width();
    let real_w = &d.params[d.params.len() - 4];
    let base = d.forward(&x, &Tensor::zeros(&[1, 3])).unwrap();
    for j in 0..3 {
        let out = d.forward(&x, &one_hot(&[j], 3)).unwrap();
        assert!((out.real_logit[0] - base.real_logit[0] - real_w.data()[f + j]).abs() < 1e-12);
        assert_eq!(out.class_probs, base.class_probs);
        assert!((out.class_probs.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out.real_prob[0] > 0.0 && out.real_prob[0] < 1.0);
    }
    assert!(matches!(d.forward(&x, &Tensor::zeros(&[1, 2])), Err(Error::Dimension(_))));
}

#[test]
fn discriminator_stack_gradients() {
    for seed in 0..3 {
        let mut rng = seeded(40 + seed);
        let layout = RecordLayout::new(2, 2, 3).unwrap();
        let spec = tiny_disc(layout, 2);
        let d = Discriminator::new(spec.clone(), 0.5, &mut rng).unwrap();
        let real = Tensor::uniform(&[3, 12], 1.0, &mut rng);
        let fake = Tensor::uniform(&[3, 12], 1.0, &mut rng);
        let y = one_hot(&[0, 1, 1], 2);
        let r = check_gradients(
            &d.params,
            |g: &mut ComputeGraph, ids| {
                let (xr, xf, yn) = (g.constant(real.clone()), g.constant(fake.clone()), g.constant(y.clone()));
                let a = discriminator_graph(g, &spec, ids, xr, yn)?;
                let b = discriminator_graph(g, &spec, ids, xf, yn)?;
                let adv = discriminator_loss_graph(g, a.real_prob, b.real_prob);
                let ce = lockgan::lgan::cross_entropy_graph(g, a.class_probs, yn)?;
                g.add(adv, ce)
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(r.passes(1e-3), "{r:?}");
    }
}

#[test]
fn generator_stack_gradients() {
    for seed in 0..3 {
        let mut rng = seeded(60 + seed);
        let layout = RecordLayout::new(2, 2, 2).unwrap();
        let gspec = tiny_gen(layout, 2);
        let gen = Generator::new(gspec.clone(), 0.5, &mut rng).unwrap();
        let d = Discriminator::new(tiny_disc(layout, 2), 0.5, &mut rng).unwrap();
        let z = Tensor::uniform(&[2, 3], 1.0, &mut rng);
        let c = one_hot(&[1, 0], 2);
        let r = check_gradients(
            &gen.params,
            |g: &mut ComputeGraph, ids| {
                let dids = d.bind(g, false);
                let (zn, cn) = (g.constant(z.clone()), g.constant(c.clone()));
                let fake = generator_graph(g, &gspec, ids, zn, cn)?;
                let out = discriminator_graph(g, &d.spec, &dids, fake, cn)?;
                Ok(generator_loss_graph(g, out.real_prob, GeneratorLoss::NonSaturating))
            },
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(r.passes(1e-3), "{r:?}");
    }
}

fn matrix(rows: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> FeatureMatrix {
    let names = (0..rows[0].len()).map(|j| format!("f{j}")).collect();
    FeatureMatrix::new(names, rows, labels, (0..k).map(|c| format!("c{c}")).collect(), None).unwrap()
}

fn small_config(epochs: usize) -> LganConfig {
    let mut c = LganConfig::default();
    c.epochs = epochs;
    c.batch_size = 32;
    c.d_pretrain_epochs = 2;
    c.noise_dim = 4;
    c.gen_encoder = vec![4];
    c.gen_decoder = vec![4];
    c.disc_hidden = 4;
    c.repeat_count = 2;
    c
}

fn separable(n: usize, seed: u64) -> FeatureMatrix {
    let mut rng = seeded(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let rows = labels
        .iter()
        .map(|&l| (0..4).map(|_| rng.random_range(-0.5..0.5) + if l == 1 { 1.0 } else { -1.0 }).collect())
        .collect();
    matrix(rows, labels, 2)
}

fn checksum(ts: &[Tensor]) -> [u8; 32] {
    let mut h = Sha256::new();
    for t in ts {
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().into()
}

#[derive(Default)]
struct LockAudit {
    last: Option<([u8; 32], [u8; 32])>,
    steps: usize,
    violations: usize,
}

impl TrainObserver for LockAudit {
    fn on_step(&mut self, event: StepEvent, generator: &[Tensor], discriminator: &[Tensor]) {
        let now = (checksum(generator), checksum(discriminator));
        if let Some((g, d)) = self.last {
            let frozen_same = match event.phase {
                Phase::Generator => d == now.1,
                Phase::Discriminator | Phase::Pretrain => g == now.0,
            };
            self.violations += usize::from(!frozen_same);
        }
        self.steps += 1;
        self.last = Some(now);
    }
}

#[test]
fn frozen_network_never_moves() {
    let data = separable(96, 5);
    let mut audit = LockAudit::default();
    let layout = RecordLayout::breaths(0, 4).unwrap();
    let model = train_lgan_observed(&data, layout, &small_config(3), &mut seeded(5), &mut audit).unwrap();
    assert_eq!(audit.violations, 0);
    assert_eq!(audit.steps, 2 * 3 + 3 * 3 * 2);
    assert_eq!(model.history.d_loss.len(), 3);
    assert_eq!(model.history.pretrain_d_loss.len(), 2);
    assert!(model.history.all_finite());
}

#[test]
fn training_is_deterministic_and_separates_a_toy_set() {
    let data = separable(200, 6);
    let layout = RecordLayout::breaths(0, 4).unwrap();
    let mut cfg = small_config(20);
    cfg.d_optimizer = lockgan::nn::OptimizerConfig::adam(1e-3);
    let a = train_lgan(&data, layout, &cfg, &mut seeded(6)).unwrap();
    let b = train_lgan(&data, layout, &cfg, &mut seeded(6)).unwrap();
    assert_eq!(a, b);
    let test = separable(200, 7);
    let pred = predict(&a, &test.rows).unwrap();
    let acc = pred.iter().zip(&test.labels).filter(|(p, l)| p == l).count() as f64 / 200.0;
    assert!(acc >= 0.95, "{acc}");
    let (c, p) = classify(&a, &test.rows[0]).unwrap();
    assert_eq!(c, pred[0]);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(classify(&a, &[0.0; 3]).is_err());
}

#[test]
fn gaussian_mixture_smoke() {
    let mut rng = seeded(8);
    let (lo, hi) = (Normal::new(0.5, 0.3).unwrap(), Normal::new(1.5, 0.3).unwrap());
    let rows: Vec<Vec<f64>> =
        (0..500).map(|i| vec![if i % 2 == 0 { lo.sample(&mut rng) } else { hi.sample(&mut rng) }]).collect();
    let data_mean = rows.iter().map(|r| r[0]).sum::<f64>() / 500.0;
    let data = matrix(rows.clone(), vec![0; 500], 1);
    let mut cfg = small_config(100);
    cfg.batch_size = 16;
    cfg.d_optimizer = lockgan::nn::OptimizerConfig::adam(1e-3);
    let model = train_lgan(&data, RecordLayout::breaths(0, 1).unwrap(), &cfg, &mut seeded(8)).unwrap();
    assert!(model.history.all_finite());

    let z = Tensor::new(vec![2000, cfg.noise_dim], (0..2000 * cfg.noise_dim).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect())
        .unwrap();
    let fake = model.generator.generate(&z, &uniform_condition(2000, 1)).unwrap();
    let fake_mean = fake.data().iter().sum::<f64>() / 2000.0;
    assert!((fake_mean - data_mean).abs() < 0.5, "generated mean {fake_mean} vs {data_mean}");
    let real = Tensor::from_rows(&rows).unwrap();
    let d = model.discriminator.forward(&real, &uniform_condition(500, 1)).unwrap();
    let d_mean = d.real_prob.iter().sum::<f64>() / 500.0;
    assert!(d_mean > 0.3 && d_mean < 0.7, "{d_mean}");
}

#[test]
fn persistence_round_trip() {
    let data = separable(64, 9);
    let layout = RecordLayout::breaths(0, 4).unwrap();
    let model = train_lgan(&data, layout, &small_config(2), &mut seeded(9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.lgan");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(model_to_bytes(&back), std::fs::read(&path).unwrap());

    let mut rng = seeded(10);
    let recs: Vec<Vec<f64>> = (0..100).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    for r in &recs {
        assert_eq!(classify(&model, r).unwrap(), classify(&back, r).unwrap());
    }

    let bytes = model_to_bytes(&model);
    for cut in [0, 5, 40, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(model_from_bytes(&bytes[..cut]), Err(Error::CorruptModel(_))), "cut {cut}");
    }
    let mut flipped = bytes.clone();
    flipped[bytes.len() / 2] ^= 1;
    assert!(matches!(model_from_bytes(&flipped), Err(Error::CorruptModel(_))));
    let mut versioned = bytes;
    versioned[8] = 99;
    assert!(matches!(model_from_bytes(&versioned), Err(Error::VersionMismatch { found: 99, .. })));
}
