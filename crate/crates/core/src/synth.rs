//! Synthetic breath-feature and heartbeat datasets for desk-scale runs.
//!
//! Breath records are computed from simulated 50 Hz flow curves: a sinusoidal
//! rise into a plateau during inspiration and an exponential decay during
//! expiration. Breath stacking cuts expiration short; double triggering
//! delivers two inspirations in one cycle. Peak flows are drawn independently
//! of the class, so `maxF` and `minF` carry no label information.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::features::{FeatureMatrix, BREATH_FEATURES, ECG_LENGTH};
use crate::rng::Rng;
use crate::{Error, Result};

pub const SAMPLE_RATE_HZ: f64 = 50.0;
pub const DEFAULT_ANOMALY_FRACTION: f64 = 0.3;
pub const DEFAULT_PATIENTS: usize = 37;
pub const BREATH_CLASSES: [&str; 3] = ["Normal", "BSA", "DTA"];
pub const ECG_FIVE_CLASSES: [&str; 5] = ["N", "S", "V", "F", "Q"];
pub const ECG_BINARY_CLASSES: [&str; 2] = ["normal", "abnormal"];
/// Raw heartbeat rows are this long before length normalization.
pub const ECG_RAW_LENGTH: usize = 187;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreathKind {
    Normal,
    Stacked,
    DoubleTrigger,
}

/// Shape parameters of one simulated breath, times in seconds and flows in L/min.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreathParams {
    pub kind: BreathKind,
    pub i_time: f64,
    pub e_time: f64,
    pub peak_flow: f64,
    pub peak_exp_flow: f64,
    /// Fraction of the inspiration spent rising before the plateau.
    pub rise: f64,
}

fn inspiration(ti: f64, peak: f64, rise: f64, dt: f64, out: &mut Vec<f64>) {
    let n = (ti / dt).round() as usize;
    for s in 0..n {
        let t = s as f64 * dt;
        let tr = rise * ti;
        out.push(if t < tr { peak * (0.5 * PI * t / tr).sin() } else { peak });
    }
}

/// Exponential expiration whose volume matches `volume` (L/min * s) when
/// allowed to run to completion; `cut` keeps only the first fraction of it.
fn expiration(te: f64, peak: f64, volume: f64, cut: f64, dt: f64, out: &mut Vec<f64>) {
    let tau = (volume / peak).max(dt);
    let n = ((te * cut) / dt).round().max(1.0) as usize;
    for s in 0..n {
        out.push(-peak * (-(s as f64 * dt) / tau).exp());
    }
}

fn trapz(v: &[f64], dt: f64) -> f64 {
    v.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum()
}

/// Flow samples at [`SAMPLE_RATE_HZ`].
pub fn breath_waveform(p: &BreathParams) -> Vec<f64> {
    let dt = 1.0 / SAMPLE_RATE_HZ;
    let mut f = Vec::new();
    match p.kind {
        BreathKind::Normal => {
            inspiration(p.i_time, p.peak_flow, p.rise, dt, &mut f);
            let vol = trapz(&f, dt);
            expiration(p.e_time, p.peak_exp_flow, vol, 1.0, dt, &mut f);
        }
        BreathKind::Stacked => {
            inspiration(p.i_time, p.peak_flow, p.rise, dt, &mut f);
            let vol = trapz(&f, dt);
            expiration(p.e_time, p.peak_exp_flow, vol, 0.4, dt, &mut f);
        }
        BreathKind::DoubleTrigger => {
            inspiration(p.i_time, p.peak_flow, p.rise, dt, &mut f);
            // brief pause, then the second delivered breath
            f.extend(std::iter::repeat_n(0.0, (0.1 / dt) as usize));
            inspiration(p.i_time * 0.9, p.peak_flow, p.rise, dt, &mut f);
            let vol = trapz(&f.iter().map(|v| v.max(0.0)).collect::<Vec<_>>(), dt);
            expiration(p.e_time, p.peak_exp_flow, vol, 1.0, dt, &mut f);
        }
    }
    f
}

/// Noise-free waveform measurements keyed like [`BREATH_FEATURES`], volumes in mL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreathMeasures {
    pub tvi: f64,
    pub tve: f64,
    pub i_time: f64,
    pub e_time: f64,
    pub max_f: f64,
    pub min_f: f64,
    pub ip_auc: f64,
    pub ep_auc: f64,
}

pub fn measure_breath(flow: &[f64]) -> BreathMeasures {
    let dt = 1.0 / SAMPLE_RATE_HZ;
    let pos: Vec<f64> = flow.iter().map(|v| v.max(0.0)).collect();
    let neg: Vec<f64> = flow.iter().map(|v| (-v).max(0.0)).collect();
    let ip_auc = trapz(&pos, dt);
    let ep_auc = trapz(&neg, dt);
    BreathMeasures {
        tvi: ip_auc / 60.0 * 1000.0,
        tve: ep_auc / 60.0 * 1000.0,
        i_time: flow.iter().filter(|&&v| v > 0.0).count() as f64 * dt,
        e_time: flow.iter().filter(|&&v| v < 0.0).count() as f64 * dt,
        max_f: flow.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_f: flow.iter().copied().fold(f64::INFINITY, f64::min),
        ip_auc,
        ep_auc,
    }
}

fn class_counts(n: usize, fraction: f64, anomaly_classes: usize) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Contract(format!("anomaly fraction must be in (0, 1), got {fraction}")));
    }
    let anomalies = (n as f64 * fraction).round() as usize;
    if anomalies < anomaly_classes || anomalies >= n {
        return Err(Error::Data(format!("n = {n} is too small for every class at fraction {fraction}")));
    }
    let mut counts = vec![n - anomalies];
    for c in 0..anomaly_classes {
        counts.push(anomalies / anomaly_classes + usize::from(c < anomalies % anomaly_classes));
    }
    Ok(counts)
}

fn shuffled_labels(counts: &[usize], rng: &mut Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat_n(c, k)).collect();
    labels.shuffle(rng);
    labels
}

struct Patient {
    i_time: f64,
    e_time: f64,
    peak: f64,
    peak_exp: f64,
}

/// Breath-feature dataset with classes Normal, BSA and DTA.
///
/// `round(n * anomaly_fraction)` records are anomalous, split evenly between
/// BSA and DTA. Records are spread over `patients` contiguous time-ordered groups.
pub fn synth_breaths(n: usize, anomaly_fraction: f64, patients: usize, rng: &mut Rng) -> Result<FeatureMatrix> {
    if patients == 0 || patients > n {
        return Err(Error::Contract(format!("patient count {patients} must be in 1..={n}")));
    }
    let labels = shuffled_labels(&class_counts(n, anomaly_fraction, 2)?, rng);
    let pats: Vec<Patient> = (0..patients)
        .map(|_| Patient {
            i_time: rng.random_range(0.8..1.2),
            e_time: rng.random_range(2.0..3.0),
            peak: rng.random_range(40.0..60.0),
            peak_exp: rng.random_range(50.0..70.0),
        })
        .collect();
    let vol_noise = Normal::new(0.0, 5.0).expect("valid sd");
    let mut rows = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for (i, &label) in labels.iter().enumerate() {
        let pi = i * patients / n;
        let p = &pats[pi];
        let params = BreathParams {
            kind: [BreathKind::Normal, BreathKind::Stacked, BreathKind::DoubleTrigger][label],
            i_time: p.i_time * rng.random_range(0.9..1.1),
            e_time: p.e_time * rng.random_range(0.9..1.1),
            peak_flow: p.peak * rng.random_range(0.9..1.1),
            peak_exp_flow: p.peak_exp * rng.random_range(0.9..1.1),
            rise: rng.random_range(0.2..0.4),
        };
        let m = measure_breath(&breath_waveform(&params));
        let tvi = m.tvi + vol_noise.sample(rng);
        let tve = m.tve + vol_noise.sample(rng);
        let cycle = m.i_time + m.e_time;
        let row = vec![
            tvi,
            tve,
            m.i_time,
            m.e_time,
            m.max_f,
            m.min_f,
            m.ip_auc,
            m.ep_auc,
            m.i_time / m.e_time,
            60.0 / cycle,
            tve / tvi,
        ];
        rows.push(row);
        groups.push(format!("P{:03}", pi + 1));
    }
    FeatureMatrix::new(
        BREATH_FEATURES.iter().map(|s| s.to_string()).collect(),
        rows,
        labels,
        BREATH_CLASSES.iter().map(|s| s.to_string()).collect(),
        Some(groups),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EcgClasses {
    #[default]
    Binary,
    FiveClass,
}

fn gauss(t: f64, mu: f64, sigma: f64, amp: f64) -> f64 {
    amp * (-0.5 * ((t - mu) / sigma).powi(2)).exp()
}

/// One raw heartbeat of [`ECG_RAW_LENGTH`] samples; the beat occupies the
/// first part of the row and the tail is zero, as in segmented beat datasets.
pub fn heartbeat(anomaly: usize, rng: &mut Rng) -> Vec<f64> {
    let beat_len = rng.random_range(110..140);
    let jitter = |rng: &mut Rng, s: f64| 1.0 + rng.random_range(-s..s);
    let (mut p_amp, mut qrs_w, mut qrs_amp, mut t_amp, mut shift) = (0.15, 0.025, 1.0, 0.3, 0.0);
    match anomaly {
        0 => {}
        1 => {
            p_amp = 0.0;
            shift = -0.08;
        }
        2 => {
            qrs_w = 0.07;
            t_amp = -0.35;
        }
        3 => {
            qrs_w = 0.05;
            qrs_amp = 0.6;
        }
        _ => {
            qrs_amp = 0.4;
            t_amp = 0.05;
            p_amp = 0.3;
        }
    }
    let mut out = vec![0.0; ECG_RAW_LENGTH];
    let noise = Normal::new(0.0, 0.01).expect("valid sd");
    for (s, v) in out.iter_mut().enumerate().take(beat_len) {
        let t = s as f64 / beat_len as f64;
        *v = gauss(t, 0.15 + shift, 0.03, p_amp * jitter(rng, 0.1))
            + gauss(t, 0.35 + shift, qrs_w, qrs_amp * jitter(rng, 0.05))
            - gauss(t, 0.31 + shift, 0.015, 0.1)
            + gauss(t, 0.65, 0.06, t_amp * jitter(rng, 0.1))
            + 0.2
            + noise.sample(rng);
    }
    out
}

/// Heartbeat dataset; binary (`normal`/`abnormal`) or five-class (N S V F Q).
/// Rows are the raw beats truncated or zero-padded to 144 samples.
pub fn synth_heartbeats(n: usize, anomaly_fraction: f64, classes: EcgClasses, rng: &mut Rng) -> Result<FeatureMatrix> {
    let n_anom = match classes {
        EcgClasses::Binary => 1,
        EcgClasses::FiveClass => 4,
    };
    let labels = shuffled_labels(&class_counts(n, anomaly_fraction, n_anom)?, rng);
    let mut rows = Vec::with_capacity(n);
    for &l in &labels {
        // binary anomalies draw a morphology from the four abnormal kinds
        let kind = match classes {
            EcgClasses::Binary if l == 1 => rng.random_range(1..5),
            _ => l,
        };
        let raw = heartbeat(kind, rng);
        rows.push(crate::features::normalize_length(&raw, ECG_LENGTH)?);
    }
    let names: Vec<String> = match classes {
        EcgClasses::Binary => ECG_BINARY_CLASSES.iter().map(|s| s.to_string()).collect(),
        EcgClasses::FiveClass => ECG_FIVE_CLASSES.iter().map(|s| s.to_string()).collect(),
    };
    FeatureMatrix::new((0..ECG_LENGTH).map(|i| format!("s{i}")).collect(), rows, labels, names, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    PvaLike,
    EcgLike,
}

/// Dispatches to [`synth_breaths`] or binary [`synth_heartbeats`] with the given seed.
pub fn synth_dataset(kind: SynthKind, n: usize, anomaly_fraction: f64, seed: u64) -> Result<FeatureMatrix> {
    let mut rng = crate::rng::seeded(seed);
    match kind {
        SynthKind::PvaLike => synth_breaths(n, anomaly_fraction, DEFAULT_PATIENTS.min(n), &mut rng),
        SynthKind::EcgLike => synth_heartbeats(n, anomaly_fraction, EcgClasses::Binary, &mut rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn prior_contract() {
        let m = synth_breaths(1000, 0.3, 37, &mut seeded(3)).unwrap();
        let c = m.class_counts();
        assert_eq!(c, vec![700, 150, 150]);
        assert!(synth_breaths(3, 0.1, 1, &mut seeded(3)).is_err());
    }

    #[test]
    fn stacked_breath_exhales_less() {
        let base = BreathParams {
            kind: BreathKind::Normal,
            i_time: 1.0,
            e_time: 2.5,
            peak_flow: 50.0,
            peak_exp_flow: 60.0,
            rise: 0.3,
        };
        let n = measure_breath(&breath_waveform(&base));
        let s = measure_breath(&breath_waveform(&BreathParams { kind: BreathKind::Stacked, ..base }));
        let d = measure_breath(&breath_waveform(&BreathParams { kind: BreathKind::DoubleTrigger, ..base }));
        assert!(s.e_time < 0.5 * n.e_time);
        assert!(s.tve < 0.9 * s.tvi);
        assert!(d.tvi > 1.5 * n.tvi);
        assert_eq!(n.max_f, d.max_f);
    }
}
