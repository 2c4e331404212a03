//! Adversarial losses and the closed-form optimum of the minimax game.

use std::fmt;
use std::str::FromStr;

use crate::nn::{ComputeGraph, NodeId};
use crate::{Error, Result};

pub const PROB_EPS: f64 = 1e-12;

fn clamp_p(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

/// `−Σ[y ln p + (1−y) ln(1−p)] / n` with `p` clamped away from 0 and 1.
pub fn bce_loss(y: &[f64], p: &[f64]) -> Result<f64> {
    if y.len() != p.len() || y.is_empty() {
        return Err(Error::Dimension(format!("bce_loss: {} targets vs {} probabilities", y.len(), p.len())));
    }
    Ok(-mean(
        y.iter().zip(p).map(|(&y, &p)| {
            let p = clamp_p(p);
            y * p.ln() + (1.0 - y) * (1.0 - p).ln()
        }),
        y.len(),
    ))
}

/// `−½·mean(ln d_real) − ½·mean(ln(1 − d_fake))`.
pub fn discriminator_loss(d_real: &[f64], d_fake: &[f64]) -> Result<f64> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Dimension("discriminator_loss of an empty batch".into()));
    }
    let real = mean(d_real.iter().map(|&p| clamp_p(p).ln()), d_real.len());
    let fake = mean(d_fake.iter().map(|&p| (1.0 - clamp_p(p)).ln()), d_fake.len());
    Ok(-0.5 * real - 0.5 * fake)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorLoss {
    /// `mean(ln(1 − D(G(z))))`, minimized.
    Saturating,
    /// `−mean(ln D(G(z)))`.
    #[default]
    NonSaturating,
}

impl FromStr for GeneratorLoss {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saturating" => Ok(GeneratorLoss::Saturating),
            "nonsaturating" => Ok(GeneratorLoss::NonSaturating),
            other => Err(Error::Config(format!("unknown generator loss {other:?}"))),
        }
    }
}

impl fmt::Display for GeneratorLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GeneratorLoss::Saturating => "saturating",
            GeneratorLoss::NonSaturating => "nonsaturating",
        })
    }
}

pub fn generator_loss(d_fake: &[f64], variant: GeneratorLoss) -> Result<f64> {
    if d_fake.is_empty() {
        return Err(Error::Dimension("generator_loss of an empty batch".into()));
    }
    Ok(match variant {
        GeneratorLoss::Saturating => mean(d_fake.iter().map(|&p| (1.0 - clamp_p(p)).ln()), d_fake.len()),
        GeneratorLoss::NonSaturating => -mean(d_fake.iter().map(|&p| clamp_p(p).ln()), d_fake.len()),
    })
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if let Some(v) = p.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Contract(format!("{name} has invalid mass {v}")));
    }
    Ok(())
}

fn check_pair(p_data: &[f64], p_g: &[f64]) -> Result<()> {
    if p_data.len() != p_g.len() {
        return Err(Error::Dimension(format!("supports differ: {} vs {}", p_data.len(), p_g.len())));
    }
    check_distribution(p_data, "p_data")?;
    check_distribution(p_g, "p_g")
}

/// `D*(x) = p_data(x) / (p_data(x) + p_g(x))`, with `0/0` mapped to 0.5.
pub fn optimal_discriminator(p_data: &[f64], p_g: &[f64]) -> Result<Vec<f64>> {
    check_pair(p_data, p_g)?;
    Ok(p_data
        .iter()
        .zip(p_g)
        .map(|(&a, &b)| if a + b == 0.0 { 0.5 } else { a / (a + b) })
        .collect())
}

/// `Σ p_data ln D + Σ p_g ln(1 − D)`, skipping zero-mass terms.
pub fn minimax_value(p_data: &[f64], p_g: &[f64], d: &[f64]) -> Result<f64> {
    check_pair(p_data, p_g)?;
    if d.len() != p_data.len() {
        return Err(Error::Dimension(format!("{} discriminator values for {} points", d.len(), p_data.len())));
    }
    let mut v = 0.0;
    for i in 0..d.len() {
        if p_data[i] > 0.0 {
            v += p_data[i] * d[i].ln();
        }
        if p_g[i] > 0.0 {
            v += p_g[i] * (1.0 - d[i]).ln();
        }
    }
    Ok(v)
}

/// Jensen-Shannon divergence in nats with the midpoint mixture.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    let kl_to_mid = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * (x / (0.5 * (x + y))).ln())
            .sum::<f64>()
    };
    Ok(0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p))
}

/// Value of the game at the optimal discriminator, `2·JSD(p_g ‖ p_data) − 2 ln 2`.
pub fn minimax_value_at_optimum(p_data: &[f64], p_g: &[f64]) -> Result<f64> {
    Ok(2.0 * jsd(p_g, p_data)? - 2.0 * std::f64::consts::LN_2)
}

/// Graph form of [`discriminator_loss`].
pub fn discriminator_loss_graph(g: &mut ComputeGraph, d_real: NodeId, d_fake: NodeId) -> NodeId {
    let lr = g.ln_clamped(d_real, PROB_EPS);
    let real = g.mean(lr);
    let om = g.one_minus(d_fake);
    let lf = g.ln_clamped(om, PROB_EPS);
    let fake = g.mean(lf);
    let s = g.add(real, fake).expect("scalars");
    g.scale(s, -0.5)
}

/// Graph form of [`generator_loss`].
pub fn generator_loss_graph(g: &mut ComputeGraph, d_fake: NodeId, variant: GeneratorLoss) -> NodeId {
    match variant {
        GeneratorLoss::Saturating => {
            let om = g.one_minus(d_fake);
            let l = g.ln_clamped(om, PROB_EPS);
            g.mean(l)
        }
        GeneratorLoss::NonSaturating => {
            let l = g.ln_clamped(d_fake, PROB_EPS);
            let m = g.mean(l);
            g.scale(m, -1.0)
        }
    }
}

/// Mean categorical cross-entropy of `[n, k]` probabilities against a one-hot node.
pub fn cross_entropy_graph(g: &mut ComputeGraph, probs: NodeId, one_hot: NodeId) -> Result<NodeId> {
    let n = g.value(probs).shape()[0];
    let l = g.ln_clamped(probs, PROB_EPS);
    let picked = g.mul(l, one_hot)?;
    let s = g.sum(picked);
    Ok(g.scale(s, -1.0 / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plug_ins() {
        assert!((bce_loss(&[1.0], &[0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(bce_loss(&[1.0], &[1.0]).unwrap() < 1e-11);
        assert!(discriminator_loss(&[1.0], &[0.0]).unwrap() < 1e-11);
        assert!((discriminator_loss(&[0.5], &[0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((generator_loss(&[0.5], GeneratorLoss::Saturating).unwrap() + std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn optimum() {
        let d = optimal_discriminator(&[2.0 / 3.0, 1.0 / 3.0, 0.0], &[1.0 / 3.0, 0.0, 0.0]).unwrap();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(d[1], 1.0);
        assert_eq!(d[2], 0.5);
        assert!(optimal_discriminator(&[-0.1, 1.1], &[0.5, 0.5]).is_err());
        let v = minimax_value_at_optimum(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(v.abs() < 1e-15);
    }
}
