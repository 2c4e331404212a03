//! Parameter update rules.

use crate::error::{dim_err, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateRule {
    SgdMomentum,
    Adam,
    RmsProp,
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" | "sgd_momentum" => Ok(Self::SgdMomentum),
            "adam" => Ok(Self::Adam),
            "rmsprop" => Ok(Self::RmsProp),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SgdMomentum => "sgd_momentum",
            Self::Adam => "adam",
            Self::RmsProp => "rmsprop",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub rule: UpdateRule,
    pub learning_rate: f64,
    /// Velocity decay for SGD; unused by Adam and RMSProp.
    pub momentum: f64,
    /// L2 penalty coefficient, added to the gradient as `l2 * p`.
    pub l2: f64,
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            rule: UpdateRule::Adam,
            learning_rate,
            momentum: 0.0,
            l2: 0.0,
        }
    }

    pub fn sgd(learning_rate: f64, momentum: f64, l2: f64) -> Self {
        Self {
            rule: UpdateRule::SgdMomentum,
            learning_rate,
            momentum,
            l2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} must be in [0,1)", self.momentum)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 {} must be >= 0", self.l2)));
        }
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const RMSPROP_DECAY: f64 = 0.9;

/// Per-parameter optimizer memory. For SGD `first` holds the velocity; for
/// Adam `first`/`second` are the moment estimates; RMSProp uses `second`.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    config: OptimizerConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, params: &[Tensor]) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Ok(Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update in place. Fails, leaving `params` untouched, when a
    /// gradient contains NaN/Inf or shapes disagree.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.first.len() {
            return dim_err(format!(
                "optimizer tracks {} parameters, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return dim_err(format!(
                    "parameter {i}: shape {:?} vs gradient {:?}",
                    p.shape(),
                    g.shape()
                ));
            }
            if let Some(j) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient {} at parameter {i}, element {j} (step {})",
                    g.data()[j],
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let OptimizerConfig {
            rule,
            learning_rate: lr,
            momentum,
            l2,
        } = self.config;
        let t = self.step as i32;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let pd = p.data_mut();
            let gd = g.data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            match rule {
                UpdateRule::SgdMomentum => {
                    for j in 0..pd.len() {
                        let grad = gd[j] + l2 * pd[j];
                        m[j] = momentum * m[j] - lr * grad;
                        pd[j] += m[j];
                    }
                }
                UpdateRule::Adam => {
                    let c1 = 1.0 - ADAM_BETA1.powi(t);
                    let c2 = 1.0 - ADAM_BETA2.powi(t);
                    for j in 0..pd.len() {
                        let grad = gd[j] + l2 * pd[j];
                        m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * grad;
                        v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * grad * grad;
                        let mhat = m[j] / c1;
                        let vhat = v[j] / c2;
                        pd[j] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                    }
                }
                UpdateRule::RmsProp => {
                    for j in 0..pd.len() {
                        let grad = gd[j] + l2 * pd[j];
                        v[j] = RMSPROP_DECAY * v[j] + (1.0 - RMSPROP_DECAY) * grad * grad;
                        pd[j] -= lr * grad / (v[j].sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}
