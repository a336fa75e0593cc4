//! A feedforward network plus an output head and the head's loss.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::{Activation, Adam, Grads, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// One action value per discrete action.
    QValues(usize),
    /// Logits of a categorical policy.
    Categorical(usize),
    /// Mean of a Gaussian policy, squashed into `(0, 1)`, with a learned
    /// state-independent log standard deviation.
    GaussianScalar,
    /// State value.
    ScalarValue,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::QValues(n) | Head::Categorical(n) => n,
            Head::GaussianScalar | Head::ScalarValue => 1,
        }
    }
}

/// Elementwise transform applied to raw observations before the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputTransform {
    Identity,
    /// `sign(x) * ln(1 + |x|)`; keeps unbounded counts such as test age in
    /// a range where tanh units do not saturate.
    #[default]
    Symlog,
}

impl InputTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            InputTransform::Identity => x,
            InputTransform::Symlog => x.signum() * x.abs().ln_1p(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproximatorConfig {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
    pub learning_rate: f64,
    pub input_transform: InputTransform,
    /// Initial log standard deviation of the Gaussian head.
    pub init_log_std: f64,
}

impl ApproximatorConfig {
    pub fn new(input_dim: usize, head: Head) -> Self {
        Self {
            input_dim,
            hidden_layers: vec![64, 64],
            activation: Activation::Tanh,
            head,
            learning_rate: 1e-3,
            input_transform: InputTransform::Symlog,
            init_log_std: -1.6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidConfig("input_dim must be positive".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer widths must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be a nonnegative number",
                self.learning_rate
            )));
        }
        if self.head.outputs() == 0 {
            return Err(Error::InvalidConfig("head needs at least one output".into()));
        }
        Ok(())
    }
}

/// Supervision for one batch, matching the head type.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadTarget {
    /// Mean squared error of `Q(s, a)` against `targets`.
    Q { actions: Vec<usize>, targets: Vec<f64> },
    /// `-log pi(a|s) * A - entropy_coef * H`, averaged.
    Categorical {
        actions: Vec<usize>,
        advantages: Vec<f64>,
        entropy_coef: f64,
    },
    Gaussian {
        actions: Vec<f64>,
        advantages: Vec<f64>,
        entropy_coef: f64,
    },
    /// Mean squared error of `V(s)` against `returns`.
    Value { returns: Vec<f64> },
}

impl HeadTarget {
    fn len(&self) -> usize {
        match self {
            HeadTarget::Q { targets, .. } => targets.len(),
            HeadTarget::Categorical { advantages, .. } | HeadTarget::Gaussian { advantages, .. } => {
                advantages.len()
            }
            HeadTarget::Value { returns } => returns.len(),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approximator {
    pub config: ApproximatorConfig,
    pub net: Mlp,
    /// Only used by the Gaussian head.
    pub log_std: f64,
    optimizer: Adam,
}

impl Approximator {
    pub fn new(config: ApproximatorConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![config.input_dim];
        sizes.extend_from_slice(&config.hidden_layers);
        sizes.push(config.head.outputs());
        let gain = match config.head {
            Head::Categorical(_) | Head::GaussianScalar => 0.01,
            Head::QValues(_) | Head::ScalarValue => 1.0,
        };
        let net = Mlp::new(&sizes, config.activation, gain, rng);
        let optimizer = Adam::new(&net, config.learning_rate);
        Ok(Self {
            log_std: config.init_log_std,
            config,
            net,
            optimizer,
        })
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count() + usize::from(self.config.head == Head::GaussianScalar)
    }

    /// Transformed input batch, one row per observation.
    pub fn batch(&self, rows: &[&[f64]]) -> Result<Array2<f64>> {
        let d = self.config.input_dim;
        let mut x = Array2::zeros((rows.len(), d));
        for (mut out, row) in x.axis_iter_mut(Axis(0)).zip(rows) {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: row.len(),
                });
            }
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o = self.config.input_transform.apply(v);
            }
        }
        Ok(x)
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.net.forward(x)
    }

    /// Network output for a single raw observation.
    pub fn forward_one(&self, obs: &[f64]) -> Result<Array1<f64>> {
        let x = self.batch(&[obs])?;
        Ok(self.net.forward(x.view()).row(0).to_owned())
    }

    pub fn std(&self) -> f64 {
        self.log_std.exp()
    }

    /// Loss of `target` on batch `x` (already transformed).
    pub fn loss(&self, x: ArrayView2<'_, f64>, target: &HeadTarget) -> f64 {
        let out = self.net.forward(x);
        self.head_loss(&out, target).0
    }

    /// Loss, parameter gradients and the log-std gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<'_, f64>, target: &HeadTarget) -> (f64, Grads, f64) {
        let tape = self.net.forward_tape(x);
        let (loss, grad_out, grad_log_std) = self.head_loss(tape.output(), target);
        (loss, self.net.backward(&tape, grad_out), grad_log_std)
    }

    /// One optimiser step on `target`; returns the loss before the step.
    pub fn train(&mut self, x: ArrayView2<'_, f64>, target: &HeadTarget) -> f64 {
        let (loss, grads, grad_log_std) = self.loss_and_grad(x, target);
        let scalar = (self.config.head == Head::GaussianScalar).then_some((&mut self.log_std, grad_log_std));
        self.optimizer.step(&mut self.net, &grads, scalar);
        loss
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
        self.optimizer.learning_rate = lr;
    }

    fn head_loss(&self, out: &Array2<f64>, target: &HeadTarget) -> (f64, Array2<f64>, f64) {
        let b = target.len();
        assert_eq!(out.nrows(), b, "batch and target sizes differ");
        let scale = 1.0 / b as f64;
        let mut grad = Array2::zeros(out.raw_dim());
        let mut loss = 0.0;
        let mut grad_log_std = 0.0;
        match target {
            HeadTarget::Q { actions, targets } => {
                for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
                    let diff = out[[i, a]] - y;
                    loss += diff * diff * scale;
                    grad[[i, a]] = 2.0 * diff * scale;
                }
            }
            HeadTarget::Value { returns } => {
                for (i, &r) in returns.iter().enumerate() {
                    let diff = out[[i, 0]] - r;
                    loss += diff * diff * scale;
                    grad[[i, 0]] = 2.0 * diff * scale;
                }
            }
            HeadTarget::Categorical {
                actions,
                advantages,
                entropy_coef,
            } => {
                for (i, (&a, &adv)) in actions.iter().zip(advantages).enumerate() {
                    let logits: Vec<f64> = out.row(i).to_vec();
                    let p = softmax(&logits);
                    let log_p: Vec<f64> = p.iter().map(|q| q.max(1e-300).ln()).collect();
                    let entropy: f64 = -p.iter().zip(&log_p).map(|(q, l)| q * l).sum::<f64>();
                    loss += (-adv * log_p[a] - entropy_coef * entropy) * scale;
                    for j in 0..p.len() {
                        let indicator = if j == a { 1.0 } else { 0.0 };
                        let d_pg = adv * (p[j] - indicator);
                        let d_ent = entropy_coef * p[j] * (log_p[j] + entropy);
                        grad[[i, j]] = (d_pg + d_ent) * scale;
                    }
                }
            }
            HeadTarget::Gaussian {
                actions,
                advantages,
                entropy_coef,
            } => {
                let log_std = self.log_std;
                let var = (2.0 * log_std).exp();
                for (i, (&a, &adv)) in actions.iter().zip(advantages).enumerate() {
                    let mu = sigmoid(out[[i, 0]]);
                    let dev = a - mu;
                    let log_prob = -dev * dev / (2.0 * var) - log_std - 0.5 * LN_2PI;
                    let entropy = 0.5 + 0.5 * LN_2PI + log_std;
                    loss += (-adv * log_prob - entropy_coef * entropy) * scale;
                    let d_mu = -adv * dev / var;
                    grad[[i, 0]] = d_mu * mu * (1.0 - mu) * scale;
                    grad_log_std += (-adv * (dev * dev / var - 1.0) - entropy_coef) * scale;
                }
            }
        }
        (loss, grad, grad_log_std)
    }
}
