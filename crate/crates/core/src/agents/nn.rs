//! Small dense feedforward networks with hand-written backpropagation and
//! an Adam optimiser.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|x| x.max(0.0)),
        }
    }

    /// Multiplies `grad` by the derivative, given the activation output.
    fn backprop(self, out: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Tanh => Zip::from(grad).and(out).for_each(|g, &a| *g *= 1.0 - a * a),
            Activation::Relu => Zip::from(grad).and(out).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0
                }
            }),
        }
    }
}

/// `y = x W + b` with `W` stored as `inputs x outputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn glorot(inputs: usize, outputs: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let limit = gain * (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_fn((inputs, outputs), |_| rng.random_range(-limit..=limit));
        Self {
            weights,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

/// Gradients (or any per-parameter quantity) shaped like a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grads {
    pub layers: Vec<Dense>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    /// Flattened in the same order as [`Mlp::param`].
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }
}

/// Forward activations kept for the backward pass.
pub struct Tape {
    /// `outputs[0]` is the input batch, the last entry the network output.
    outputs: Vec<Array2<f64>>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("non-empty tape")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub activation: Activation,
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `sizes` is `[inputs, hidden.., outputs]`. The output layer is scaled
    /// by `output_gain`.
    pub fn new(sizes: &[usize], activation: Activation, output_gain: f64, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "a network needs input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::glorot(w[0], w[1], if i == last { output_gain } else { 1.0 }, rng))
            .collect();
        Self { activation, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("layers").outputs()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weights) + &layer.bias;
            if i < last {
                self.activation.apply(&mut h);
            }
        }
        h
    }

    pub fn forward_tape(&self, x: ArrayView2<'_, f64>) -> Tape {
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(x.to_owned());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = outputs[i].dot(&layer.weights) + &layer.bias;
            if i < last {
                self.activation.apply(&mut h);
            }
            outputs.push(h);
        }
        Tape { outputs }
    }

    /// Gradients of the loss w.r.t. all parameters, given the gradient
    /// w.r.t. the network output.
    pub fn backward(&self, tape: &Tape, grad_output: Array2<f64>) -> Grads {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_output;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if i + 1 < self.layers.len() {
                self.activation.backprop(&tape.outputs[i + 1], &mut g);
            }
            let input = &tape.outputs[i];
            let dw = input.t().dot(&g);
            let db = g.sum_axis(Axis(0));
            if i > 0 {
                g = g.dot(&layer.weights.t());
            }
            grads.push(Dense { weights: dw, bias: db });
        }
        grads.reverse();
        Grads { layers: grads }
    }

    /// Flat view of parameter `i` (weights then bias, layer by layer).
    pub fn param(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            if i < l.weights.len() {
                return l.weights.as_slice().expect("standard layout")[i];
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                return l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_param(&mut self, mut i: usize, value: f64) {
        for l in &mut self.layers {
            if i < l.weights.len() {
                l.weights.as_slice_mut().expect("standard layout")[i] = value;
                return;
            }
            i -= l.weights.len();
            if i < l.bias.len() {
                l.bias[i] = value;
                return;
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    t: u64,
    m: Grads,
    v: Grads,
    /// Moments of the optional free scalar parameter (Gaussian log std).
    scalar_m: f64,
    scalar_v: f64,
}

impl Adam {
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
            scalar_m: 0.0,
            scalar_v: 0.0,
        }
    }

    /// Applies one step of `grads`, plus `scalar_grad` to `scalar` when
    /// given.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads, scalar: Option<(&mut f64, f64)>) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let lr_t = self.learning_rate * (1.0 - b2.powi(self.t as i32)).sqrt()
            / (1.0 - b1.powi(self.t as i32));
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
        if let Some((p, g)) = scalar {
            update(p, g, &mut self.scalar_m, &mut self.scalar_v);
        }
    }
}
