use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Hidden-layer nonlinearity. Both variants are 1-Lipschitz and smooth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `h = apply(z)`.
    #[inline]
    pub fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::Config(format!(
                "bias length {} does not match {} output rows",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }
}

/// Multi-layer perceptron. The activation is applied after every layer except
/// the last, which is affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Per-layer activations recorded by a forward pass, consumed by `backward`.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    /// `outputs[0]` is the input; `outputs[i + 1]` is the output of layer `i`
    /// (post-activation for hidden layers).
    outputs: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Parameter gradients laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.outputs(), l.inputs()))
                .collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.outputs()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        for w in &mut self.weights {
            w.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
        }
        for b in &mut self.bias {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            w.scale(factor);
        }
        for b in &mut self.bias {
            b.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.bias.iter().flatten().all(|v| v.is_finite())
    }
}

impl Mlp {
    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Config(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        for l in &layers {
            if l.weights.rows() != l.bias.len() {
                return Err(Error::Config("bias length mismatch".into()));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Seeded initialization: weights and biases uniform in `±1/√fan_in`.
    ///
    /// `sizes` lists every width including input and output, so `[3, 32, 2]`
    /// is a two-layer network.
    pub fn new(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                let bias = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
                Layer {
                    weights: Matrix::from_vec(fan_out, fan_in, data),
                    bias,
                }
            })
            .collect();
        Self::from_layers(layers, activation)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.matvec(&x);
            for (zj, bj) in z.iter_mut().zip(&layer.bias) {
                *zj += bj;
                if i != last {
                    *zj = self.activation.apply(*zj);
                }
            }
            x = z;
        }
        Ok(x)
    }

    /// Forward pass that records intermediate outputs into `tape`.
    pub fn forward_tape(&self, input: &[f64], tape: &mut Tape) -> Result<()> {
        self.check_input(input)?;
        let n = self.layers.len();
        tape.outputs.resize_with(n + 1, Vec::new);
        tape.outputs[0].clear();
        tape.outputs[0].extend_from_slice(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = tape.outputs.split_at_mut(i + 1);
            let out = &mut rest[0];
            out.resize(layer.outputs(), 0.0);
            layer.weights.matvec_into(&prev[i], out);
            for (zj, bj) in out.iter_mut().zip(&layer.bias) {
                *zj += bj;
                if i + 1 != n {
                    *zj = self.activation.apply(*zj);
                }
            }
        }
        Ok(())
    }

    /// Accumulates parameter gradients of a scalar loss into `grads`, given
    /// `output_grad = ∂loss/∂output` for the pass recorded in `tape`.
    pub fn backward(&self, tape: &Tape, output_grad: &[f64], grads: &mut Gradients) -> Result<()> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::Config(format!(
                "output gradient has {} entries, network emits {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if tape.outputs.len() != self.layers.len() + 1 {
            return Err(Error::Config("tape does not match network depth".into()));
        }
        let mut delta = output_grad.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &tape.outputs[i];
            let gw = grads.weights[i].as_mut_slice();
            for (r, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                grads.bias[i][r] += d;
                let row = &mut gw[r * input.len()..(r + 1) * input.len()];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if i > 0 {
                let mut next = layer.weights.tr_matvec(&delta);
                for (n, h) in next.iter_mut().zip(input) {
                    *n *= self.activation.derivative_from_output(*h);
                }
                delta = next;
            }
        }
        Ok(())
    }

    /// Exact Jacobian of the output with respect to the input, one row per
    /// output dimension.
    pub fn jacobian(&self, input: &[f64]) -> Result<Matrix> {
        let mut tape = Tape::default();
        self.forward_tape(input, &mut tape)?;
        let mut jac = self.layers[0].weights.clone();
        for i in 1..self.layers.len() {
            let h = &tape.outputs[i];
            for (r, hr) in h.iter().enumerate() {
                let d = self.activation.derivative_from_output(*hr);
                for c in 0..jac.cols() {
                    jac[(r, c)] *= d;
                }
            }
            jac = self.layers[i].weights.matmul(&jac);
        }
        Ok(jac)
    }
}
