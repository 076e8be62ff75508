use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp, Tape};
use super::spectral::{Projector, SpectralConstraint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Training hyperparameters. Identical config and data give bit-identical weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::adam(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One supervised example with its sample weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Weighted mean loss per epoch.
    pub epoch_loss: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_loss.last().copied().unwrap_or(f64::NAN)
    }
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    t: i32,
}

/// Mini-batch training with projection onto the spectral constraint after
/// every optimizer step.
///
/// `loss` receives `(prediction, target, grad_out)`, writes `∂loss/∂prediction`
/// into `grad_out`, and returns the loss value.
pub fn fit<L>(
    net: &mut Mlp,
    samples: &[Sample],
    loss: L,
    config: &TrainConfig,
    constraint: &SpectralConstraint,
) -> Result<TrainReport>
where
    L: Fn(&[f64], &[f64], &mut [f64]) -> f64,
{
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Input("no training samples".into()));
    }
    for s in samples {
        if s.input.len() != net.input_dim() || s.target.is_empty() {
            return Err(Error::Input(format!(
                "sample input has {} entries, network expects {}",
                s.input.len(),
                net.input_dim()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grads = Gradients::zeros_like(net);
    let mut adam = match config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }),
        Optimizer::Sgd => None,
    };
    let mut projector = Projector::new(net, *constraint);
    projector.project(net);

    let mut tape = Tape::default();
    let mut out_grad = vec![0.0; net.output_dim()];
    let mut epoch_loss = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut total_weight = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let mut batch_weight = 0.0;
            for &idx in batch {
                let s = &samples[idx];
                net.forward_tape(&s.input, &mut tape)?;
                out_grad.iter_mut().for_each(|g| *g = 0.0);
                let l = loss(tape.output(), &s.target, &mut out_grad);
                if !l.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss at epoch {epoch} (sample {idx})"
                    )));
                }
                total += s.weight * l;
                batch_weight += s.weight;
                if s.weight != 1.0 {
                    out_grad.iter_mut().for_each(|g| *g *= s.weight);
                }
                net.backward(&tape, &out_grad, &mut grads)?;
            }
            total_weight += batch_weight;
            if batch_weight <= 0.0 {
                continue;
            }
            grads.scale(1.0 / batch_weight);
            if !grads.is_finite() {
                return Err(Error::Training(format!("non-finite gradient at epoch {epoch}")));
            }
            apply_step(net, &grads, adam.as_mut(), config);
            projector.project(net);
            if !net.is_finite() {
                return Err(Error::Training(format!("weights diverged at epoch {epoch}")));
            }
        }
        epoch_loss.push(total / total_weight.max(f64::MIN_POSITIVE));
    }
    projector.finish(net);
    Ok(TrainReport { epoch_loss })
}

fn apply_step(net: &mut Mlp, grads: &Gradients, adam: Option<&mut AdamState>, config: &TrainConfig) {
    let lr = config.learning_rate;
    match (config.optimizer, adam) {
        (Optimizer::Adam { beta1, beta2, eps }, Some(state)) => {
            state.t += 1;
            let bc1 = 1.0 - beta1.powi(state.t);
            let bc2 = 1.0 - beta2.powi(state.t);
            let step = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
            };
            for (i, layer) in net.layers_mut().iter_mut().enumerate() {
                let w = layer.weights.as_mut_slice();
                let gw = grads.weights[i].as_slice();
                let mw = state.m.weights[i].as_mut_slice();
                let vw = state.v.weights[i].as_mut_slice();
                for k in 0..w.len() {
                    step(&mut w[k], gw[k], &mut mw[k], &mut vw[k]);
                }
                for k in 0..layer.bias.len() {
                    step(
                        &mut layer.bias[k],
                        grads.bias[i][k],
                        &mut state.m.bias[i][k],
                        &mut state.v.bias[i][k],
                    );
                }
            }
        }
        _ => {
            for (i, layer) in net.layers_mut().iter_mut().enumerate() {
                for (w, g) in layer
                    .weights
                    .as_mut_slice()
                    .iter_mut()
                    .zip(grads.weights[i].as_slice())
                {
                    *w -= lr * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(&grads.bias[i]) {
                    *b -= lr * g;
                }
            }
        }
    }
}

/// Squared-error loss `‖pred − target‖²` and its gradient.
pub(crate) fn squared_error(pred: &[f64], target: &[f64], grad: &mut [f64]) -> f64 {
    let mut l = 0.0;
    for ((g, p), t) in grad.iter_mut().zip(pred).zip(target) {
        let r = p - t;
        l += r * r;
        *g = 2.0 * r;
    }
    l
}
