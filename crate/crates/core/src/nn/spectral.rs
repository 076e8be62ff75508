use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::linalg::{norm, power_iterate, spectral_norm_converged};

/// Power-iteration rounds per optimizer step during training.
pub const TRAIN_POWER_ITERS: usize = 20;
/// Power-iteration rounds used for reported measurements.
pub const MEASURE_POWER_ITERS: usize = 100;

const CONVERGED_TOL: f64 = 1e-14;
const CONVERGED_MAX_ITERS: usize = 20_000;

/// Upper bound `K` on the network-level Lipschitz constant.
///
/// With `n` layers each capped at `K^(1/n)` and a 1-Lipschitz activation, the
/// whole network is `K`-Lipschitz in its (normalized) input coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstraint {
    /// `None` means unbounded.
    pub cap: Option<f64>,
    pub power_iters: usize,
}

impl Default for SpectralConstraint {
    fn default() -> Self {
        Self::unbounded()
    }
}

impl SpectralConstraint {
    pub fn unbounded() -> Self {
        Self {
            cap: None,
            power_iters: TRAIN_POWER_ITERS,
        }
    }

    pub fn bounded(cap: f64) -> Self {
        Self {
            cap: Some(cap),
            power_iters: TRAIN_POWER_ITERS,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.cap.is_some()
    }

    /// Per-layer spectral cap `K^(1/n)` for an `n`-layer network.
    pub fn layer_cap(&self, depth: usize) -> Option<f64> {
        self.cap.map(|k| k.powf(1.0 / depth as f64))
    }
}

/// Rescales every weight matrix whose spectral norm exceeds `K^(1/n)` back
/// onto the cap. Matrices already under the cap are returned untouched.
///
/// Norms are estimated by power iteration run to convergence (at least
/// `constraint.power_iters` rounds).
pub fn spectral_project(model: &Mlp, constraint: &SpectralConstraint) -> Mlp {
    let mut out = model.clone();
    let Some(cap) = constraint.layer_cap(out.depth()) else {
        return out;
    };
    for layer in out.layers_mut() {
        let sigma = spectral_norm_converged(
            &layer.weights,
            CONVERGED_TOL,
            CONVERGED_MAX_ITERS.max(constraint.power_iters),
        );
        if sigma > cap {
            layer.weights.scale(cap / sigma);
        }
    }
    out
}

/// Warm-started projector used inside the training loop: keeps one right
/// singular vector estimate per layer so a few rounds per step suffice.
#[derive(Debug, Clone)]
pub(crate) struct Projector {
    constraint: SpectralConstraint,
    vectors: Vec<Vec<f64>>,
}

impl Projector {
    pub(crate) fn new(net: &Mlp, constraint: SpectralConstraint) -> Self {
        let vectors = net
            .layers()
            .iter()
            .map(|l| {
                let n = l.inputs();
                let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7 + 3) % 11) as f64 * 0.1).collect();
                let nv = norm(&v);
                v.iter_mut().for_each(|x| *x /= nv);
                v
            })
            .collect();
        Self {
            constraint,
            vectors,
        }
    }

    pub(crate) fn project(&mut self, net: &mut Mlp) {
        let Some(cap) = self.constraint.layer_cap(net.depth()) else {
            return;
        };
        let iters = self.constraint.power_iters.max(1);
        for (layer, v) in net.layers_mut().iter_mut().zip(&mut self.vectors) {
            let sigma = power_iterate(&layer.weights, v, iters, 0.0);
            if sigma > cap {
                layer.weights.scale(cap / sigma);
            }
        }
    }

    /// Final projection with converged norm estimates.
    pub(crate) fn finish(&self, net: &mut Mlp) {
        *net = spectral_project(net, &self.constraint);
    }
}
