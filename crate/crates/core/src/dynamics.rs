//! Residual dynamics model `s′ = s + f̂(s, a)` trained under an optional
//! spectral constraint, plus local Lipschitz measurements.
//!
//! Inputs `(s, a)` and residual targets are standardized with statistics taken
//! from the training data; the constraint `K` bounds the network in those
//! standardized coordinates. Jacobians and Lipschitz coefficients are reported
//! in raw units.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};
use crate::nn::{
    fit, Activation, Mlp, Sample, SpectralConstraint, Standardizer, TrainConfig, MEASURE_POWER_ITERS,
    RELATIVE_SCALE_FLOOR,
};
use crate::stats::DistributionSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Standardize inputs and residual targets.
    pub normalize: bool,
    /// Fraction of trajectories (taken from the end) held out for diagnostics.
    pub holdout_fraction: f64,
    pub output_scaling: OutputScaling,
}

/// How residual targets are scaled before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputScaling {
    /// Unit variance per dimension.
    #[default]
    PerDimension,
    /// One scale for all dimensions; the loss stays proportional to the raw
    /// squared residual.
    Shared,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            train: TrainConfig {
                epochs: 150,
                batch_size: 32,
                learning_rate: 2e-3,
                ..TrainConfig::default()
            },
            normalize: true,
            holdout_fraction: 0.0,
            output_scaling: OutputScaling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsModel {
    pub net: Mlp,
    pub input_norm: Standardizer,
    pub output_norm: Standardizer,
    pub state_dim: usize,
    pub action_dim: usize,
    pub constraint: SpectralConstraint,
    /// Mean residual error `‖s + f̂(s, a) − s′‖` over the training transitions.
    pub eps_train: f64,
    /// Largest residual error over the training transitions.
    pub eps_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_holdout: Option<f64>,
}

impl DynamicsModel {
    /// Wraps an already trained network. Errors are left at zero until
    /// [`DynamicsModel::measure_errors`] is called.
    pub fn from_parts(
        net: Mlp,
        input_norm: Standardizer,
        output_norm: Standardizer,
        state_dim: usize,
        constraint: SpectralConstraint,
    ) -> Result<Self> {
        if net.output_dim() != state_dim
            || output_norm.dim() != state_dim
            || input_norm.dim() != net.input_dim()
            || net.input_dim() <= state_dim
        {
            return Err(Error::Config(format!(
                "network {}→{} does not fit state dimension {state_dim}",
                net.input_dim(),
                net.output_dim()
            )));
        }
        Ok(Self {
            action_dim: net.input_dim() - state_dim,
            net,
            input_norm,
            output_norm,
            state_dim,
            constraint,
            eps_train: 0.0,
            eps_max: 0.0,
            eps_holdout: None,
        })
    }

    /// Model with identity normalization, for networks already in raw units.
    pub fn from_net(net: Mlp, state_dim: usize) -> Result<Self> {
        let input = Standardizer::identity(net.input_dim());
        let output = Standardizer::identity(state_dim);
        Self::from_parts(net, input, output, state_dim, SpectralConstraint::unbounded())
    }

    fn check(&self, s: &[f64], a: &[f64]) -> Result<()> {
        if s.len() != self.state_dim || a.len() != self.action_dim {
            return Err(Error::Input(format!(
                "model expects state/action of size {}/{}, got {}/{}",
                self.state_dim,
                self.action_dim,
                s.len(),
                a.len()
            )));
        }
        Ok(())
    }

    fn net_input(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        self.input_norm.normalize(&x)
    }

    /// Predicted state change `f̂(s, a)` in raw units.
    pub fn predict_delta(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        self.check(s, a)?;
        let out = self.net.forward(&self.net_input(s, a))?;
        Ok(self.output_norm.denormalize(&out))
    }

    /// Predicted next state `s + f̂(s, a)`.
    pub fn predict_next(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        let d = self.predict_delta(s, a)?;
        Ok(s.iter().zip(&d).map(|(x, dx)| x + dx).collect())
    }

    /// Jacobian of `f̂` with respect to the full input `(s, a)`, raw units.
    pub fn jacobian(&self, s: &[f64], a: &[f64]) -> Result<Matrix> {
        self.check(s, a)?;
        let mut j = self.net.jacobian(&self.net_input(s, a))?;
        for r in 0..j.rows() {
            for c in 0..j.cols() {
                j[(r, c)] *= self.output_norm.scale[r] / self.input_norm.scale[c];
            }
        }
        Ok(j)
    }

    /// Jacobian with respect to the state block only (actions held fixed).
    pub fn state_jacobian(&self, s: &[f64], a: &[f64]) -> Result<Matrix> {
        Ok(self.jacobian(s, a)?.columns(0, self.state_dim))
    }

    /// Local Lipschitz coefficient `‖∂f̂/∂s‖₂` at `(s, a)`.
    ///
    /// Corrective labels keep the expert action, so only state perturbations
    /// enter the label error bound. The full `(s, a)` Jacobian gives a looser
    /// alternative via [`DynamicsModel::jacobian`].
    pub fn local_lipschitz(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.state_jacobian(s, a)?.spectral_norm(MEASURE_POWER_ITERS))
    }

    /// Residual error `‖s + f̂(s, a) − s′‖` for every transition.
    pub fn residual_errors(&self, data: &TrajectoryDataset) -> Result<Vec<f64>> {
        data.iter()
            .map(|(_, tr)| {
                let pred = self.predict_next(&tr.s, &tr.a)?;
                let r: Vec<f64> = pred.iter().zip(&tr.s_next).map(|(p, t)| p - t).collect();
                Ok(norm(&r))
            })
            .collect()
    }

    /// Sets `eps_train` and `eps_max` from a full pass over `data`.
    pub fn measure_errors(&mut self, data: &TrajectoryDataset) -> Result<()> {
        let errs = self.residual_errors(data)?;
        if errs.is_empty() {
            return Err(Error::Input("empty dataset".into()));
        }
        self.eps_train = errs.iter().sum::<f64>() / errs.len() as f64;
        self.eps_max = errs.iter().copied().fold(0.0, f64::max);
        Ok(())
    }
}

/// Fits `f̂` by minimizing the mean squared residual `‖f̂(s, a) + s − s′‖²`.
pub fn train_dynamics(
    data: &TrajectoryDataset,
    constraint: &SpectralConstraint,
    config: &DynamicsConfig,
) -> Result<DynamicsModel> {
    let Some((state_dim, action_dim)) = data.dims() else {
        return Err(Error::Input("cannot train dynamics on an empty dataset".into()));
    };
    if let Some(k) = constraint.cap {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Config(format!("Lipschitz cap must be positive, got {k}")));
        }
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::Config("holdout fraction must lie in [0, 1)".into()));
    }

    let n_hold = (data.num_trajectories() as f64 * config.holdout_fraction).floor() as usize;
    let n_train = data.num_trajectories() - n_hold;
    if n_train == 0 {
        return Err(Error::Input("holdout leaves no training trajectories".into()));
    }
    let train = data.take(n_train);

    let inputs: Vec<Vec<f64>> = train
        .iter()
        .map(|(_, tr)| tr.s.iter().chain(&tr.a).copied().collect())
        .collect();
    let deltas: Vec<Vec<f64>> = train.iter().map(|(_, tr)| tr.delta()).collect();
    let (input_norm, output_norm) = if config.normalize {
        (
            Standardizer::fit_floored(inputs.iter().map(Vec::as_slice), RELATIVE_SCALE_FLOOR)?,
            match config.output_scaling {
                OutputScaling::PerDimension => {
                    Standardizer::fit_floored(deltas.iter().map(Vec::as_slice), RELATIVE_SCALE_FLOOR)?
                }
                OutputScaling::Shared => Standardizer::fit_shared(deltas.iter().map(Vec::as_slice))?,
            },
        )
    } else {
        (
            Standardizer::identity(state_dim + action_dim),
            Standardizer::identity(state_dim),
        )
    };
    let samples: Vec<Sample> = inputs
        .iter()
        .zip(&deltas)
        .map(|(x, d)| Sample {
            input: input_norm.normalize(x),
            target: output_norm.normalize(d),
            weight: 1.0,
        })
        .collect();

    let mut sizes = vec![state_dim + action_dim];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(state_dim);
    let mut net = Mlp::new(&sizes, Activation::Tanh, config.train.seed)?;
    fit(
        &mut net,
        &samples,
        crate::nn::train::squared_error,
        &config.train,
        constraint,
    )
    .map_err(|e| e.context("dynamics"))?;

    let mut model = DynamicsModel::from_parts(net, input_norm, output_norm, state_dim, *constraint)?;
    model.measure_errors(&train)?;
    if n_hold > 0 {
        let held = TrajectoryDataset::new(data.trajectories()[n_train..].to_vec())?;
        let errs = model.residual_errors(&held)?;
        model.eps_holdout = Some(errs.iter().sum::<f64>() / errs.len() as f64);
    }
    Ok(model)
}

/// Local Lipschitz coefficients across a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzDistribution {
    /// One coefficient per transition, in dataset order.
    pub values: Vec<f64>,
    pub summary: DistributionSummary,
}

pub fn lipschitz_distribution(model: &DynamicsModel, data: &TrajectoryDataset) -> Result<LipschitzDistribution> {
    let transitions: Vec<_> = data.iter().map(|(_, tr)| tr).collect();
    let values = transitions
        .par_iter()
        .map(|tr| model.local_lipschitz(&tr.s, &tr.a))
        .collect::<Result<Vec<f64>>>()?;
    let summary = DistributionSummary::from_values(&values, 30);
    Ok(LipschitzDistribution { values, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Transition;
    use crate::nn::Layer;

    fn linear_model(a: &Matrix, b: &Matrix) -> DynamicsModel {
        let n = a.rows();
        let m = b.cols();
        let mut w = Matrix::zeros(n, n + m);
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] = a[(i, j)];
            }
            for j in 0..m {
                w[(i, n + j)] = b[(i, j)];
            }
        }
        let net = Mlp::from_layers(vec![Layer::new(w, vec![0.0; n]).unwrap()], Activation::Identity).unwrap();
        DynamicsModel::from_net(net, n).unwrap()
    }

    #[test]
    fn linear_model_lipschitz_is_norm_of_state_block() {
        let a = Matrix::from_rows(&[vec![0.0, 0.1], vec![-0.2, 0.05]]);
        let b = Matrix::from_rows(&[vec![5.0], vec![1.0]]);
        let model = linear_model(&a, &b);
        let k = model.local_lipschitz(&[0.3, -0.4], &[1.0]).unwrap();
        let exact = a.spectral_norm(10_000);
        assert!((k - exact).abs() < 1e-12, "{k} vs {exact}");
        let d = model.predict_delta(&[1.0, 2.0], &[0.5]).unwrap();
        assert!((d[0] - (0.2 + 2.5)).abs() < 1e-15);
    }

    #[test]
    fn unit_cap_single_linear_layer_bounded() {
        let mut s = vec![0.0, 0.0];
        let mut traj = Vec::new();
        for i in 0..30 {
            let a = vec![(i as f64 * 0.7).sin()];
            let sn = vec![s[0] + 0.3 * a[0] - 0.1 * s[1], s[1] + 0.2 * s[0]];
            traj.push(Transition::new(s.clone(), a, sn.clone()));
            s = sn;
        }
        let ds = TrajectoryDataset::from_transitions(vec![traj]).unwrap();
        let cfg = DynamicsConfig {
            hidden: vec![],
            normalize: false,
            ..DynamicsConfig::default()
        };
        let model = train_dynamics(&ds, &SpectralConstraint::bounded(1.0), &cfg).unwrap();
        assert_eq!(model.net.depth(), 1);
        for (_, tr) in ds.iter() {
            assert!(model.local_lipschitz(&tr.s, &tr.a).unwrap() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = TrajectoryDataset::from_transitions(vec![]).unwrap();
        assert!(matches!(
            train_dynamics(&ds, &SpectralConstraint::unbounded(), &DynamicsConfig::default()),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let a = Matrix::identity(2);
        let b = Matrix::zeros(2, 1);
        let model = linear_model(&a, &b);
        assert!(matches!(model.predict_delta(&[1.0], &[0.0]), Err(Error::Input(_))));
    }
}
