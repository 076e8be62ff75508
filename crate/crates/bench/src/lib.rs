//! Fixtures shared by the criterion benchmarks.

use ccil_core::envs::WallGrasp;
use ccil_core::nn::{Activation, Mlp};
use ccil_core::{collect, train_dynamics, DynamicsConfig, DynamicsModel, SpectralConstraint, TrajectoryDataset};

/// Expert demonstrations on the wall-grasp task.
pub fn wallgrasp_demos(n_traj: usize) -> TrajectoryDataset {
    collect(&WallGrasp::default(), n_traj, 11).expect("expert collects demonstrations")
}

/// A briefly trained dynamics model on `data`.
pub fn quick_dynamics(data: &TrajectoryDataset) -> DynamicsModel {
    let mut cfg = DynamicsConfig::default();
    cfg.train.epochs = 5;
    train_dynamics(data, &SpectralConstraint::bounded(4.0), &cfg).expect("dynamics trains")
}

/// The default hidden architecture on a 9-dimensional input.
pub fn reference_net() -> Mlp {
    Mlp::new(&[9, 64, 64, 6], Activation::Tanh, 3).expect("valid sizes")
}
