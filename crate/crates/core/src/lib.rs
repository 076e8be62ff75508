//! Continuity-based corrective labels for behavior cloning.
//!
//! The pipeline learns a residual dynamics model `s′ = s + f̂(s, a)` from
//! expert transitions under a spectral Lipschitz cap, generates one BackTrack
//! label `(s* − f̂(s*, a*), a*)` per transition, keeps the labels whose error
//! bound `‖∂f̂/∂s‖₂ · ‖f̂(s*, a*)‖` falls in the lowest quantile, and trains a
//! behavior-cloning policy on the union of expert and accepted labels.
//!
//! Modules:
//! - [`nn`]: MLPs, backprop, Jacobians, spectral projection, training loop.
//! - [`dynamics`]: residual model training and local Lipschitz measurement.
//! - [`labeler`]: label generation, filtering, error CDFs, label files.
//! - [`policy`]: action losses and behavior-cloning policies.
//! - [`envs`]: simulated tasks, scripted experts, rollouts.
//! - [`experiments`]: paired ablation cells, z-tests, reports.

pub mod dataset;
pub mod dynamics;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod labeler;
pub mod linalg;
pub mod model_io;
pub mod nn;
pub mod policy;
pub mod seed;
pub mod stats;

pub use dataset::{SourceIndex, Trajectory, TrajectoryDataset, Transition};
pub use dynamics::{lipschitz_distribution, train_dynamics, DynamicsConfig, DynamicsModel, LipschitzDistribution};
pub use envs::{collect, evaluate, make_env, Env, Environment};
pub use error::{Error, Result};
pub use labeler::{filter_labels, gen_labels, label_error_cdf, CorrectiveLabel, FilterConfig, FilterOutcome};
pub use linalg::Matrix;
pub use nn::{Activation, Mlp, SpectralConstraint, TrainConfig};
pub use policy::{action_loss, train_policy, ActionSpace, AugmentedDataset, LossWeights, PolicyConfig, PolicyModel};
pub use stats::{z_test, ZTest};
