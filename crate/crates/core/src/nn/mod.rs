//! Feed-forward networks, spectral-norm control, and the deterministic
//! training loop shared by dynamics and policy learning.

mod mlp;
mod normalize;
mod spectral;
pub(crate) mod train;

pub use mlp::{Activation, Gradients, Layer, Mlp, Tape};
pub use normalize::{Standardizer, RELATIVE_SCALE_FLOOR};
pub use spectral::{spectral_project, SpectralConstraint, MEASURE_POWER_ITERS, TRAIN_POWER_ITERS};
pub use train::{fit, Optimizer, Sample, TrainConfig, TrainReport};
