//! Deterministic simulated control tasks with known ground-truth dynamics,
//! scripted experts and a noise-injected rollout evaluator.
//!
//! All quantities are dimensionless. Every environment advances with
//! `s′ = s + f(s, a)` at a fixed timestep and is a pure function of its inputs.

mod linear;
mod pendulum;
mod peg;
pub mod rollout;
mod wallgrasp;

use serde::{Deserialize, Serialize};

pub use linear::LinearSystem;
pub use pendulum::Pendulum;
pub use peg::Peg1d;
pub use rollout::{collect, evaluate, grid_initial_states, rollout, Evaluation, RolloutResult};
pub use wallgrasp::WallGrasp;

use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;

/// Result of one simulator step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: Vec<f64>,
    /// True when a contact branch (clamp or friction) executed.
    pub contact: bool,
}

/// A deterministic finite-horizon task.
pub trait Environment: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn step(&self, s: &[f64], a: &[f64]) -> StepOutcome;
    fn is_success(&self, s: &[f64]) -> bool;
    /// Draw from the initial-state distribution.
    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Fixed evaluation conditions.
    fn initial_grid(&self) -> Vec<Vec<f64>>;
    /// Scripted expert controller.
    fn expert_action(&self, s: &[f64]) -> Vec<f64>;
    /// Global Lipschitz constant of `f` over `(s, a)` where analytically known.
    fn true_lipschitz(&self) -> Option<f64> {
        None
    }
}

/// The environment catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Env {
    Pendulum(Pendulum),
    Wallgrasp(WallGrasp),
    Peg1d(Peg1d),
}

pub const ENV_NAMES: [&str; 3] = ["pendulum", "wallgrasp", "peg1d"];

/// Looks an environment up by name with its default parameters.
pub fn make_env(name: &str) -> Result<Env> {
    match name {
        "pendulum" => Ok(Env::Pendulum(Pendulum::default())),
        "wallgrasp" => Ok(Env::Wallgrasp(WallGrasp::default())),
        "peg1d" => Ok(Env::Peg1d(Peg1d::default())),
        other => Err(Error::Input(format!(
            "unknown environment '{other}' (expected one of {})",
            ENV_NAMES.join(", ")
        ))),
    }
}

/// Controller backing the demonstrations of `env`.
pub fn scripted_expert<E: Environment + ?Sized>(env: &E) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    move |s| env.expert_action(s)
}

macro_rules! delegate {
    ($self:ident, $e:ident => $body:expr) => {
        match $self {
            Env::Pendulum($e) => $body,
            Env::Wallgrasp($e) => $body,
            Env::Peg1d($e) => $body,
        }
    };
}

impl Environment for Env {
    fn name(&self) -> &str {
        delegate!(self, e => e.name())
    }
    fn state_dim(&self) -> usize {
        delegate!(self, e => e.state_dim())
    }
    fn action_dim(&self) -> usize {
        delegate!(self, e => e.action_dim())
    }
    fn horizon(&self) -> usize {
        delegate!(self, e => e.horizon())
    }
    fn step(&self, s: &[f64], a: &[f64]) -> StepOutcome {
        delegate!(self, e => e.step(s, a))
    }
    fn is_success(&self, s: &[f64]) -> bool {
        delegate!(self, e => e.is_success(s))
    }
    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        delegate!(self, e => e.sample_initial(rng))
    }
    fn initial_grid(&self) -> Vec<Vec<f64>> {
        delegate!(self, e => e.initial_grid())
    }
    fn expert_action(&self, s: &[f64]) -> Vec<f64> {
        delegate!(self, e => e.expert_action(s))
    }
    fn true_lipschitz(&self) -> Option<f64> {
        delegate!(self, e => e.true_lipschitz())
    }
}

pub(crate) fn clamp(v: f64, limit: f64) -> f64 {
    v.clamp(-limit, limit)
}
