use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::dataset::{Transition, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::policy::PolicyModel;
use crate::seed::mix;

/// Anything that maps an observed state to an action.
pub trait Controller: Sync {
    fn action(&self, s: &[f64]) -> Result<Vec<f64>>;
}

impl Controller for PolicyModel {
    fn action(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.act(s)
    }
}

/// The environment's scripted expert as a [`Controller`].
pub struct Expert<'a, E: ?Sized>(pub &'a E);

impl<E: Environment + ?Sized> Controller for Expert<'_, E> {
    fn action(&self, s: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.expert_action(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub initial_state: Vec<f64>,
    pub transitions: Vec<Transition>,
    pub success: bool,
    pub noise_seed: u64,
}

/// Runs `controller` from `s0` until success or the horizon. Zero-mean
/// Gaussian noise of standard deviation `noise_scale` is added to the state
/// the controller observes; the world itself stays deterministic.
pub fn rollout<E, C>(env: &E, controller: &C, s0: &[f64], noise_scale: f64, noise_seed: u64) -> Result<RolloutResult>
where
    E: Environment + ?Sized,
    C: Controller + ?Sized,
{
    if !(noise_scale >= 0.0) {
        return Err(Error::Input(format!("noise scale must be non-negative, got {noise_scale}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut s = s0.to_vec();
    let mut transitions = Vec::new();
    let mut success = false;
    let mut obs = vec![0.0; s.len()];
    for _ in 0..env.horizon() {
        for (o, x) in obs.iter_mut().zip(&s) {
            let n: f64 = if noise_scale > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            *o = x + noise_scale * n;
        }
        let a = controller.action(&obs)?;
        if a.len() != env.action_dim() {
            return Err(Error::Input(format!(
                "controller produced {} actions, {} expects {}",
                a.len(),
                env.name(),
                env.action_dim()
            )));
        }
        let out = env.step(&s, &a);
        if !out.next.iter().all(|v| v.is_finite()) {
            break;
        }
        transitions.push(Transition {
            s: s.clone(),
            a,
            s_next: out.next.clone(),
            contact: out.contact,
        });
        s = out.next;
        if env.is_success(&s) {
            success = true;
            break;
        }
    }
    Ok(RolloutResult {
        initial_state: s0.to_vec(),
        transitions,
        success,
        noise_seed,
    })
}

/// Collects `n_traj` successful noise-free expert demonstrations from
/// initial states drawn with `seed`. Failed attempts are discarded.
pub fn collect<E: Environment + ?Sized>(env: &E, n_traj: usize, seed: u64) -> Result<TrajectoryDataset> {
    if n_traj == 0 {
        return Err(Error::Input("need at least one trajectory".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let expert = Expert(env);
    let max_attempts = 10 * n_traj;
    let mut kept = Vec::with_capacity(n_traj);
    let mut attempts = 0;
    while kept.len() < n_traj && attempts < max_attempts {
        attempts += 1;
        let s0 = env.sample_initial(&mut rng);
        let r = rollout(env, &expert, &s0, 0.0, 0)?;
        if r.success && !r.transitions.is_empty() {
            kept.push(r.transitions);
        }
    }
    let rate = kept.len() as f64 / attempts as f64;
    if kept.len() < n_traj || rate < 0.5 {
        return Err(Error::Environment(format!(
            "{}: expert succeeded in {} of {attempts} attempts",
            env.name(),
            kept.len()
        )));
    }
    TrajectoryDataset::from_transitions(kept)
}

/// Outcome of a batch of evaluation rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub successes: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub rollouts: Vec<RolloutResult>,
}

/// Initial condition of trial `i`: the fixed grid is cycled, so 48 trials
/// visit each of 16 conditions three times.
pub fn grid_initial_states<E: Environment + ?Sized>(env: &E, n_trials: usize) -> Vec<Vec<f64>> {
    let grid = env.initial_grid();
    (0..n_trials).map(|i| grid[i % grid.len()].clone()).collect()
}

/// Evaluates `controller` on `n_trials` rollouts from the fixed grid with
/// observation noise. Trial `i` uses noise seed `mix(seed, i)`, so two
/// controllers evaluated with the same seed face identical noise sequences.
pub fn evaluate<E, C>(env: &E, controller: &C, n_trials: usize, noise_scale: f64, seed: u64) -> Result<Evaluation>
where
    E: Environment + ?Sized,
    C: Controller + ?Sized,
{
    if !(noise_scale >= 0.0) {
        return Err(Error::Input(format!("noise scale must be non-negative, got {noise_scale}")));
    }
    let starts = grid_initial_states(env, n_trials);
    let rollouts = starts
        .par_iter()
        .enumerate()
        .map(|(i, s0)| rollout(env, controller, s0, noise_scale, mix(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let successes = rollouts.iter().filter(|r| r.success).count();
    Ok(Evaluation {
        successes,
        trials: n_trials,
        success_rate: if n_trials == 0 { 0.0 } else { successes as f64 / n_trials as f64 },
        rollouts,
    })
}
