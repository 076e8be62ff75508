use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamp, Environment, StepOutcome};

/// One-dimensional insertion. State `(x, v)`, force input. Inside the hole
/// (`x ≥ entry`) Coulomb friction removes up to `friction·dt` of speed per
/// step; success means resting within `tolerance` of the seat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peg1d {
    pub dt: f64,
    pub max_force: f64,
    pub entry: f64,
    pub seat: f64,
    pub tolerance: f64,
    pub rest_speed: f64,
    pub friction: f64,
    pub horizon: usize,
}

impl Default for Peg1d {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_force: 1.0,
            entry: 1.0,
            seat: 1.5,
            tolerance: 0.02,
            rest_speed: 0.05,
            friction: 0.3,
            horizon: 150,
        }
    }
}

impl Environment for Peg1d {
    fn name(&self) -> &str {
        "peg1d"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn step(&self, s: &[f64], a: &[f64]) -> StepOutcome {
        let (x, v) = (s[0], s[1]);
        let mut v_next = v + self.dt * clamp(a[0], self.max_force);
        let contact = x >= self.entry;
        if contact {
            let slowed = (v_next.abs() - self.friction * self.dt).max(0.0);
            v_next = v_next.signum() * slowed;
        }
        StepOutcome {
            next: vec![x + self.dt * v_next, v_next],
            contact,
        }
    }

    fn is_success(&self, s: &[f64]) -> bool {
        (s[0] - self.seat).abs() <= self.tolerance && s[1].abs() <= self.rest_speed
    }

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![rng.random_range(-0.5..0.5), rng.random_range(-0.1..0.1)]
    }

    fn initial_grid(&self) -> Vec<Vec<f64>> {
        (0..16)
            .map(|k| vec![-0.45 + 0.06 * k as f64, if k % 2 == 0 { -0.05 } else { 0.05 }])
            .collect()
    }

    /// PD towards the seat with friction feed-forward inside the hole.
    fn expert_action(&self, s: &[f64]) -> Vec<f64> {
        let (x, v) = (s[0], s[1]);
        let mut u = 2.0 * (self.seat - x) - 2.5 * v;
        if x >= self.entry && v.abs() > 1e-9 {
            u += self.friction * v.signum();
        }
        vec![clamp(u, self.max_force)]
    }
}
