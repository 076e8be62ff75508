use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamp, Environment, StepOutcome};
use crate::linalg::{spectral_norm_converged, Matrix};

/// Torque-limited pendulum. State `(θ, ω)` with `θ = 0` upright; one torque
/// input. Explicit Euler:
/// `θ′ = θ + dt·ω`, `ω′ = ω + dt·(g·sin θ − b·ω + clip(u))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pendulum {
    pub dt: f64,
    pub gravity: f64,
    pub damping: f64,
    pub max_torque: f64,
    pub horizon: usize,
    pub angle_tol: f64,
    pub rate_tol: f64,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            dt: 0.05,
            gravity: 10.0,
            damping: 0.1,
            max_torque: 3.0,
            horizon: 300,
            angle_tol: 0.1,
            rate_tol: 0.3,
        }
    }
}

/// Angle wrapped into `(−π, π]`.
pub(crate) fn wrap(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

impl Pendulum {
    /// Total energy relative to resting upright: `½ω² + g(cos θ − 1)`.
    pub fn energy(&self, s: &[f64]) -> f64 {
        0.5 * s[1] * s[1] + self.gravity * (s[0].cos() - 1.0)
    }

    /// Worst-case Jacobian of `f` over the state block.
    pub fn true_state_lipschitz(&self) -> f64 {
        let j = Matrix::from_rows(&[vec![0.0, self.dt], vec![self.dt * self.gravity, -self.dt * self.damping]]);
        spectral_norm_converged(&j, 1e-15, 100_000)
    }
}

impl Environment for Pendulum {
    fn name(&self) -> &str {
        "pendulum"
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
        let (theta, omega) = (s[0], s[1]);
        let u = clamp(a[0], self.max_torque);
        let alpha = self.gravity * theta.sin() - self.damping * omega + u;
        StepOutcome {
            next: vec![theta + self.dt * omega, omega + self.dt * alpha],
            contact: false,
        }
    }

    fn is_success(&self, s: &[f64]) -> bool {
        wrap(s[0]).abs() < self.angle_tol && s[1].abs() < self.rate_tol
    }

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![PI + rng.random_range(-0.8..0.8), rng.random_range(-0.5..0.5)]
    }

    fn initial_grid(&self) -> Vec<Vec<f64>> {
        let mut g = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..4 {
                g.push(vec![PI - 0.6 + 0.4 * i as f64, -0.45 + 0.3 * j as f64]);
            }
        }
        g
    }

    /// Energy pumping towards the upright orbit, PD capture near the top.
    fn expert_action(&self, s: &[f64]) -> Vec<f64> {
        let theta = wrap(s[0]);
        let omega = s[1];
        let u = if theta.abs() < 0.35 && omega.abs() < 2.0 {
            -(25.0 * theta + 6.0 * omega)
        } else {
            // pushing along ω raises the energy towards the upright level 0
            let dir = if omega == 0.0 { 1.0 } else { omega.signum() };
            -4.0 * self.energy(&[theta, omega]) * dir
        };
        vec![clamp(u, self.max_torque)]
    }

    fn true_lipschitz(&self) -> Option<f64> {
        let j = Matrix::from_rows(&[
            vec![0.0, self.dt, 0.0],
            vec![self.dt * self.gravity, -self.dt * self.damping, self.dt],
        ]);
        Some(spectral_norm_converged(&j, 1e-15, 100_000))
    }
}
