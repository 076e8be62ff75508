use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clamp, Environment, StepOutcome};
use crate::linalg::norm;

/// Point mass next to a rigid wall, with an object resting against the wall.
///
/// State `(px, py, vx, vy, ox, oy)`, action `(ax, ay, grip)`. The mass is a
/// double integrator; crossing the wall plane `x = wall` projects the position
/// back onto the wall and clamps the normal velocity to zero (the contact
/// branch). A closing grip (`grip > 0`) within `capture_radius` of the object
/// carries the object with the mass. Success: object lifted to `goal_height`
/// while carried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallGrasp {
    pub dt: f64,
    pub wall: f64,
    pub max_accel: f64,
    pub capture_radius: f64,
    pub goal_height: f64,
    pub horizon: usize,
}

impl Default for WallGrasp {
    fn default() -> Self {
        Self {
            dt: 0.1,
            wall: 1.0,
            max_accel: 2.0,
            capture_radius: 0.1,
            goal_height: 0.8,
            horizon: 80,
        }
    }
}

impl WallGrasp {
    fn carried(&self, s: &[f64], grip: f64) -> bool {
        grip > 0.0 && norm(&[s[0] - s[4], s[1] - s[5]]) <= self.capture_radius
    }
}

impl Environment for WallGrasp {
    fn name(&self) -> &str {
        "wallgrasp"
    }
    fn state_dim(&self) -> usize {
        6
    }
    fn action_dim(&self) -> usize {
        3
    }
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn step(&self, s: &[f64], a: &[f64]) -> StepOutcome {
        let ax = clamp(a[0], self.max_accel);
        let ay = clamp(a[1], self.max_accel);
        let mut vx = s[2] + self.dt * ax;
        let vy = s[3] + self.dt * ay;
        let mut px = s[0] + self.dt * vx;
        let py = s[1] + self.dt * vy;
        let contact = px > self.wall;
        if contact {
            px = self.wall;
            vx = 0.0;
        }
        let (ox, oy) = if self.carried(s, a[2]) { (px, py) } else { (s[4], s[5]) };
        StepOutcome {
            next: vec![px, py, vx, vy, ox, oy],
            contact,
        }
    }

    fn is_success(&self, s: &[f64]) -> bool {
        s[5] >= self.goal_height && s[0] == s[4] && s[1] == s[5]
    }

    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![
            rng.random_range(0.0..0.4),
            rng.random_range(-0.6..0.6),
            0.0,
            0.0,
            self.wall,
            rng.random_range(-0.5..0.3),
        ]
    }

    fn initial_grid(&self) -> Vec<Vec<f64>> {
        let mut g = Vec::with_capacity(16);
        for i in 0..4 {
            for j in 0..4 {
                let px = 0.05 + 0.1 * i as f64;
                let py = -0.5 + 0.3 * j as f64;
                let oy = -0.45 + 0.23 * ((i + 2 * j) % 4) as f64;
                g.push(vec![px, py, 0.0, 0.0, self.wall, oy]);
            }
        }
        g
    }

    /// Approach the object while pressing into the wall, close, then lift.
    fn expert_action(&self, s: &[f64]) -> Vec<f64> {
        let (px, py, vx, vy, ox, oy) = (s[0], s[1], s[2], s[3], s[4], s[5]);
        let dist = norm(&[px - ox, py - oy]);
        if dist <= 0.6 * self.capture_radius {
            let ay = 4.0 * (self.goal_height + 0.3 - py) - 3.0 * vy;
            vec![1.0, clamp(ay, self.max_accel), 1.0]
        } else {
            let ax = 4.0 * (ox + 0.05 - px) - 3.0 * vx;
            let ay = 4.0 * (oy - py) - 3.0 * vy;
            vec![clamp(ax, self.max_accel), clamp(ay, self.max_accel), -1.0]
        }
    }
}
