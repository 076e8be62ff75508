use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, StepOutcome};
use crate::linalg::{spectral_norm_converged, Matrix};

/// Synthetic system `s′ = s + A s + B a` with a fixed linear feedback expert
/// `a = −G s` plus a deterministic excitation term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub gain: Matrix,
    pub horizon: usize,
    pub init_scale: f64,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, gain: Matrix) -> Self {
        Self {
            a,
            b,
            gain,
            horizon: 40,
            init_scale: 1.0,
        }
    }

    /// A stable 3-state, 2-input system used by tests.
    pub fn example() -> Self {
        let a = Matrix::from_rows(&[
            vec![-0.05, 0.10, 0.00],
            vec![-0.10, -0.02, 0.05],
            vec![0.02, 0.00, -0.08],
        ]);
        let b = Matrix::from_rows(&[vec![0.10, 0.00], vec![0.00, 0.08], vec![0.05, -0.04]]);
        let gain = Matrix::from_rows(&[vec![0.6, 0.1, 0.2], vec![0.0, 0.5, -0.3]]);
        Self::new(a, b, gain)
    }

    /// `‖A‖₂`, the Lipschitz constant of `f` in the state alone.
    pub fn state_lipschitz(&self) -> f64 {
        spectral_norm_converged(&self.a, 1e-15, 100_000)
    }

    /// True residual `f(s, a) = A s + B a`.
    pub fn residual(&self, s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut d = self.a.matvec(s);
        for (di, bi) in d.iter_mut().zip(self.b.matvec(a)) {
            *di += bi;
        }
        d
    }
}

impl Environment for LinearSystem {
    fn name(&self) -> &str {
        "linear"
    }
    fn state_dim(&self) -> usize {
        self.a.rows()
    }
    fn action_dim(&self) -> usize {
        self.b.cols()
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn step(&self, s: &[f64], a: &[f64]) -> StepOutcome {
        let d = self.residual(s, a);
        StepOutcome {
            next: s.iter().zip(&d).map(|(x, dx)| x + dx).collect(),
            contact: false,
        }
    }
    fn is_success(&self, _s: &[f64]) -> bool {
        false
    }
    fn sample_initial(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.state_dim())
            .map(|_| rng.random_range(-self.init_scale..self.init_scale))
            .collect()
    }
    fn initial_grid(&self) -> Vec<Vec<f64>> {
        let n = self.state_dim();
        (0..16)
            .map(|k| {
                (0..n)
                    .map(|i| self.init_scale * (((k * (i + 3) + i) % 7) as f64 / 3.0 - 1.0))
                    .collect()
            })
            .collect()
    }
    fn expert_action(&self, s: &[f64]) -> Vec<f64> {
        let mut a = self.gain.matvec(s);
        // excitation keeps (s, a) from collapsing onto a subspace
        let phase = s.iter().sum::<f64>() * 3.0;
        for (i, ai) in a.iter_mut().enumerate() {
            *ai = -*ai + 0.5 * (phase + i as f64).sin();
        }
        a
    }
    fn true_lipschitz(&self) -> Option<f64> {
        let n = self.state_dim();
        let mut ab = Matrix::zeros(n, n + self.action_dim());
        for i in 0..n {
            for j in 0..n {
                ab[(i, j)] = self.a[(i, j)];
            }
            for j in 0..self.action_dim() {
                ab[(i, n + j)] = self.b[(i, j)];
            }
        }
        Some(spectral_norm_converged(&ab, 1e-15, 100_000))
    }
}
