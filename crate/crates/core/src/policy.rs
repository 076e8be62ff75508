//! Behavior-cloning policies trained on expert data, optionally augmented with
//! accepted corrective labels.
//!
//! Training regresses actions directly. Maximizing the likelihood of expert
//! actions under a fixed-variance Gaussian policy head reduces to the same
//! squared-error objective.

use serde::{Deserialize, Serialize};

use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::labeler::CorrectiveLabel;
use crate::linalg::{dot, norm};
use crate::nn::{fit, Activation, Mlp, Sample, SpectralConstraint, Standardizer, TrainConfig};

/// Layout of the action vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionSpace {
    /// Plain vector regressed with squared error.
    Raw { dim: usize },
    /// `(x: 3-vector, q: quaternion, c: scalar)`, 8 values.
    Pose,
}

impl ActionSpace {
    pub const POSE_DIM: usize = 8;

    pub fn dim(&self) -> usize {
        match self {
            ActionSpace::Raw { dim } => *dim,
            ActionSpace::Pose => Self::POSE_DIM,
        }
    }
}

/// Weights `(α1, α2, α3)` of the position, rotation-angle and gripper terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub position: f64,
    pub rotation: f64,
    pub gripper: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            position: 10.0,
            rotation: 1.0,
            gripper: 10.0,
        }
    }
}

fn split_pose(a: &[f64]) -> (&[f64], &[f64], f64) {
    (&a[0..3], &a[3..7], a[7])
}

/// Geodesic angle between two rotations, `2·acos(|⟨q, q̂⟩|)` on unit
/// quaternions; always in `[0, π]`.
pub fn quaternion_angle(q: &[f64], q_hat: &[f64]) -> Result<f64> {
    let (nq, nh) = (norm(q), norm(q_hat));
    if nq == 0.0 || nh == 0.0 || !nq.is_finite() || !nh.is_finite() {
        return Err(Error::Input("quaternion must have nonzero finite norm".into()));
    }
    let d = (dot(q, q_hat) / (nq * nh)).abs().clamp(0.0, 1.0);
    Ok(2.0 * d.acos())
}

/// Action loss. Pose mode: `α1‖x − x̂‖² + α2θ² + α3(c − ĉ)²`; raw mode:
/// `Σ (a − â)²`.
pub fn action_loss(target: &[f64], pred: &[f64], space: ActionSpace, weights: &LossWeights) -> Result<f64> {
    if target.len() != space.dim() || pred.len() != space.dim() {
        return Err(Error::Input(format!(
            "actions must have {} entries, got {} and {}",
            space.dim(),
            target.len(),
            pred.len()
        )));
    }
    match space {
        ActionSpace::Raw { .. } => Ok(target.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum()),
        ActionSpace::Pose => {
            let (x, q, c) = split_pose(target);
            let (xh, qh, ch) = split_pose(pred);
            let theta = quaternion_angle(q, qh)?;
            let pos: f64 = x.iter().zip(xh).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok(weights.position * pos + weights.rotation * theta * theta + weights.gripper * (c - ch) * (c - ch))
        }
    }
}

/// `acos(d) / sqrt(1 − d²)`, continuous at `d = 1` where it equals 1.
fn acos_ratio(d: f64) -> f64 {
    let e = 1.0 - d;
    if e < 1e-6 {
        // series around d = 1: 1 + e/3 + 2e²/15
        1.0 + e / 3.0 + 2.0 * e * e / 15.0
    } else {
        d.acos() / (1.0 - d * d).sqrt()
    }
}

/// Pose loss with its gradient with respect to the raw (unnormalized)
/// prediction `pred`.
pub(crate) fn pose_loss_grad(target: &[f64], pred: &[f64], weights: &LossWeights, grad: &mut [f64]) -> f64 {
    let (x, q, c) = split_pose(target);
    let (xh, qh, ch) = split_pose(pred);
    let mut loss = 0.0;
    for i in 0..3 {
        let r = xh[i] - x[i];
        loss += weights.position * r * r;
        grad[i] = 2.0 * weights.position * r;
    }
    let nq = norm(q).max(f64::MIN_POSITIVE);
    let nh = norm(qh).max(1e-12);
    let qn: Vec<f64> = q.iter().map(|v| v / nq).collect();
    let hn: Vec<f64> = qh.iter().map(|v| v / nh).collect();
    let raw = dot(&qn, &hn);
    let sign = if raw < 0.0 { -1.0 } else { 1.0 };
    let d = (raw * sign).clamp(0.0, 1.0);
    let theta = 2.0 * d.acos();
    loss += weights.rotation * theta * theta;
    // dθ²/dd = −8·acos(d)/√(1−d²); dd/dq̂ = sign·(q − (q·q̂ₙ)q̂ₙ)/‖q̂‖
    let dl_dd = -8.0 * weights.rotation * acos_ratio(d);
    for i in 0..4 {
        grad[3 + i] = dl_dd * sign * (qn[i] - raw * hn[i]) / nh;
    }
    let r = ch - c;
    loss += weights.gripper * r * r;
    grad[7] = 2.0 * weights.gripper * r;
    loss
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub net: Mlp,
    pub input_norm: Standardizer,
    /// Identity for pose actions.
    pub output_norm: Standardizer,
    pub action_space: ActionSpace,
    pub loss_weights: LossWeights,
}

impl PolicyModel {
    /// Deterministic action for state `s`. Pose actions come back with a unit
    /// quaternion.
    pub fn act(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.input_norm.dim() {
            return Err(Error::Input(format!(
                "policy expects {} state entries, got {}",
                self.input_norm.dim(),
                s.len()
            )));
        }
        let out = self.net.forward(&self.input_norm.normalize(s))?;
        let mut a = self.output_norm.denormalize(&out);
        if self.action_space == ActionSpace::Pose {
            let n = norm(&a[3..7]);
            if n > 0.0 {
                a[3..7].iter_mut().for_each(|v| *v /= n);
            } else {
                a[3..7].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
            }
        }
        Ok(a)
    }

    pub fn state_dim(&self) -> usize {
        self.input_norm.dim()
    }
}

/// Union of expert pairs and generated pairs, without deduplication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedDataset {
    pub expert: Vec<(Vec<f64>, Vec<f64>)>,
    pub generated: Vec<(Vec<f64>, Vec<f64>)>,
    /// Sample weight of generated pairs (expert pairs weigh 1).
    pub generated_weight: f64,
}

impl AugmentedDataset {
    pub fn expert_only(data: &TrajectoryDataset) -> Self {
        Self {
            expert: data.iter().map(|(_, tr)| (tr.s.clone(), tr.a.clone())).collect(),
            generated: Vec::new(),
            generated_weight: 1.0,
        }
    }

    /// Expert pairs plus every label marked accepted.
    pub fn with_labels(data: &TrajectoryDataset, labels: &[CorrectiveLabel]) -> Self {
        let mut ds = Self::expert_only(data);
        ds.generated = labels
            .iter()
            .filter(|l| l.accepted)
            .map(|l| (l.s_g.clone(), l.a_g.clone()))
            .collect();
        ds
    }

    pub fn len(&self) -> usize {
        self.expert.len() + self.generated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// `None` infers a raw action space from the data.
    pub action_space: Option<ActionSpace>,
    pub loss_weights: LossWeights,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            train: TrainConfig {
                epochs: 200,
                batch_size: 32,
                learning_rate: 1e-3,
                ..TrainConfig::default()
            },
            action_space: None,
            loss_weights: LossWeights::default(),
        }
    }
}

/// Minimizes the mean action loss over the augmented dataset. Input (and, for
/// raw actions, output) standardization comes from the expert pairs only.
pub fn train_policy(data: &AugmentedDataset, config: &PolicyConfig) -> Result<PolicyModel> {
    let Some((s0, a0)) = data.expert.first().or(data.generated.first()) else {
        return Err(Error::Input("cannot train a policy on an empty dataset".into()));
    };
    let (state_dim, action_dim) = (s0.len(), a0.len());
    let space = config.action_space.unwrap_or(ActionSpace::Raw { dim: action_dim });
    if space.dim() != action_dim {
        return Err(Error::Input(format!(
            "action space expects {} values, data has {action_dim}",
            space.dim()
        )));
    }
    for (s, a) in data.expert.iter().chain(&data.generated) {
        if s.len() != state_dim || a.len() != action_dim {
            return Err(Error::Input("inconsistent state/action dimensions".into()));
        }
        if space == ActionSpace::Pose && norm(&a[3..7]) == 0.0 {
            return Err(Error::Input("target quaternion has zero norm".into()));
        }
    }
    let stats_source = if data.expert.is_empty() { &data.generated } else { &data.expert };
    let input_norm = Standardizer::fit(stats_source.iter().map(|(s, _)| s.as_slice()))?;
    let output_norm = match space {
        ActionSpace::Raw { .. } => Standardizer::fit(stats_source.iter().map(|(_, a)| a.as_slice()))?,
        ActionSpace::Pose => Standardizer::identity(action_dim),
    };

    let samples: Vec<Sample> = data
        .expert
        .iter()
        .map(|p| (p, 1.0))
        .chain(data.generated.iter().map(|p| (p, data.generated_weight)))
        .map(|((s, a), w)| Sample {
            input: input_norm.normalize(s),
            target: output_norm.normalize(a),
            weight: w,
        })
        .collect();

    let mut sizes = vec![state_dim];
    sizes.extend_from_slice(&config.hidden);
    sizes.push(action_dim);
    let mut net = Mlp::new(&sizes, Activation::Tanh, config.train.seed)?;
    let weights = config.loss_weights;
    let unconstrained = SpectralConstraint::unbounded();
    match space {
        ActionSpace::Raw { .. } => fit(&mut net, &samples, crate::nn::train::squared_error, &config.train, &unconstrained),
        ActionSpace::Pose => fit(
            &mut net,
            &samples,
            |p, t, g| pose_loss_grad(t, p, &weights, g),
            &config.train,
            &unconstrained,
        ),
    }
    .map_err(|e| e.context("policy"))?;

    Ok(PolicyModel {
        net,
        input_norm,
        output_norm,
        action_space: space,
        loss_weights: weights,
    })
}
