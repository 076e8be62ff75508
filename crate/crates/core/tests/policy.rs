use ccil_core::envs::{Environment, LinearSystem};
use ccil_core::linalg::{spectral_norm_converged, Matrix};
use ccil_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linear expert `a = C s` on uniformly sampled states, stepped through the
/// example linear system.
fn linear_expert_data(sys: &LinearSystem, n: usize, seed: u64) -> (Matrix, TrajectoryDataset) {
    let mut c = sys.gain.clone();
    c.scale(-1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajs = (0..n)
        .map(|_| {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = c.matvec(&s);
            let next = sys.step(&s, &a).next;
            vec![Transition::new(s, a, next)]
        })
        .collect();
    (c, TrajectoryDataset::from_transitions(trajs).unwrap())
}

/// Central-difference Jacobian of the policy at `s`.
fn policy_jacobian(policy: &PolicyModel, s: &[f64]) -> Matrix {
    let h = 1e-5;
    let mut j = Matrix::zeros(2, 3);
    for k in 0..3 {
        let mut up = s.to_vec();
        let mut down = s.to_vec();
        up[k] += h;
        down[k] -= h;
        let (au, ad) = (policy.act(&up).unwrap(), policy.act(&down).unwrap());
        for i in 0..2 {
            j[(i, k)] = (au[i] - ad[i]) / (2.0 * h);
        }
    }
    j
}

fn operator_gap(a: &Matrix, b: &Matrix) -> f64 {
    let d: Vec<f64> = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect();
    spectral_norm_converged(&Matrix::from_vec(a.rows(), a.cols(), d), 1e-12, 10_000)
}

const PROBES: [[f64; 3]; 4] = [[0.0, 0.0, 0.0], [0.5, -0.3, 0.2], [-0.4, 0.4, -0.5], [0.3, 0.6, 0.1]];

fn config() -> PolicyConfig {
    let mut cfg = PolicyConfig::default();
    cfg.train.epochs = 150;
    cfg.train.seed = 3;
    cfg
}

#[test]
fn linear_expert_map_is_recovered() {
    let sys = LinearSystem::example();
    let (c, data) = linear_expert_data(&sys, 2000, 1);
    let policy = train_policy(&AugmentedDataset::expert_only(&data), &config()).unwrap();
    for s in PROBES {
        let gap = operator_gap(&policy_jacobian(&policy, &s), &c);
        assert!(gap < 0.05, "gap {gap} at {s:?}");
    }
}

#[test]
fn corrective_labels_keep_linear_map() {
    let sys = LinearSystem::example();
    let (_, data) = linear_expert_data(&sys, 2000, 2);
    let model = train_dynamics(&data, &SpectralConstraint::unbounded(), &DynamicsConfig::default()).unwrap();
    let labels = filter_labels(&gen_labels(&model, &data).unwrap(), FilterConfig::Quantile(0.8))
        .unwrap()
        .accepted;
    let with = AugmentedDataset::with_labels(&data, &labels);
    assert_eq!(with.len(), data.len() + labels.len());
    let bc = train_policy(&AugmentedDataset::expert_only(&data), &config()).unwrap();
    let ccil = train_policy(&with, &config()).unwrap();
    for s in PROBES {
        let gap = operator_gap(&policy_jacobian(&bc, &s), &policy_jacobian(&ccil, &s));
        assert!(gap < 0.05, "gap {gap} at {s:?}");
    }
}

/// Labels pair `s_g = (I − A − BC) s*` with `C s*`, so they follow the map
/// `C (I − A − BC)⁻¹`. Mixed in with the expert pairs, they pull the fitted
/// map toward it in proportion to their share of the training set.
#[test]
fn label_shift_matches_label_map() {
    let sys = LinearSystem::example();
    let (c, data) = linear_expert_data(&sys, 2000, 2);
    let model = train_dynamics(&data, &SpectralConstraint::unbounded(), &DynamicsConfig::default()).unwrap();
    let labels = filter_labels(&gen_labels(&model, &data).unwrap(), FilterConfig::Quantile(0.8))
        .unwrap()
        .accepted;
    let bc = train_policy(&AugmentedDataset::expert_only(&data), &config()).unwrap();
    let ccil = train_policy(&AugmentedDataset::with_labels(&data, &labels), &config()).unwrap();

    let mut closed = Matrix::identity(3);
    let bc_gain = sys.b.matmul(&c);
    for i in 0..3 {
        for j in 0..3 {
            closed[(i, j)] -= sys.a[(i, j)] + bc_gain[(i, j)];
        }
    }
    let inv: Vec<f64> = nalgebra::DMatrix::from_row_slice(3, 3, closed.as_slice())
        .try_inverse()
        .unwrap()
        .transpose()
        .iter()
        .copied()
        .collect();
    let label_map = c.matmul(&Matrix::from_vec(3, 3, inv));
    let share = labels.len() as f64 / (data.len() + labels.len()) as f64;
    let predicted = share * operator_gap(&label_map, &c);

    let origin = [0.0; 3];
    let observed = operator_gap(&policy_jacobian(&bc, &origin), &policy_jacobian(&ccil, &origin));
    assert!((observed - predicted).abs() < 0.02, "observed {observed} predicted {predicted}");
}

#[test]
fn training_is_deterministic_and_act_is_pure() {
    let sys = LinearSystem::example();
    let (_, data) = linear_expert_data(&sys, 200, 4);
    let mut cfg = config();
    cfg.train.epochs = 5;
    let ds = AugmentedDataset::expert_only(&data);
    let a = train_policy(&ds, &cfg).unwrap();
    assert_eq!(a, train_policy(&ds, &cfg).unwrap());
    let s = [0.1, 0.2, -0.3];
    assert_eq!(a.act(&s).unwrap(), a.act(&s).unwrap());
    assert!(a.act(&s[..2]).is_err());
}
