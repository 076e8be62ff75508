//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to the
//! process stdout (bypassing the harness capture) and then asserts.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use ccil_core::envs::rollout::{rollout, Expert};
use ccil_core::envs::LinearSystem;
use ccil_core::experiments::{run_ablation, AblationConfig, AblationReport, Cap};
use ccil_core::labeler::accept_count;
use ccil_core::linalg::norm;
use ccil_core::stats::{mean, standard_normal_sf, welch_t_test};
use ccil_core::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(id: usize, name: &str, pass: bool, detail: &str, started: Instant) {
    let line = format!(
        "criterion {id:>2} {name}: {} ({detail}; {:.1}s)\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    std::io::stdout().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {id} {name} failed: {detail}");
}

fn svd_norm(m: &Matrix) -> f64 {
    let d = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    d.singular_values().max()
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[test]
fn gradient_correctness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for net_id in 0..50 {
        let depth = 1 + net_id % 4;
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=6)).collect();
        let mut net = Mlp::new(&sizes, Activation::Tanh, net_id as u64).unwrap();
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.5..1.5)).collect();
        let target: Vec<f64> = (0..sizes[depth]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |net: &Mlp| -> f64 {
            let y = net.forward(&x).unwrap();
            0.5 * y.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };

        let mut tape = ccil_core::nn::Tape::default();
        net.forward_tape(&x, &mut tape).unwrap();
        let grad_out: Vec<f64> = tape.output().iter().zip(&target).map(|(a, b)| a - b).collect();
        let mut grads = ccil_core::nn::Gradients::zeros_like(&net);
        net.backward(&tape, &grad_out, &mut grads).unwrap();

        for l in 0..depth {
            for k in 0..net.layers()[l].weights.as_slice().len() {
                let orig = net.layers()[l].weights.as_slice()[k];
                net.layers_mut()[l].weights.as_mut_slice()[k] = orig + h;
                let up = loss(&net);
                net.layers_mut()[l].weights.as_mut_slice()[k] = orig - h;
                let down = loss(&net);
                net.layers_mut()[l].weights.as_mut_slice()[k] = orig;
                worst = worst.max(rel_err(grads.weights[l].as_slice()[k], (up - down) / (2.0 * h)));
            }
            for k in 0..net.layers()[l].bias.len() {
                let orig = net.layers()[l].bias[k];
                net.layers_mut()[l].bias[k] = orig + h;
                let up = loss(&net);
                net.layers_mut()[l].bias[k] = orig - h;
                let down = loss(&net);
                net.layers_mut()[l].bias[k] = orig;
                worst = worst.max(rel_err(grads.bias[l][k], (up - down) / (2.0 * h)));
            }
        }

        let jac = net.jacobian(&x).unwrap();
        for j in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let yp = net.forward(&xp).unwrap();
            let ym = net.forward(&xm).unwrap();
            for i in 0..yp.len() {
                worst = worst.max(rel_err(jac[(i, j)], (yp[i] - ym[i]) / (2.0 * h)));
            }
        }
    }
    verdict(1, "gradient correctness", worst < 1e-4, &format!("max relative error {worst:.2e} over 50 nets"), t0);
}

fn wallgrasp_data(n: usize, seed: u64) -> TrajectoryDataset {
    collect(&make_env("wallgrasp").unwrap(), n, seed).unwrap()
}

#[test]
fn spectral_bound() {
    let t0 = Instant::now();
    let data = wallgrasp_data(10, 3);
    let mut cfg = DynamicsConfig::default();
    cfg.train.epochs = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pass = true;
    let mut worst_layer = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0f64;
    for k in [0.5, 1.0, 2.0, 4.0] {
        let model = train_dynamics(&data, &SpectralConstraint::bounded(k), &cfg).unwrap();
        let n = model.net.depth();
        let layer_cap = k.powf(1.0 / n as f64);
        for layer in model.net.layers() {
            let s = svd_norm(&layer.weights);
            worst_layer = worst_layer.max(s - layer_cap);
            pass &= s <= layer_cap + 1e-6;
        }
        let dim = model.net.input_dim();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x2: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let dy: Vec<f64> = model
                .net
                .forward(&x)
                .unwrap()
                .iter()
                .zip(model.net.forward(&x2).unwrap())
                .map(|(a, b)| a - b)
                .collect();
            let dx: Vec<f64> = x.iter().zip(&x2).map(|(a, b)| a - b).collect();
            let ratio = norm(&dy) / (k * norm(&dx));
            worst_ratio = worst_ratio.max(ratio);
            pass &= ratio <= 1.0;
        }
    }
    verdict(
        2,
        "spectral bound",
        pass,
        &format!("max ‖W‖ − K^(1/n) = {worst_layer:.2e}, max pair ratio / K = {worst_ratio:.3}"),
        t0,
    );
}

/// Expert rollouts of the synthetic linear system (which has no success
/// condition, so trajectories run to the horizon).
fn linear_data(sys: &LinearSystem, n: usize, seed: u64) -> TrajectoryDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trajs = (0..n)
        .map(|_| {
            let s0 = sys.sample_initial(&mut rng);
            rollout(sys, &Expert(sys), &s0, 0.0, 0).unwrap().transitions
        })
        .collect();
    TrajectoryDataset::from_transitions(trajs).unwrap()
}

#[test]
fn label_error_bound_on_linear_system() {
    let t0 = Instant::now();
    let sys = LinearSystem::example();
    let data = linear_data(&sys, 20, 4);
    let model = train_dynamics(&data, &SpectralConstraint::unbounded(), &DynamicsConfig::default()).unwrap();
    let labels = gen_labels(&model, &data).unwrap();
    let k2 = sys.state_lipschitz();
    let mut holds = 0;
    let mut tightest = f64::INFINITY;
    for l in &labels {
        let truth = sys.residual(&l.s_g, &l.a_g);
        let pred = model.predict_delta(&l.s_g, &l.a_g).unwrap();
        let err: Vec<f64> = truth.iter().zip(&pred).map(|(a, b)| a - b).collect();
        let bound = model.eps_max + (l.local_lipschitz + k2) * l.label_distance;
        tightest = tightest.min(bound - norm(&err));
        if norm(&err) <= bound {
            holds += 1;
        }
    }
    verdict(
        3,
        "label error bound",
        holds == labels.len(),
        &format!("{holds}/{} labels within bound, min slack {tightest:.2e}", labels.len()),
        t0,
    );
}

#[test]
fn filter_contract() {
    let t0 = Instant::now();
    let data = wallgrasp_data(5, 5);
    let mut cfg = DynamicsConfig::default();
    cfg.train.epochs = 20;
    let model = train_dynamics(&data, &SpectralConstraint::unbounded(), &cfg).unwrap();
    let mut labels = gen_labels(&model, &data).unwrap();
    // force ties across trajectories and steps
    for (i, l) in labels.iter_mut().enumerate() {
        if i % 3 == 0 {
            l.error_bound = 0.01;
        }
    }
    let mut order: Vec<&CorrectiveLabel> = labels.iter().collect();
    order.sort_by(|a, b| a.error_bound.total_cmp(&b.error_bound).then(a.source.cmp(&b.source)));
    let n = labels.len();
    let mut pass = true;
    let mut detail = Vec::new();
    for q in [0.0, 0.25, 0.5, 0.8, 1.0] {
        let out = filter_labels(&labels, FilterConfig::Quantile(q)).unwrap();
        let expected: Vec<_> = order[..accept_count(q, n)].iter().map(|l| l.source).collect();
        let got: Vec<_> = out.accepted.iter().map(|l| l.source).collect();
        pass &= got == expected && out.accepted.len() + out.rejected.len() == n;
        pass &= out.accepted.iter().all(|l| l.accepted) && out.rejected.iter().all(|l| !l.accepted);
        if q == 0.0 {
            pass &= got.is_empty();
        }
        if q == 1.0 {
            pass &= got.len() == n;
        }
        detail.push(format!("q={q}: {}", got.len()));
    }
    verdict(4, "filter contract", pass, &format!("{} of {n}", detail.join(", ")), t0);
}

#[test]
fn mixed_continuity() {
    let t0 = Instant::now();
    let (mut bound_c, mut bound_f, mut lip_c, mut lip_f) = (vec![], vec![], vec![], vec![]);
    for seed in 0..5 {
        let data = wallgrasp_data(20, 200 + seed);
        let mut cfg = DynamicsConfig::default();
        cfg.train.seed = seed;
        let model = train_dynamics(&data, &SpectralConstraint::unbounded(), &cfg).unwrap();
        let labels = gen_labels(&model, &data).unwrap();
        let pick = |contact: bool, f: fn(&CorrectiveLabel) -> f64| -> f64 {
            let v: Vec<f64> = labels.iter().filter(|l| l.contact == contact).map(f).collect();
            mean(&v)
        };
        bound_c.push(pick(true, |l| l.error_bound));
        bound_f.push(pick(false, |l| l.error_bound));
        lip_c.push(pick(true, |l| l.local_lipschitz));
        lip_f.push(pick(false, |l| l.local_lipschitz));
    }
    let (_, p_bound) = welch_t_test(&bound_c, &bound_f).unwrap();
    let (_, p_lip) = welch_t_test(&lip_c, &lip_f).unwrap();
    let pass = mean(&bound_c) > mean(&bound_f) && p_bound < 0.05 && mean(&lip_c) > mean(&lip_f) && p_lip < 0.05;
    verdict(
        5,
        "mixed continuity",
        pass,
        &format!(
            "bound contact {:.4} vs free {:.4} (p={p_bound:.2e}); Lipschitz contact {:.4} vs free {:.4} (p={p_lip:.2e})",
            mean(&bound_c),
            mean(&bound_f),
            mean(&lip_c),
            mean(&lip_f)
        ),
        t0,
    );
}

#[test]
fn constraint_convergence() {
    let t0 = Instant::now();
    let caps = [Some(0.5), Some(1.0), Some(2.0), Some(4.0), None];
    let seeds = 0..3u64;
    // per cap: per-seed mean local Lipschitz coefficient
    let mut means = vec![Vec::new(); caps.len()];
    for seed in seeds {
        let data = wallgrasp_data(20, 300 + seed);
        for (i, cap) in caps.iter().enumerate() {
            let constraint = match cap {
                Some(k) => SpectralConstraint::bounded(*k),
                None => SpectralConstraint::unbounded(),
            };
            let mut cfg = DynamicsConfig::default();
            cfg.train.seed = seed;
            let model = train_dynamics(&data, &constraint, &cfg).unwrap();
            means[i].push(lipschitz_distribution(&model, &data).unwrap().summary.mean);
        }
    }
    // informational: where the capped distribution does meet the unbounded one
    let mut k16 = Vec::new();
    for seed in 0..3u64 {
        let data = wallgrasp_data(20, 300 + seed);
        let mut cfg = DynamicsConfig::default();
        cfg.train.seed = seed;
        let model = train_dynamics(&data, &SpectralConstraint::bounded(16.0), &cfg).unwrap();
        k16.push(lipschitz_distribution(&model, &data).unwrap().summary.mean);
    }
    let avg: Vec<f64> = means.iter().map(|m| mean(m)).collect();
    let se: Vec<f64> = means
        .iter()
        .map(|m| (ccil_core::stats::variance(m) / m.len() as f64).sqrt())
        .collect();
    // non-decreasing up to two standard errors of the difference
    let monotone = (1..caps.len()).all(|i| avg[i] >= avg[i - 1] - 2.0 * (se[i].powi(2) + se[i - 1].powi(2)).sqrt());
    let gap = (avg[3] - avg[4]).abs() / avg[4];
    let table: Vec<String> = caps
        .iter()
        .zip(&avg)
        .map(|(c, m)| format!("K={}: {m:.4}", Cap(*c)))
        .collect();
    verdict(
        6,
        "constraint convergence",
        monotone && gap <= 0.10,
        &format!(
            "{}; monotone {monotone}; K=4 vs unbounded gap {:.1}%; K=16 (not graded): {:.4}",
            table.join(", "),
            100.0 * gap,
            mean(&k16)
        ),
        t0,
    );
}

const MASTER_SEED: u64 = 2024;

/// Quantile tuning on the default wallgrasp grid at 5 trajectories, with
/// replicate seeds disjoint from the held-out evaluation.
fn tuning_report() -> &'static AblationReport {
    static REPORT: OnceLock<AblationReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let mut cfg = AblationConfig::default_grid("wallgrasp", MASTER_SEED);
        cfg.data_sizes = vec![5];
        cfg.replicates = (100..105).collect();
        run_ablation(&cfg, 1).unwrap()
    })
}

#[test]
fn low_data_boost() {
    let t0 = Instant::now();
    let tuning = tuning_report();
    let best = tuning
        .cells
        .iter()
        .filter(|c| c.quantile > 0.0)
        .fold(None::<&ccil_core::experiments::CellReport>, |best, c| match best {
            Some(b) if b.ccil_successes >= c.ccil_successes => Some(b),
            _ => Some(c),
        })
        .unwrap();

    let mut cfg = AblationConfig::default_grid("wallgrasp", MASTER_SEED);
    cfg.data_sizes = vec![5];
    cfg.caps = vec![best.cap];
    cfg.quantiles = vec![best.quantile];
    cfg.replicates = (0..10).collect();
    let low = run_ablation(&cfg, 1).unwrap();
    let cell = &low.cells[0];

    cfg.data_sizes = vec![100];
    cfg.replicates = (0..2).collect();
    let high = run_ablation(&cfg, 1).unwrap();
    let hc = &high.cells[0];

    let pass = cell.trials >= 200 && cell.ccil_successes > cell.bc_successes && cell.p < 0.05;
    verdict(
        7,
        "low-data boost",
        pass,
        &format!(
            "tuned K={} q={}; n=5: BC {}/{} vs CCIL {}/{} z={:.2} p={:.2e} {}; n=100 (reported only): BC {}/{} vs CCIL {}/{} p={:.3} {}",
            best.cap,
            best.quantile,
            cell.bc_successes,
            cell.trials,
            cell.ccil_successes,
            cell.trials,
            cell.z,
            cell.p,
            cell.significance,
            hc.bc_successes,
            hc.trials,
            hc.ccil_successes,
            hc.trials,
            hc.p,
            hc.significance
        ),
        t0,
    );
}

#[test]
fn harmful_labels() {
    let t0 = Instant::now();
    let tuning = tuning_report();
    let mut pass = true;
    let mut detail = Vec::new();
    for &cap in &tuning.config.caps {
        let row: Vec<_> = tuning.cells.iter().filter(|c| c.cap == cap).collect();
        let all = row.iter().find(|c| c.quantile == 1.0).unwrap();
        let best = row
            .iter()
            .filter(|c| c.quantile > 0.0 && c.quantile < 1.0)
            .map(|c| c.ccil_successes)
            .max()
            .unwrap();
        pass &= all.ccil_successes <= best;
        detail.push(format!("K={cap}: q=1 {} vs best intermediate {best} of {}", all.ccil_successes, all.trials));
    }
    verdict(8, "harmful labels", pass, &detail.join("; "), t0);
}

#[test]
fn determinism() {
    let t0 = Instant::now();
    let mut cfg = AblationConfig::default_grid("wallgrasp", 99);
    cfg.data_sizes = vec![3];
    cfg.caps = vec![Cap(Some(2.0)), Cap::UNBOUNDED];
    cfg.quantiles = vec![0.0, 0.5, 1.0];
    cfg.replicates = vec![0, 1];
    cfg.trials = 32;
    cfg.dynamics.train.epochs = 30;
    cfg.policy.train.epochs = 30;
    let a = run_ablation(&cfg, 1).unwrap().to_json().unwrap();
    let b = run_ablation(&cfg, 4).unwrap().to_json().unwrap();
    verdict(
        9,
        "determinism",
        a.as_bytes() == b.as_bytes(),
        &format!("{} report bytes, 1 vs 4 workers", a.len()),
        t0,
    );
}

/// Two-sided p-value by Simpson integration of the standard normal density
/// over [0, |z|]: p = 1 − 2∫₀^|z| φ.
fn quadrature_p(z: f64) -> f64 {
    let z = z.abs();
    if z == 0.0 {
        return 1.0;
    }
    let n = 20_000;
    let h = z / n as f64;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = phi(0.0) + phi(z);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * phi(i as f64 * h);
    }
    (1.0 - 2.0 * s * h / 3.0).max(0.0)
}

#[test]
fn z_test_oracle() {
    let t0 = Instant::now();
    let equal = z_test(24, 24, 48).unwrap();
    let strong = z_test(40, 11, 48).unwrap();
    let mut pass = equal.z == 0.0 && equal.p == 1.0 && strong.p < 0.001;
    let mut worst = 0.0f64;
    for (a, b, n) in [(40, 11, 48), (30, 20, 48), (26, 22, 48), (100, 80, 240), (5, 0, 30), (12, 19, 60)] {
        let t = z_test(a, b, n).unwrap();
        let diff = (t.p - quadrature_p(t.z)).abs();
        worst = worst.max(diff);
        pass &= diff < 1e-9;
        pass &= (standard_normal_sf(t.z.abs()) * 2.0 - t.p).abs() < 1e-15;
    }
    verdict(
        10,
        "z-test oracle",
        pass,
        &format!("(40,11,48) z={:.3} p={:.2e}; max |p − quadrature| {worst:.1e}", strong.z, strong.p),
        t0,
    );
}
