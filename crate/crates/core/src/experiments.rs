//! Paired BC vs BC+CCIL ablations over data size, Lipschitz cap and label
//! rejection quantile, with two-proportion z-tests and report emission.
//!
//! Within a replicate, BC and BC+CCIL see byte-identical demonstrations, use
//! the same policy initialization seed and face the same evaluation noise, so
//! the only difference between the two agents is the accepted label set.
//!
//! Report directory layout written by [`emit_report`]:
//!
//! ```text
//! report.json                  full machine-readable report
//! cells.csv                    one row per (data size, cap, quantile) cell
//! lipschitz.csv                coefficient summary per (data size, cap, replicate)
//! cdf/label_cdf_<tag>.csv      bound,cumulative
//! hist/lipschitz_<tag>.csv     bin_lo,bin_hi,count
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::TrajectoryDataset;
use crate::dynamics::{lipschitz_distribution, train_dynamics, DynamicsConfig, DynamicsModel};
use crate::envs::{collect, evaluate, make_env, Env, Evaluation};
use crate::error::{Error, Result};
use crate::labeler::{filter_labels, gen_labels, label_error_cdf, CorrectiveLabel, FilterConfig};
use crate::nn::SpectralConstraint;
use crate::policy::{train_policy, AugmentedDataset, PolicyConfig, PolicyModel};
use crate::seed::{derive_seed, sha256_hex};
use crate::stats::{significance_stars, z_test, DistributionSummary};

/// Lipschitz cap of a grid cell; `None` is unbounded (written as `"inf"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cap(pub Option<f64>);

impl Cap {
    pub const UNBOUNDED: Cap = Cap(None);

    pub fn constraint(&self) -> SpectralConstraint {
        match self.0 {
            Some(k) => SpectralConstraint::bounded(k),
            None => SpectralConstraint::unbounded(),
        }
    }
}

impl fmt::Display for Cap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(k) => write!(f, "{k}"),
            None => f.write_str("inf"),
        }
    }
}

impl Serialize for Cap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(k) => s.serialize_f64(k),
            None => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Cap {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
            Null(()),
        }
        match Raw::deserialize(d)? {
            Raw::Num(k) if k.is_finite() && k > 0.0 => Ok(Cap(Some(k))),
            Raw::Num(k) => Err(serde::de::Error::custom(format!("cap must be positive, got {k}"))),
            Raw::Text(t) if matches!(t.as_str(), "inf" | "unbounded" | "none") => Ok(Cap(None)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unknown cap '{t}'"))),
            Raw::Null(()) => Ok(Cap(None)),
        }
    }
}

fn default_noise() -> f64 {
    0.01
}

/// Everything that determines an ablation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub env: String,
    pub data_sizes: Vec<usize>,
    pub quantiles: Vec<f64>,
    pub caps: Vec<Cap>,
    /// Evaluation rollouts per agent per replicate.
    pub trials: usize,
    /// Replicate seeds; each replicate draws fresh demonstrations.
    pub replicates: Vec<u64>,
    /// Root of every sub-seed. The `ablate` command overrides it with `--seed`.
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_noise")]
    pub noise_scale: f64,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
}

impl AblationConfig {
    /// Desk-scale default grid: caps × quantiles at a low and a high data size.
    /// The policy is narrower than [`PolicyConfig::default`]; at 5 wallgrasp
    /// demonstrations the wider network memorizes the few expert states.
    pub fn default_grid(env: &str, master_seed: u64) -> Self {
        let policy = PolicyConfig {
            hidden: vec![32, 32],
            ..PolicyConfig::default()
        };
        Self {
            env: env.to_string(),
            data_sizes: vec![5, 100],
            quantiles: default_quantiles(),
            caps: vec![Cap(Some(1.0)), Cap(Some(4.0)), Cap::UNBOUNDED],
            trials: 48,
            replicates: (0..5).collect(),
            master_seed,
            noise_scale: default_noise(),
            dynamics: DynamicsConfig::default(),
            policy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        make_env(&self.env)?;
        if self.data_sizes.is_empty() || self.quantiles.is_empty() || self.caps.is_empty() || self.replicates.is_empty() {
            return Err(Error::Config("data_sizes, quantiles, caps and replicates must be non-empty".into()));
        }
        if self.data_sizes.contains(&0) {
            return Err(Error::Config("data sizes must be positive".into()));
        }
        if let Some(q) = self.quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            return Err(Error::Config(format!("quantile {q} outside [0, 1]")));
        }
        if self.trials < 30 {
            return Err(Error::Config(format!(
                "at least 30 trials per agent are needed for the z-test, got {}",
                self.trials
            )));
        }
        if !(self.noise_scale >= 0.0) {
            return Err(Error::Config("noise scale must be non-negative".into()));
        }
        let mut reps = self.replicates.clone();
        reps.sort_unstable();
        if reps.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("replicate seeds must be distinct".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        sha256_hex(text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            location: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

pub fn default_quantiles() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.8, 1.0]
}

/// Seeds for each pipeline stage of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub collect: u64,
    pub dynamics: u64,
    pub policy: u64,
    pub evaluate: u64,
}

impl StageSeeds {
    /// Stage seeds for `(env, n_traj, replicate)` and cap `K`. Only the
    /// dynamics seed depends on the cap; nothing depends on the quantile.
    pub fn derive(master: u64, env: &str, n_traj: usize, cap: Cap, replicate: u64) -> Self {
        let base = format!("{env}|n={n_traj}|rep={replicate}");
        Self {
            collect: derive_seed(master, &format!("{base}|collect")),
            dynamics: derive_seed(master, &format!("{base}|K={cap}|dynamics")),
            policy: derive_seed(master, &format!("{base}|policy")),
            evaluate: derive_seed(master, &format!("{base}|evaluate")),
        }
    }
}

/// Paired success counts of one replicate of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub bc_successes: usize,
    pub ccil_successes: usize,
    pub trials: usize,
}

fn policy_for(config: &PolicyConfig, seed: u64) -> PolicyConfig {
    let mut cfg = config.clone();
    cfg.train.seed = seed;
    cfg
}

fn dynamics_for(config: &DynamicsConfig, seed: u64) -> DynamicsConfig {
    let mut cfg = config.clone();
    cfg.train.seed = seed;
    cfg
}

/// Accepted labels for quantile `q`.
pub fn accepted_labels(labels: &[CorrectiveLabel], q: f64) -> Result<Vec<CorrectiveLabel>> {
    if labels.is_empty() {
        return Ok(Vec::new());
    }
    Ok(filter_labels(labels, FilterConfig::Quantile(q))?.accepted)
}

/// One replicate of one cell, end to end: collect → train dynamics → generate
/// and filter labels → train BC and BC+CCIL → evaluate both.
pub fn run_cell(env: &Env, n_traj: usize, cap: Cap, q: f64, config: &AblationConfig, replicate: u64) -> Result<CellCounts> {
    let ctx = format!("cell n={n_traj} K={cap} q={q} rep={replicate}");
    let seeds = StageSeeds::derive(config.master_seed, &config.env, n_traj, cap, replicate);
    let run = || -> Result<CellCounts> {
        let data = collect(env, n_traj, seeds.collect)?;
        let model = train_dynamics(&data, &cap.constraint(), &dynamics_for(&config.dynamics, seeds.dynamics))?;
        let labels = gen_labels(&model, &data)?;
        let accepted = accepted_labels(&labels, q)?;
        let policy_cfg = policy_for(&config.policy, seeds.policy);
        let bc = train_policy(&AugmentedDataset::expert_only(&data), &policy_cfg)?;
        let ccil = train_policy(&AugmentedDataset::with_labels(&data, &accepted), &policy_cfg)?;
        let bc_eval = evaluate(env, &bc, config.trials, config.noise_scale, seeds.evaluate)?;
        let ccil_eval = evaluate(env, &ccil, config.trials, config.noise_scale, seeds.evaluate)?;
        Ok(CellCounts {
            bc_successes: bc_eval.successes,
            ccil_successes: ccil_eval.successes,
            trials: config.trials,
        })
    };
    run().map_err(|e| e.context(&ctx))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub n_traj: usize,
    pub cap: Cap,
    pub quantile: f64,
    pub bc_successes: usize,
    pub ccil_successes: usize,
    /// Pooled trials per agent across replicates.
    pub trials: usize,
    pub bc_rate: f64,
    pub ccil_rate: f64,
    /// z statistic of CCIL against BC (positive when CCIL succeeds more).
    pub z: f64,
    pub p: f64,
    pub significance: String,
    /// Mean number of accepted labels per replicate.
    pub mean_accepted_labels: f64,
    pub per_replicate: Vec<CellCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub n_traj: usize,
    pub cap: Cap,
    pub replicate: u64,
    pub eps_train: f64,
    pub eps_max: f64,
    pub lipschitz: DistributionSummary,
    pub label_bounds: DistributionSummary,
    /// `(q, bound)` pairs at q = 0, 0.05, …, 1.
    pub label_bound_quantiles: Vec<(f64, f64)>,
    pub label_cdf: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub replicates: Vec<u64>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub provenance: Provenance,
    pub config: AblationConfig,
    pub initial_conditions: Vec<Vec<f64>>,
    pub cells: Vec<CellReport>,
    pub continuity: Vec<ContinuityReport>,
    pub notes: Vec<String>,
}

impl AblationReport {
    pub fn cell(&self, n_traj: usize, cap: Cap, quantile: f64) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.n_traj == n_traj && c.cap == cap && c.quantile == quantile)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            location: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const INDEPENDENCE_NOTE: &str = "z-tests treat every rollout as an independent trial, although trials \
share fixed initial conditions (each grid condition is repeated) and replicate-level demonstrations";

/// Per-(data size, replicate) artifacts shared by all caps and quantiles.
struct ReplicateData {
    data: TrajectoryDataset,
    bc: Evaluation,
    policy_seed: u64,
    eval_seed: u64,
}

struct ModelData {
    model: DynamicsModel,
    labels: Vec<CorrectiveLabel>,
}

fn install_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs the full grid. Work is shared across cells where the pairing allows
/// it (demonstrations and the BC agent per replicate, the dynamics model per
/// cap), so results equal running [`run_cell`] for every combination.
/// `jobs` sets the worker count; the report does not depend on it.
pub fn run_ablation(config: &AblationConfig, jobs: usize) -> Result<AblationReport> {
    config.validate()?;
    let env = make_env(&config.env)?;
    let pool = install_pool(jobs)?;
    pool.install(|| run_grid(config, &env))
}

fn run_grid(config: &AblationConfig, env: &Env) -> Result<AblationReport> {
    // (n_traj, replicate)
    let rep_keys: Vec<(usize, u64)> = config
        .data_sizes
        .iter()
        .flat_map(|&n| config.replicates.iter().map(move |&r| (n, r)))
        .collect();
    let reps: Vec<ReplicateData> = rep_keys
        .par_iter()
        .map(|&(n, r)| {
            let seeds = StageSeeds::derive(config.master_seed, &config.env, n, Cap::UNBOUNDED, r);
            let data = collect(env, n, seeds.collect)?;
            let bc_policy = train_policy(&AugmentedDataset::expert_only(&data), &policy_for(&config.policy, seeds.policy))?;
            let bc = evaluate(env, &bc_policy, config.trials, config.noise_scale, seeds.evaluate)?;
            Ok(ReplicateData {
                data,
                bc,
                policy_seed: seeds.policy,
                eval_seed: seeds.evaluate,
            })
        })
        .collect::<Result<_>>()?;

    // (rep index, cap index)
    let model_keys: Vec<(usize, usize)> = (0..reps.len())
        .flat_map(|i| (0..config.caps.len()).map(move |c| (i, c)))
        .collect();
    let models: Vec<ModelData> = model_keys
        .par_iter()
        .map(|&(i, c)| {
            let (n, r) = rep_keys[i];
            let cap = config.caps[c];
            let seeds = StageSeeds::derive(config.master_seed, &config.env, n, cap, r);
            let model = train_dynamics(&reps[i].data, &cap.constraint(), &dynamics_for(&config.dynamics, seeds.dynamics))
                .map_err(|e| e.context(format!("n={n} K={cap} rep={r}")))?;
            let labels = gen_labels(&model, &reps[i].data)?;
            Ok(ModelData { model, labels })
        })
        .collect::<Result<_>>()?;

    // (model index, quantile index) -> CCIL evaluation
    let ccil_keys: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..config.quantiles.len()).map(move |q| (m, q)))
        .collect();
    let ccil: Vec<(usize, usize)> = ccil_keys
        .par_iter()
        .map(|&(m, qi)| {
            let (i, _) = model_keys[m];
            let rep = &reps[i];
            let accepted = accepted_labels(&models[m].labels, config.quantiles[qi])?;
            if accepted.is_empty() {
                return Ok((rep.bc.successes, 0));
            }
            let policy: PolicyModel = train_policy(
                &AugmentedDataset::with_labels(&rep.data, &accepted),
                &policy_for(&config.policy, rep.policy_seed),
            )?;
            let ev = evaluate(env, &policy, config.trials, config.noise_scale, rep.eval_seed)?;
            Ok((ev.successes, accepted.len()))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for &n in &config.data_sizes {
        for (c, &cap) in config.caps.iter().enumerate() {
            for (qi, &q) in config.quantiles.iter().enumerate() {
                let mut per_replicate = Vec::new();
                let mut accepted_total = 0usize;
                for (i, &(rn, _)) in rep_keys.iter().enumerate() {
                    if rn != n {
                        continue;
                    }
                    let m = i * config.caps.len() + c;
                    let (ccil_successes, accepted) = ccil[m * config.quantiles.len() + qi];
                    accepted_total += accepted;
                    per_replicate.push(CellCounts {
                        bc_successes: reps[i].bc.successes,
                        ccil_successes,
                        trials: config.trials,
                    });
                }
                cells.push(summarize_cell(n, cap, q, per_replicate, accepted_total)?);
            }
        }
    }

    let continuity = model_keys
        .par_iter()
        .enumerate()
        .map(|(m, &(i, c))| {
            let (n, r) = rep_keys[i];
            continuity_report(n, config.caps[c], r, &models[m].model, &models[m].labels, &reps[i].data)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(AblationReport {
        provenance: Provenance {
            config_hash: config.hash(),
            master_seed: config.master_seed,
            replicates: config.replicates.clone(),
            version: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        },
        config: config.clone(),
        initial_conditions: crate::envs::Environment::initial_grid(env),
        cells,
        continuity,
        notes: vec![INDEPENDENCE_NOTE.to_string()],
    })
}

fn summarize_cell(n_traj: usize, cap: Cap, quantile: f64, per_replicate: Vec<CellCounts>, accepted_total: usize) -> Result<CellReport> {
    let bc: usize = per_replicate.iter().map(|c| c.bc_successes).sum();
    let ccil: usize = per_replicate.iter().map(|c| c.ccil_successes).sum();
    let trials: usize = per_replicate.iter().map(|c| c.trials).sum();
    let test = z_test(ccil, bc, trials)?;
    Ok(CellReport {
        n_traj,
        cap,
        quantile,
        bc_successes: bc,
        ccil_successes: ccil,
        trials,
        bc_rate: bc as f64 / trials as f64,
        ccil_rate: ccil as f64 / trials as f64,
        z: test.z,
        p: test.p,
        significance: significance_stars(test.p).to_string(),
        mean_accepted_labels: accepted_total as f64 / per_replicate.len().max(1) as f64,
        per_replicate,
    })
}

/// Continuity diagnostics of one trained dynamics model.
pub fn continuity_report(
    n_traj: usize,
    cap: Cap,
    replicate: u64,
    model: &DynamicsModel,
    labels: &[CorrectiveLabel],
    data: &TrajectoryDataset,
) -> Result<ContinuityReport> {
    let lipschitz = lipschitz_distribution(model, data)?;
    let cdf = label_error_cdf(labels)?;
    Ok(ContinuityReport {
        n_traj,
        cap,
        replicate,
        eps_train: model.eps_train,
        eps_max: model.eps_max,
        lipschitz: lipschitz.summary,
        label_bounds: DistributionSummary::from_values(&cdf.sorted_bounds, 30),
        label_bound_quantiles: cdf.quantiles.clone(),
        label_cdf: cdf.sorted_bounds.iter().copied().zip(cdf.cumulative.iter().copied()).collect(),
    })
}

fn continuity_tag(c: &ContinuityReport) -> String {
    format!("n{}_K{}_r{}", c.n_traj, c.cap, c.replicate)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_csv<F>(path: &Path, header: &[&str], mut rows: F) -> Result<()>
where
    F: FnMut(&mut csv::Writer<fs::File>) -> Result<()>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{other:?}")),
    })?;
    w.write_record(header)?;
    rows(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the report directory and returns the files written.
pub fn emit_report(report: &AblationReport, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    let mut json = report.to_json()?;
    json.push('\n');
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    written.push(json_path);

    let cells_path = dir.join("cells.csv");
    write_csv(
        &cells_path,
        &[
            "env", "n_traj", "cap", "quantile", "trials", "bc_successes", "ccil_successes", "bc_rate", "ccil_rate", "z",
            "p", "significance", "mean_accepted_labels",
        ],
        |w| {
            for c in &report.cells {
                w.write_record([
                    report.config.env.clone(),
                    c.n_traj.to_string(),
                    c.cap.to_string(),
                    c.quantile.to_string(),
                    c.trials.to_string(),
                    c.bc_successes.to_string(),
                    c.ccil_successes.to_string(),
                    c.bc_rate.to_string(),
                    c.ccil_rate.to_string(),
                    c.z.to_string(),
                    c.p.to_string(),
                    c.significance.clone(),
                    c.mean_accepted_labels.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    written.push(cells_path);

    let lip_path = dir.join("lipschitz.csv");
    write_csv(
        &lip_path,
        &["n_traj", "cap", "replicate", "eps_train", "eps_max", "mean", "q025", "q50", "q975", "label_bound_mean", "label_bound_q50"],
        |w| {
            for c in &report.continuity {
                w.write_record([
                    c.n_traj.to_string(),
                    c.cap.to_string(),
                    c.replicate.to_string(),
                    c.eps_train.to_string(),
                    c.eps_max.to_string(),
                    c.lipschitz.mean.to_string(),
                    c.lipschitz.q025.to_string(),
                    c.lipschitz.q50.to_string(),
                    c.lipschitz.q975.to_string(),
                    c.label_bounds.mean.to_string(),
                    c.label_bounds.q50.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    written.push(lip_path);

    let cdf_dir = dir.join("cdf");
    let hist_dir = dir.join("hist");
    create_dir(&cdf_dir)?;
    create_dir(&hist_dir)?;
    for c in &report.continuity {
        let tag = continuity_tag(c);
        let cdf_path = cdf_dir.join(format!("label_cdf_{tag}.csv"));
        write_csv(&cdf_path, &["bound", "cumulative"], |w| {
            for (b, p) in &c.label_cdf {
                w.write_record([b.to_string(), p.to_string()])?;
            }
            Ok(())
        })?;
        written.push(cdf_path);

        let hist_path = hist_dir.join(format!("lipschitz_{tag}.csv"));
        let h = &c.lipschitz.histogram;
        write_csv(&hist_path, &["bin_lo", "bin_hi", "count"], |w| {
            for (i, count) in h.counts.iter().enumerate() {
                w.write_record([h.edges[i].to_string(), h.edges[i + 1].to_string(), count.to_string()])?;
            }
            Ok(())
        })?;
        written.push(hist_path);
    }
    Ok(written)
}
