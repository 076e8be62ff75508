use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};

use ccil_core::envs::rollout::Expert;
use ccil_core::experiments::{emit_report, run_ablation, AblationConfig, AblationReport};
use ccil_core::labeler::{read_labels, write_labels};
use ccil_core::model_io;
use ccil_core::stats::DistributionSummary;
use ccil_core::{
    collect, evaluate, filter_labels, gen_labels, label_error_cdf, lipschitz_distribution, make_env, train_dynamics,
    train_policy, AugmentedDataset, DynamicsConfig, DynamicsModel, FilterConfig, PolicyConfig, PolicyModel,
    SpectralConstraint, TrajectoryDataset,
};

/// Continuity-based corrective labels for behavior cloning.
#[derive(Parser)]
#[command(name = "ccil", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out the scripted expert and write successful demonstrations.
    Collect(CollectArgs),
    /// Fit a residual dynamics model under a Lipschitz cap.
    TrainDynamics(TrainDynamicsArgs),
    /// Write local Lipschitz and label-error distributions of a dynamics model.
    AnalyzeContinuity(AnalyzeArgs),
    /// Generate corrective labels and mark the accepted ones.
    GenLabels(GenLabelsArgs),
    /// Train a behavior-cloning policy, optionally augmented with labels.
    TrainPolicy(TrainPolicyArgs),
    /// Roll out a policy (or the expert) from the fixed initial-condition grid.
    Evaluate(EvaluateArgs),
    /// Run a paired BC vs BC+CCIL ablation grid.
    Ablate(AblateArgs),
    /// Re-emit tables from an existing report.json and print a summary.
    Report(ReportArgs),
}

#[derive(Args)]
struct CollectArgs {
    #[arg(long)]
    env: String,
    /// Number of successful trajectories.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainDynamicsArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Network Lipschitz cap in normalized coordinates; omit for unbounded.
    #[arg(long)]
    cap: Option<f64>,
    /// JSON dynamics config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30)]
    bins: usize,
}

#[derive(Args)]
#[command(group(ArgGroup::new("rule").required(true).args(["quantile", "threshold"])))]
struct GenLabelsArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Accept the lowest-bound fraction q of labels.
    #[arg(long)]
    quantile: Option<f64>,
    /// Accept labels whose error bound is below this value.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainPolicyArgs {
    #[arg(long)]
    data: PathBuf,
    /// Label file; only accepted labels are used.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    /// JSON policy config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Loss weight of generated samples relative to expert samples.
    #[arg(long, default_value_t = 1.0)]
    label_weight: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(ArgGroup::new("agent").required(true).args(["policy", "expert"])))]
struct EvaluateArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Evaluate the scripted expert instead of a policy.
    #[arg(long)]
    expert: bool,
    #[arg(long, default_value_t = 48)]
    trials: usize,
    /// Standard deviation of the observation noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    seed: u64,
    /// Optional JSON file with every rollout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; replaces the config's `master_seed`.
    #[arg(long)]
    seed: u64,
    /// Worker threads; the report does not depend on this.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json written by `ablate`.
    #[arg(long)]
    input: PathBuf,
    /// Directory for re-emitted tables; omit to only print the summary.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Collect(a) => cmd_collect(a),
        Command::TrainDynamics(a) => cmd_train_dynamics(a),
        Command::AnalyzeContinuity(a) => cmd_analyze(a),
        Command::GenLabels(a) => cmd_gen_labels(a),
        Command::TrainPolicy(a) => cmd_train_policy(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} file not found: {}", path.display());
    }
    Ok(())
}

/// Refuses outputs that would overwrite one of the inputs.
fn ensure_distinct(out: &Path, inputs: &[&Path]) -> Result<()> {
    let Ok(out) = out.canonicalize() else {
        return Ok(());
    };
    for input in inputs {
        if input.canonicalize().is_ok_and(|p| p == out) {
            bail!("output {} would overwrite an input file", out.display());
        }
    }
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    require_file(path, what)?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid {what} {}", path.display()))
}

fn read_data(path: &Path) -> Result<TrajectoryDataset> {
    require_file(path, "dataset")?;
    let data = TrajectoryDataset::read_jsonl(path)?;
    if data.is_empty() {
        bail!("dataset {} contains no transitions", path.display());
    }
    Ok(data)
}

fn cmd_collect(a: CollectArgs) -> Result<()> {
    let env = make_env(&a.env)?;
    if a.n == 0 {
        bail!("--n must be at least 1");
    }
    let data = collect(&env, a.n, a.seed)?;
    data.write_jsonl(&a.out)?;
    println!(
        "wrote {} trajectories ({} transitions) to {}",
        data.num_trajectories(),
        data.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_train_dynamics(a: TrainDynamicsArgs) -> Result<()> {
    let data = read_data(&a.data)?;
    ensure_distinct(&a.out, &[&a.data])?;
    let mut cfg: DynamicsConfig = match &a.config {
        Some(p) => read_json(p, "dynamics config")?,
        None => DynamicsConfig::default(),
    };
    cfg.train.seed = a.seed;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(h) = a.hidden {
        cfg.hidden = h;
    }
    let constraint = match a.cap {
        Some(k) if k > 0.0 && k.is_finite() => SpectralConstraint::bounded(k),
        Some(k) => bail!("--cap must be a positive finite number, got {k}"),
        None => SpectralConstraint::unbounded(),
    };
    let model = train_dynamics(&data, &constraint, &cfg)?;
    model_io::save(&model, &a.out)?;
    println!(
        "trained dynamics on {} transitions: eps_train {:.6}, eps_max {:.6}; wrote {}",
        data.len(),
        model.eps_train,
        model.eps_max,
        a.out.display()
    );
    Ok(())
}

fn load_dynamics(path: &Path) -> Result<DynamicsModel> {
    require_file(path, "model")?;
    Ok(model_io::load(path)?)
}

fn check_dims(model: &DynamicsModel, data: &TrajectoryDataset) -> Result<()> {
    if let Some((ds, da)) = data.dims() {
        if (ds, da) != (model.state_dim, model.action_dim) {
            bail!(
                "dataset has state/action dims ({ds}, {da}) but the model expects ({}, {})",
                model.state_dim,
                model.action_dim
            );
        }
    }
    Ok(())
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<()> {
    let model = load_dynamics(&a.model)?;
    let data = read_data(&a.data)?;
    check_dims(&model, &data)?;
    if a.bins == 0 {
        bail!("--bins must be at least 1");
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let lip = lipschitz_distribution(&model, &data)?;
    let labels = gen_labels(&model, &data)?;
    let cdf = label_error_cdf(&labels)?;

    let contact: Vec<f64> = labels.iter().filter(|l| l.contact).map(|l| l.local_lipschitz).collect();
    let free: Vec<f64> = labels.iter().filter(|l| !l.contact).map(|l| l.local_lipschitz).collect();
    let summary = serde_json::json!({
        "eps_train": model.eps_train,
        "eps_max": model.eps_max,
        "lipschitz": DistributionSummary::from_values(&lip.values, a.bins),
        "lipschitz_contact": (!contact.is_empty()).then(|| DistributionSummary::from_values(&contact, a.bins)),
        "lipschitz_free": (!free.is_empty()).then(|| DistributionSummary::from_values(&free, a.bins)),
        "label_bound_quantiles": cdf.quantiles,
    });
    let summary_path = a.out.join("continuity.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", summary_path.display()))?;

    let mut w = csv::Writer::from_path(a.out.join("lipschitz.csv"))?;
    w.write_record(["traj", "t", "contact", "lipschitz", "error_bound"])?;
    for l in &labels {
        w.write_record([
            l.source.0.to_string(),
            l.source.1.to_string(),
            l.contact.to_string(),
            l.local_lipschitz.to_string(),
            l.error_bound.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(a.out.join("label_cdf.csv"))?;
    w.write_record(["bound", "cumulative"])?;
    for (b, p) in cdf.sorted_bounds.iter().zip(&cdf.cumulative) {
        w.write_record([b.to_string(), p.to_string()])?;
    }
    w.flush()?;

    let h = DistributionSummary::from_values(&lip.values, a.bins).histogram;
    let mut w = csv::Writer::from_path(a.out.join("lipschitz_hist.csv"))?;
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for (i, c) in h.counts.iter().enumerate() {
        w.write_record([h.edges[i].to_string(), h.edges[i + 1].to_string(), c.to_string()])?;
    }
    w.flush()?;

    println!(
        "local Lipschitz over {} transitions: mean {:.4}, median {:.4}; wrote {}",
        lip.values.len(),
        lip.summary.mean,
        lip.summary.q50,
        a.out.display()
    );
    Ok(())
}

fn cmd_gen_labels(a: GenLabelsArgs) -> Result<()> {
    let rule = match (a.quantile, a.threshold) {
        (Some(q), None) => FilterConfig::Quantile(q),
        (None, Some(s)) => FilterConfig::Absolute(s),
        _ => unreachable!("clap enforces exactly one rule"),
    };
    let model = load_dynamics(&a.model)?;
    let data = read_data(&a.data)?;
    check_dims(&model, &data)?;
    ensure_distinct(&a.out, &[&a.model, &a.data])?;
    let labels = gen_labels(&model, &data)?;
    let outcome = filter_labels(&labels, rule)?;
    let mut all: Vec<_> = outcome.accepted.iter().chain(&outcome.rejected).cloned().collect();
    all.sort_by_key(|l| l.source);
    write_labels(&all, &a.out)?;
    println!(
        "accepted {} of {} labels (threshold {}); wrote {}",
        outcome.accepted.len(),
        all.len(),
        outcome.threshold,
        a.out.display()
    );
    Ok(())
}

fn cmd_train_policy(a: TrainPolicyArgs) -> Result<()> {
    let data = read_data(&a.data)?;
    let mut inputs: Vec<&Path> = vec![&a.data];
    let mut dataset = match &a.labels {
        Some(p) => {
            require_file(p, "labels")?;
            inputs.push(p);
            let labels = read_labels(p)?;
            AugmentedDataset::with_labels(&data, &labels)
        }
        None => AugmentedDataset::expert_only(&data),
    };
    ensure_distinct(&a.out, &inputs)?;
    if !(a.label_weight >= 0.0 && a.label_weight.is_finite()) {
        bail!("--label-weight must be a non-negative number");
    }
    dataset.generated_weight = a.label_weight;
    let mut cfg: PolicyConfig = match &a.config {
        Some(p) => read_json(p, "policy config")?,
        None => PolicyConfig::default(),
    };
    cfg.train.seed = a.seed;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        cfg.train.learning_rate = lr;
    }
    if let Some(h) = a.hidden {
        cfg.hidden = h;
    }
    let policy = train_policy(&dataset, &cfg)?;
    model_io::save(&policy, &a.out)?;
    println!(
        "trained policy on {} expert and {} generated samples; wrote {}",
        dataset.expert.len(),
        dataset.generated.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let env = make_env(&a.env)?;
    if a.trials == 0 {
        bail!("--trials must be at least 1");
    }
    let result = match &a.policy {
        Some(p) => {
            require_file(p, "policy")?;
            let policy: PolicyModel = model_io::load(p)?;
            if policy.state_dim() != ccil_core::Environment::state_dim(&env) {
                bail!(
                    "policy expects {}-dimensional states but {} has {}",
                    policy.state_dim(),
                    a.env,
                    ccil_core::Environment::state_dim(&env)
                );
            }
            evaluate(&env, &policy, a.trials, a.noise, a.seed)?
        }
        None => evaluate(&env, &Expert(&env), a.trials, a.noise, a.seed)?,
    };
    if let Some(out) = &a.out {
        fs::write(out, serde_json::to_string_pretty(&result)? + "\n").with_context(|| format!("writing {}", out.display()))?;
    }
    println!(
        "{} / {} successes (rate {:.3})",
        result.successes, result.trials, result.success_rate
    );
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> Result<()> {
    let mut config: AblationConfig = read_json(&a.config, "ablation config")?;
    config.master_seed = a.seed;
    config.validate()?;
    if a.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let report = run_ablation(&config, a.jobs)?;
    emit_report(&report, &a.out)?;
    print_summary(&report);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    require_file(&a.input, "report")?;
    let report = AblationReport::load(&a.input)?;
    if let Some(out) = &a.out {
        if out.join("report.json").canonicalize().ok() == a.input.canonicalize().ok() {
            bail!("output directory {} holds the input report", out.display());
        }
        emit_report(&report, out)?;
    }
    print_summary(&report);
    Ok(())
}

fn print_summary(report: &AblationReport) {
    println!("{}  config {}", report.config.env, &report.provenance.config_hash[..12]);
    println!("{:>6} {:>6} {:>5} {:>9} {:>9} {:>7} {:>8}  sig", "n", "K", "q", "BC", "CCIL", "z", "p");
    for c in &report.cells {
        println!(
            "{:>6} {:>6} {:>5} {:>4}/{:<4} {:>4}/{:<4} {:>7.2} {:>8.4}  {}",
            c.n_traj, c.cap.to_string(), c.quantile, c.bc_successes, c.trials, c.ccil_successes, c.trials, c.z, c.p, c.significance
        );
    }
    for note in &report.notes {
        println!("note: {note}");
    }
}
