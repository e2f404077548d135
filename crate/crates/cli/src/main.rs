use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fedlab_core::baselines::toy_vote_vs_average;
use fedlab_core::data::{preprocess_users, read_dataset, synth_generate, write_dataset, SynthSpec};
use fedlab_core::harness::{
    emit_report, read_outcome, render_csv, run_experiment, threads_from_env, with_threads,
    DatasetSource, ExperimentOutcome, ExperimentSpec, Method,
};
use fedlab_core::model::gradient_check_suite;
use fedlab_core::write_atomic;

#[derive(Parser)]
#[command(name = "fedlab", version, about = "Federated learning laboratory for learner-state detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Apply the frame and user exclusion rules to a dataset directory.
    Preprocess(PreprocessArgs),
    /// Train one method with one seed at fixed learning rates.
    Train(RunArgs),
    /// Run the full protocol: grid search, every seed, every method.
    Experiment(RunArgs),
    /// Render report tables from a results directory.
    Report(ReportArgs),
    /// Compare soft voting with parameter averaging on single neurons.
    Toy(ToyArgs),
    /// Check model gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON file with generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the number of users.
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Dataset directory to read.
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (JSON). Flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; replaces the spec's dataset source.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Method: fedavg, fedadam, fedaws, fedprox, moon, turbosvm, centralized or bagging.
    #[arg(long)]
    algo: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    participation: Option<f64>,
    #[arg(long)]
    local_epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Fixes the client learning rate instead of searching for it.
    #[arg(long)]
    client_lr: Option<f64>,
    /// Fixes the server learning rate instead of searching for it.
    #[arg(long)]
    server_lr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding results.json.
    input: PathBuf,
    /// Where to write the tables; defaults to the input directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long, default_value_t = 100)]
    models: usize,
    #[arg(long, default_value_t = 0.49)]
    base: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Also write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    configs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let threads = threads_from_env()?;
    with_threads(threads, move || dispatch(cli.command))?
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Experiment(a) => experiment(a),
        Command::Report(a) => report(a),
        Command::Toy(a) => toy(a),
        Command::Gradcheck(a) => gradcheck(a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut spec: SynthSpec = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(n) = a.users {
        spec.n_users = n;
    }
    let users = synth_generate(&spec, a.seed)?;
    write_dataset(&a.out, &users)?;
    let samples: usize = users.iter().map(|u| u.len()).sum();
    println!("wrote {} users, {samples} samples to {}", users.len(), a.out.display());
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let users = read_dataset(&a.input)?;
    let (kept, stats) = preprocess_users(users);
    write_dataset(&a.out, &kept)?;
    let stats_json = pretty(&stats)?;
    write_atomic(&a.out.join("preprocess.json"), stats_json.as_bytes())?;
    print!("{stats_json}");
    Ok(())
}

fn build_spec(a: &RunArgs) -> Result<ExperimentSpec> {
    let mut spec = match &a.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::default(),
    };
    if let Some(d) = &a.data {
        spec.dataset = DatasetSource::Dir { path: d.clone() };
    }
    if let Some(m) = a.algo {
        spec.methods = vec![m];
    }
    if let Some(s) = a.seed {
        spec.seeds = vec![s];
    }
    let fed = &mut spec.federation;
    if let Some(r) = a.rounds {
        fed.rounds = r;
    }
    if let Some(p) = a.participation {
        fed.participation = p;
    }
    if let Some(e) = a.local_epochs {
        fed.local_epochs = e;
        spec.central.epochs = e;
    }
    if let Some(b) = a.batch {
        spec.federation.batch_size = b;
        spec.central.batch_size = b;
    }
    if let Some(lr) = a.client_lr {
        spec.federation.client_lr = lr;
        spec.grid.lr_grid = vec![lr];
    }
    if let Some(lr) = a.server_lr {
        spec.federation.server_lr = lr;
        spec.grid.server_lr_grid = vec![lr];
    }
    spec.output_dir = Some(a.out.clone());
    spec.validate()?;
    Ok(spec)
}

fn print_failures(outcome: &ExperimentOutcome) {
    for f in &outcome.failures {
        eprintln!("seed {} {} failed at {}: {}", f.seed, f.method, f.stage, f.error);
    }
}

fn train(a: RunArgs) -> Result<()> {
    let mut spec = build_spec(&a)?;
    spec.methods.truncate(1);
    spec.seeds.truncate(1);
    spec.grid.enabled = false;
    let outcome = run_experiment(&spec)?;
    print_failures(&outcome);
    let Some(record) = outcome.records.first() else {
        bail!("training produced no result");
    };
    print!("{}", pretty(record)?);
    Ok(())
}

fn experiment(a: RunArgs) -> Result<()> {
    let spec = build_spec(&a)?;
    let outcome = run_experiment(&spec)?;
    print_failures(&outcome);
    if outcome.records.is_empty() {
        bail!("every run failed");
    }
    let rows = emit_report(&outcome.records, &a.out)?;
    print!("{}", render_csv(&rows));
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let outcome = read_outcome(&a.input)?;
    let out = a.out.unwrap_or_else(|| a.input.clone());
    let rows = emit_report(&outcome.records, &out)?;
    print!("{}", render_csv(&rows));
    Ok(())
}

fn toy(a: ToyArgs) -> Result<()> {
    let r = toy_vote_vs_average(a.models, a.base, a.threshold)?;
    let text = pretty(&r)?;
    if let Some(p) = &a.out {
        write_atomic(p, text.as_bytes())?;
    }
    print!("{text}");
    println!(
        "soft vote: needs one learner to rise by {:.6} (feasible: {}), best reachable vote {:.6}",
        r.required_vote_increase, r.vote_increase_feasible, r.max_soft_vote
    );
    println!(
        "averaging: logit gap {:.6}, bias rise {:.6} flips the averaged model ({:.7} -> {:.7})",
        r.required_logit_increase, r.required_bias_increase, r.averaged_output_below, r.averaged_output_above
    );
    if r.soft_vote_flips || !r.averaged_flips {
        bail!("expected only the averaged model to cross the threshold");
    }
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> Result<()> {
    let checks = gradient_check_suite(a.configs, a.seed)?;
    let mut worst = 0.0f64;
    for (k, c) in checks.iter().enumerate() {
        let m = &c.config;
        println!(
            "{k:>3} arch={:?} T={} F={} H={} layers={} glass={} params={} max_rel_error={:.3e}",
            m.arch, m.seq_len, m.feat_dim, m.hidden, m.lstm_layers, m.glass_fusion, c.n_params, c.max_rel_error
        );
        worst = worst.max(c.max_rel_error);
    }
    if let Some(p) = &a.out {
        write_atomic(p, pretty(&checks)?.as_bytes())?;
    }
    println!("worst relative error {worst:.3e} (tolerance {:.1e})", a.tolerance);
    if worst > a.tolerance {
        bail!("gradient check failed");
    }
    Ok(())
}
