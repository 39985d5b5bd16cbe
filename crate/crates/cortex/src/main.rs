//! Command-line front end: run manifests through the harness, transfer
//! heuristic libraries between splits, and fold finished runs into
//! comparison tables.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cortex::aki::{load_library, save_library};
use cortex::backends::oracle::OracleHeuristicMerger;
use cortex::backends::remote::{remote_backend_set, RemoteConfig, RemoteCore};
use cortex::backends::BackendSet;
use cortex::harness::{
    load_manifest, load_run, run_rounds, save_run, Mode, RunSummary, Stores, SuiteManifest,
};
use cortex::lpm::{load_bank, save_bank};
use cortex::{load_config, CortexConfig};

/// Extra imagination depth for the open-loop ablation: plans are imagined
/// and committed at triple the closed-loop horizon, without replanning in
/// between.
const OPEN_LOOP_FACTOR: usize = 3;

#[derive(Parser)]
#[command(name = "cortex", version, about = "Self-evolving navigation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite manifest for one or more rounds under an ablation mode.
    Run(RunArgs),
    /// Run a suite with a heuristic library imported from another run.
    Transfer(TransferArgs),
    /// Fold finished run directories into comparison tables.
    Report(ReportArgs),
}

/// One override flag per config field; unset flags keep the file (or
/// default) value.
#[derive(Args, Default)]
struct ConfigArgs {
    /// Config file (TOML) to start from instead of the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n_candidates: Option<usize>,
    #[arg(long)]
    imagination_horizon: Option<usize>,
    #[arg(long)]
    srm_window: Option<usize>,
    #[arg(long)]
    lpm_horizon: Option<usize>,
    #[arg(long)]
    lpm_threshold: Option<f64>,
    #[arg(long)]
    sim_threshold: Option<f64>,
    #[arg(long)]
    confidence_floor: Option<f64>,
    #[arg(long)]
    min_support: Option<usize>,
    #[arg(long)]
    max_episodes_per_goal: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// World-model imagination noise ε in [0, 1].
    #[arg(long, alias = "noise")]
    world_model_noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<CortexConfig, String> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| format!("{}: {e}", path.display()))?;
                load_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => CortexConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { config.$field = v; })*
            };
        }
        apply!(
            n_candidates,
            imagination_horizon,
            srm_window,
            lpm_horizon,
            lpm_threshold,
            sim_threshold,
            confidence_floor,
            min_support,
            max_episodes_per_goal,
            max_steps,
            world_model_noise,
            seed
        );
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Suite manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Ablation mode: basic|srm|lpm|srm-lpm|static|adaptive.
    #[arg(long, default_value = "basic", value_parser = parse_mode)]
    mode: Mode,
    /// Rounds to run; memory carries across rounds.
    #[arg(long, default_value_t = 1)]
    rounds: u32,
    /// Episode bank directory to start from.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Heuristic library directory to start from.
    #[arg(long)]
    library: Option<PathBuf>,
    /// Cognition backend family.
    #[arg(long, default_value = "oracle", value_parser = ["oracle", "remote"])]
    backend: String,
    /// Report directory; learned stores land under `<out>/stores/`.
    #[arg(long)]
    out: PathBuf,
    /// Commit full-length imagined plans without replanning between
    /// cycles (the ablation against per-cycle replanning).
    #[arg(long)]
    open_loop: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct TransferArgs {
    /// Source heuristic library directory.
    #[arg(long)]
    from: PathBuf,
    /// Target suite manifest (TOML).
    #[arg(long)]
    manifest: PathBuf,
    /// Keep the imported library fixed instead of updating it online.
    #[arg(long)]
    freeze: bool,
    #[arg(long, default_value_t = 1)]
    rounds: u32,
    #[arg(long, default_value = "oracle", value_parser = ["oracle", "remote"])]
    backend: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Directories holding finished runs (each with a `run.json`), or
    /// parents thereof.
    #[arg(long, required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode `{s}`"))
}

fn build_backends(
    family: &str,
    config: &CortexConfig,
    plan_cap: usize,
) -> Result<(BackendSet, Option<std::sync::Arc<RemoteCore>>), String> {
    match family {
        "oracle" => Ok((BackendSet::oracle(config.world_model_noise, config.seed, plan_cap), None)),
        "remote" => {
            let remote = RemoteConfig::from_env()?;
            let core = RemoteCore::over_http(remote);
            Ok((remote_backend_set(&core, plan_cap), Some(core)))
        }
        other => Err(format!("unknown backend `{other}`")),
    }
}

fn load_stores(
    bank: Option<&Path>,
    library: Option<&Path>,
) -> Result<Stores, String> {
    let mut stores = Stores::empty();
    if let Some(dir) = bank {
        stores.bank = load_bank(dir).map_err(|e| e.to_string())?;
    }
    if let Some(dir) = library {
        let (lib, _) = load_library(dir, &OracleHeuristicMerger).map_err(|e| e.to_string())?;
        stores.library = lib;
    }
    Ok(stores)
}

fn save_stores(out: &Path, stores: &Stores, sim_threshold: f64) -> Result<(), String> {
    let root = out.join("stores");
    save_bank(&stores.bank, &root.join("bank")).map_err(|e| e.to_string())?;
    save_library(&stores.library, sim_threshold, &root.join("library"))
        .map_err(|e| e.to_string())
}

fn execute_suite(
    manifest_path: &Path,
    mode: Mode,
    rounds: u32,
    backend: &str,
    open_loop: bool,
    config_args: &ConfigArgs,
    initial: Stores,
    out: &Path,
) -> Result<RunSummary, String> {
    let mut config = config_args.resolve()?;
    if open_loop {
        config.imagination_horizon *= OPEN_LOOP_FACTOR;
    }
    // Proposed plans always fill the imagination window; replanning
    // cadence is then set entirely by the horizon.
    let plan_cap = config.imagination_horizon;
    let text = fs::read_to_string(manifest_path)
        .map_err(|e| format!("{}: {e}", manifest_path.display()))?;
    let manifest: SuiteManifest = load_manifest(&text).map_err(|e| e.to_string())?;
    let (backends, remote_core) = build_backends(backend, &config, plan_cap)?;

    let mut stores = initial;
    let results = run_rounds(&manifest, mode, rounds, &backends, &mut stores, &config)
        .map_err(|e| e.to_string())?;
    let summary = RunSummary::new(&manifest.name, mode, config.clone(), results);
    save_run(out, &summary).map_err(|e| e.to_string())?;
    if mode.learns() {
        save_stores(out, &stores, config.sim_threshold)?;
    }
    if let Some(core) = remote_core {
        core.flush_transcript(&out.join("transcript.jsonl")).map_err(|e| e.to_string())?;
    }
    Ok(summary)
}

fn print_summary(summary: &RunSummary) {
    println!("suite={} mode={} rounds={}", summary.suite, summary.mode.label(), summary.rounds.len());
    for r in &summary.rounds {
        let answer = r
            .metrics
            .answer_score
            .map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        println!(
            "round {}: episodes={} sr={:.4} spl={:.4} mean_traj={:.4} answer={} osc_failures={}",
            r.round,
            r.metrics.episodes,
            r.metrics.sr,
            r.metrics.spl,
            r.metrics.mean_traj,
            answer,
            r.oscillation_failures,
        );
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), String> {
    let stores = load_stores(args.bank.as_deref(), args.library.as_deref())?;
    let summary = execute_suite(
        &args.manifest,
        args.mode,
        args.rounds,
        &args.backend,
        args.open_loop,
        &args.config,
        stores,
        &args.out,
    )?;
    print_summary(&summary);
    Ok(())
}

fn cmd_transfer(args: &TransferArgs) -> Result<(), String> {
    let stores = load_stores(None, Some(&args.from))?;
    let mode = if args.freeze { Mode::StaticFull } else { Mode::AdaptiveFull };
    let summary = execute_suite(
        &args.manifest,
        mode,
        args.rounds,
        &args.backend,
        false,
        &args.config,
        stores,
        &args.out,
    )?;
    print_summary(&summary);
    Ok(())
}

/// Every directory under `roots` (roots included) holding a `run.json`.
fn discover_runs(roots: &[PathBuf]) -> Vec<PathBuf> {
    let mut found = Vec::new();
    for root in roots {
        if root.join("run.json").is_file() {
            found.push(root.clone());
            continue;
        }
        let Ok(entries) = fs::read_dir(root) else { continue };
        let mut children: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("run.json").is_file())
            .collect();
        children.sort();
        found.extend(children);
    }
    found
}

fn cmd_report(args: &ReportArgs) -> Result<(), String> {
    let dirs = discover_runs(&args.runs);
    if dirs.is_empty() {
        return Err("no run.json found under the given directories".to_string());
    }
    let mut summaries = Vec::new();
    for dir in &dirs {
        summaries.push((dir.clone(), load_run(dir).map_err(|e| e.to_string())?));
    }
    // Final-round comparison, one row per run, then the full curves.
    println!("suite\tmode\trounds\tsr\tspl\tmean_traj\tanswer_score\tdir");
    for (dir, s) in &summaries {
        let Some(m) = s.final_metrics() else { continue };
        let answer = m.answer_score.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        println!(
            "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
            s.suite,
            s.mode.label(),
            s.rounds.len(),
            m.sr,
            m.spl,
            m.mean_traj,
            answer,
            dir.display(),
        );
    }
    println!();
    println!("suite\tmode\tround\tsr\tspl\tmean_traj");
    for (_, s) in &summaries {
        for r in &s.rounds {
            println!(
                "{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
                s.suite,
                s.mode.label(),
                r.round,
                r.metrics.sr,
                r.metrics.spl,
                r.metrics.mean_traj,
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Transfer(args) => cmd_transfer(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}
