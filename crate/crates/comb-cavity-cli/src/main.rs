//! Command-line runner: parses a TOML experiment description, selects the
//! matching strategy from the registry, and executes it reproducibly.
//!
//! Exit codes: 0 on success, 1 for runtime failures, 2 for unusable
//! invocations or configs. Failures also emit a single machine-readable
//! `error kind=... exit=... message=...` record on stderr.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{load_config, CliError, ExperimentKind};
use output::RunContext;

#[derive(Parser)]
#[command(
    name = "comb-cavity",
    version,
    about = "Simulations of cold atoms coupled to a comb-pumped multimode cavity"
)]
struct Cli {
    /// Override the master seed from the config schedule.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread count; overrides COMB_CAVITY_THREADS. Defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate stochastic trajectory ensembles of the coupled dynamics.
    Dynamics(ConfigArg),
    /// Scan self-consistent stationary states over pump strength.
    Sweep(ConfigArg),
    /// Map ordering thresholds over cloud-size ratio and pump strength.
    Phasediagram(ConfigArg),
    /// Compare kinetic-energy relaxation across pump and mode-count grids.
    Cooling(ConfigArg),
    /// Synthesize the output pulse train and field profile of a run.
    Pulse(ConfigArg),
    /// Parse and validate a config, printing the resolved values.
    Validate(ConfigArg),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML experiment description.
    #[arg(long)]
    config: PathBuf,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            let code = err.exit_code();
            eprintln!(
                "error kind={} exit={code} message={:?}",
                err.kind_label(),
                err.to_string()
            );
            code
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    let (config_path, verb_kind) = match &cli.command {
        Command::Dynamics(a) => (&a.config, Some(ExperimentKind::Dynamics)),
        Command::Sweep(a) => (&a.config, Some(ExperimentKind::MeanFieldSweep)),
        Command::Phasediagram(a) => (&a.config, Some(ExperimentKind::PhaseDiagram)),
        Command::Cooling(a) => (&a.config, Some(ExperimentKind::Cooling)),
        Command::Pulse(a) => (&a.config, Some(ExperimentKind::Pulse)),
        Command::Validate(a) => (&a.config, None),
    };

    let mut cfg = load_config(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }

    let Some(verb_kind) = verb_kind else {
        for line in cfg.resolved_lines() {
            println!("{line}");
        }
        println!("config ok: kind={}", cfg.kind.as_str());
        return Ok(());
    };
    if cfg.kind != verb_kind {
        return Err(CliError::Config(format!(
            "config kind {} does not match the {} command",
            cfg.kind.as_str(),
            verb_kind.as_str()
        )));
    }

    std::fs::create_dir_all(&cfg.out_dir)?;
    let ctx = RunContext {
        version: format!("comb-cavity {}", env!("CARGO_PKG_VERSION")),
    };
    let experiment = experiments::find(cfg.kind.as_str()).expect("every kind is registered");
    experiment.run(&cfg, &ctx)
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let from_env = std::env::var("COMB_CAVITY_THREADS")
        .ok()
        .map(|v| {
            v.parse::<usize>().map_err(|_| {
                CliError::Config(format!("COMB_CAVITY_THREADS must be an integer, got {v:?}"))
            })
        })
        .transpose()?;
    if let Some(n) = flag.or(from_env) {
        if n == 0 {
            return Err(CliError::Config("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Run(format!("thread pool: {e}")))?;
    }
    Ok(())
}
