use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dicke::runner::{self, config, ExperimentKind, RunManifest, RunOptions};
use dicke::{Error, Result};

/// Dicke-model scrambling, chaos and thermalization experiments.
#[derive(Debug, Parser)]
#[command(name = "dicke", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Level statistics across the excited-state transition.
    Spectrum(RunArgs),
    /// Mean-field Lyapunov map over field and energy.
    LyapunovMap(RunArgs),
    /// Exact FOTOC series with λ_Q and the scrambling time.
    Fotoc(RunArgs),
    /// Truncated-Wigner moments at large N.
    Twa(RunArgs),
    /// Rényi entropies and their FOTOC estimators.
    Renyi(RunArgs),
    /// Time-averaged distributions against the diagonal ensemble.
    Thermalize(RunArgs),
    /// Recompute the checksums listed in a run's manifest.
    Verify {
        /// Output directory of a previous run.
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `experiment.output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Lift the dimension and trajectory ceilings.
    #[arg(long)]
    allow_large: bool,
}

fn run_experiment(kind: ExperimentKind, args: RunArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = config::parse_config(&text)?;
    if cfg.experiment.kind != kind {
        return Err(Error::Config {
            line: config::line_of(&text, "experiment", "kind"),
            key: Some("experiment.kind".into()),
            message: format!(
                "file describes a {} experiment but the {} subcommand was used",
                cfg.experiment.kind.name(),
                kind.name()
            ),
        });
    }
    let opts = RunOptions {
        out: args.out,
        seed: args.seed,
        threads: args.threads,
        allow_large: args.allow_large,
    };
    let m = runner::run(&cfg, &opts)?;
    for e in &m.outputs {
        println!("{}  {}", e.sha256, e.file);
    }
    eprintln!(
        "{}: {} files, seed {}, {} threads, {:.1} s",
        m.kind,
        m.outputs.len(),
        m.seed,
        m.threads,
        m.wall_time_s
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Spectrum(a) => run_experiment(ExperimentKind::Spectrum, a),
        Command::LyapunovMap(a) => run_experiment(ExperimentKind::LyapunovMap, a),
        Command::Fotoc(a) => run_experiment(ExperimentKind::Fotoc, a),
        Command::Twa(a) => run_experiment(ExperimentKind::Twa, a),
        Command::Renyi(a) => run_experiment(ExperimentKind::Renyi, a),
        Command::Thermalize(a) => run_experiment(ExperimentKind::Thermalize, a),
        Command::Verify { dir } => RunManifest::read(&dir).and_then(|m| m.verify(&dir)).map(|_| println!("ok")),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
