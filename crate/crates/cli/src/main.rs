use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracid::experiments::{self, ExperimentConfig, ExperimentKind, RunOptions};
use fracid::{Error, GradedExtensionMesh};

/// Reproducible studies for reaction coefficient identification in
/// spectral fractional diffusion.
#[derive(Debug, Parser)]
#[command(name = "fracid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML config; built-in defaults of the study when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's `output`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for noise, directions and Krylov starts, overriding the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// y-mesh in the `Y M sigma slope` text format, used on every level.
    #[arg(long, global = true, value_name = "PATH")]
    ymesh_file: Option<PathBuf>,
    /// Writes a binary snapshot of the final discrete state.
    #[arg(long, global = true, value_name = "PATH")]
    dump_state: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trace error against the spectral oracle under mesh refinement.
    ForwardRate,
    /// Energy error of the cylinder truncation against a tall reference.
    Truncation,
    /// Adjoint gradient against central differences, Taylor and Hessian checks.
    GradCheck,
    /// One identification run at a single schedule level.
    Identify,
    /// Identification along the mesh / regularization / noise schedule.
    ScheduleStudy,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::ForwardRate => ExperimentKind::ForwardRate,
            Command::Truncation => ExperimentKind::Truncation,
            Command::GradCheck => ExperimentKind::GradCheck,
            Command::Identify => ExperimentKind::Identify,
            Command::ScheduleStudy => ExperimentKind::ScheduleStudy,
        }
    }
}

fn run(cli: Cli) -> fracid::Result<()> {
    let kind = cli.command.kind();
    let g = cli.global;
    if let Some(threads) = g.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let mut config = match &g.config {
        Some(path) => ExperimentConfig::read(path, Some(kind))?,
        None => ExperimentConfig::default_for(kind),
    };
    if let Some(seed) = g.seed {
        config.seed = seed;
    }
    if let Some(out) = g.out {
        config.output = out;
    }
    let options = RunOptions {
        ymesh: g.ymesh_file.as_deref().map(GradedExtensionMesh::read).transpose()?,
        dump_state: g.dump_state,
    };
    log::info!("running {kind} into {}", config.output.display());
    let output = experiments::run(&config, &options)?;
    for path in output.write(&config.output)? {
        println!("{}", path.display());
    }
    if let Some(path) = &options.dump_state {
        output.dump_state(path)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_configuration() { 2 } else { 3 })
        }
    }
}
