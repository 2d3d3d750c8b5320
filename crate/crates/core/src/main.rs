use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use berry_det::cli::{emit_csv, emit_phases_csv, run_config, Command, RunConfig};
use berry_det::Result;

#[derive(Parser)]
#[command(name = "berry-det", version, about = "Berry phases and determinant phases of periodic Hermitian families")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Kato steps of the gauge grid.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Comma-separated m values, replacing the configured list.
    #[arg(long, global = true, value_delimiter = ',')]
    m: Option<Vec<f64>>,
    /// Seed of a random_gapped family.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the summary.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Berry phase by each configured method.
    Berry,
    /// Determinant phases at a single m.
    Det,
    /// Determinant phases against N∓π + γ over the m-list.
    Verify,
    /// Determinant phase along the deformation parameter s.
    Sweep,
    /// Bundled spin-1/2 showcase.
    Demo,
}

impl From<Sub> for Command {
    fn from(sub: Sub) -> Self {
        match sub {
            Sub::Berry => Command::Berry,
            Sub::Det => Command::Det,
            Sub::Verify => Command::Verify,
            Sub::Sweep => Command::Sweep,
            Sub::Demo => Command::Demo,
        }
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, cli.command) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Sub::Demo) => RunConfig::demo(),
        (None, _) => {
            return Err(berry_det::Error::ConfigError(
                "--config is required for this command".into(),
            ))
        }
    };
    if let Some(steps) = cli.steps {
        cfg.steps = Some(steps);
    }
    if let Some(m) = &cli.m {
        cfg.m = m.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed)?;
    }
    if let Some(out) = &cli.out {
        cfg.output.csv = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load(cli)?;
    let report = run_config(&cfg, cli.command.into())?;
    if let Some(path) = &cfg.output.csv {
        if report.rows.is_empty() {
            emit_phases_csv(&report, path)?;
        } else {
            emit_csv(&report, path)?;
        }
    }
    if !cli.quiet {
        print!("{}", report.summary());
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
