//! Experiment runner for the equitransport library: reproducible solves,
//! mixing diagnostics, cost curves, audits, metric reports, tessellation
//! rendering and the moving-mosaic experiment, all driven by one config
//! file per run.

mod commands;
mod config;
mod manifest;

use clap::{Args, Parser, Subcommand};
use commands::CmdError;
use config::Config;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(name = "equitransport", version, about = "optimal transport experiments \
between a continuous reference measure and stationary point processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: current directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for per-seed and per-window fan-out.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Emit sampled point configurations.
    Sample(RunArgs),
    /// Solve a single-window transport problem and export the plan.
    Solve(RunArgs),
    /// Mixed-plan diagnostics over a window translate set.
    Mix(RunArgs),
    /// Monte Carlo cost-per-volume table over window radii.
    Costcurve(RunArgs),
    /// Monotonicity, efficiency and cell-geometry audit suite.
    Audit(RunArgs),
    /// Wasserstein pair and triangle reports.
    Metric(RunArgs),
    /// Allocation cell map with SVG rendering.
    Tessellate(RunArgs),
    /// Moving-mosaic evolution of a coupled point configuration.
    Mosaic(RunArgs),
    /// Check a configuration file and report findings.
    Validate(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args): (&str, &RunArgs) = match &cli.command {
        Command::Sample(a) => ("sample", a),
        Command::Solve(a) => ("solve", a),
        Command::Mix(a) => ("mix", a),
        Command::Costcurve(a) => ("costcurve", a),
        Command::Audit(a) => ("audit", a),
        Command::Metric(a) => ("metric", a),
        Command::Tessellate(a) => ("tessellate", a),
        Command::Mosaic(a) => ("mosaic", a),
        Command::Validate(a) => ("validate", a),
    };
    match execute(name, args) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("equitransport {name}: {err}");
            match err {
                CliError::Config(_) => ExitCode::from(EXIT_CONFIG),
                CliError::Infeasible(_) => ExitCode::from(EXIT_INFEASIBLE),
                CliError::Io(_) => ExitCode::from(EXIT_IO),
            }
        }
    }
}

enum CliError {
    Config(String),
    Infeasible(String),
    Io(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Infeasible(m) | CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl From<CmdError> for CliError {
    fn from(e: CmdError) -> Self {
        match e {
            CmdError::Config(m) => CliError::Config(m),
            CmdError::Infeasible(m) => CliError::Infeasible(m),
        }
    }
}

fn execute(name: &str, args: &RunArgs) -> Result<ExitCode, CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let config_text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("reading {}: {e}", args.config.display())))?;
    let cfg = Config::parse(&config_text).map_err(CliError::Config)?;

    if name == "validate" {
        let findings = cfg.validate();
        if findings.is_empty() {
            println!("ok");
            return Ok(ExitCode::SUCCESS);
        }
        for finding in &findings {
            println!("{finding}");
        }
        return Ok(ExitCode::from(EXIT_CONFIG));
    }

    let artifacts = match name {
        "sample" => commands::run_sample(&cfg)?,
        "solve" => commands::run_solve(&cfg)?,
        "mix" => commands::run_mix(&cfg)?,
        "costcurve" => commands::run_costcurve(&cfg)?,
        "audit" => commands::run_audit(&cfg)?,
        "metric" => commands::run_metric(&cfg)?,
        "tessellate" => commands::run_tessellate(&cfg)?,
        "mosaic" => commands::run_mosaic(&cfg)?,
        _ => unreachable!("subcommands are exhaustive"),
    };

    let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", out_dir.display())))?;
    let quantum_actual = equitransport::randmeas::adjust_quantum(
        cfg.grid.quantum,
        cfg.grid.k,
        cfg.scene.dimension,
        (cfg.scene.level[0], cfg.scene.level[1]),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    for (file, content) in &artifacts {
        let path = out_dir.join(file);
        std::fs::write(&path, content)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    }
    let manifest =
        manifest::Manifest::new(name, cfg.scene.seed, quantum_actual, &config_text, &artifacts);
    let manifest_path = out_dir.join("manifest.toml");
    std::fs::write(&manifest_path, manifest.to_toml())
        .map_err(|e| CliError::Io(format!("writing {}: {e}", manifest_path.display())))?;
    println!(
        "{name}: wrote {} artifact(s) + manifest to {}",
        artifacts.len(),
        out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}
