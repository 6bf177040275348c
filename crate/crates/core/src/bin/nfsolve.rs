use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nfsolve::cli::{self, error_exit_code, emit_plot_data, PlotKind, RunReport};
use nfsolve::config::{Command, RunConfig};
use nfsolve::Result;

#[derive(Parser)]
#[command(name = "nfsolve", version, about = "Solvability checks and solvers for non-Fredholm Schrödinger-type equations")]
struct Args {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cache directory for scattering states and transforms.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Sub,
}

/// Dotted overrides such as `--solver.a=1.0` follow the subcommand.
#[derive(Subcommand)]
enum Sub {
    /// Smallness, integrability and decay checks for the potential.
    CheckPotential(Overrides),
    /// One scattering state at solver.k.
    ScatteringState(Overrides),
    /// Solvability check and solve of (-Laplacian + V - a) u = f.
    SolveH(Overrides),
    /// Discrete spectrum of the transverse operator, with zero-mode tuning.
    Spectrum(Overrides),
    /// Channel conditions and solve of the separable problem.
    SolveSeparable(Overrides),
    /// Growth of the near-sphere norm of f~/(|k|^2 - a) as the layer shrinks.
    Witness(Overrides),
    /// Rewrites a plot CSV from an existing report.json.
    Plot {
        report: PathBuf,
        #[arg(value_parser = parse_plot)]
        which: PlotKind,
    },
}

#[derive(clap::Args)]
struct Overrides {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

fn parse_plot(s: &str) -> std::result::Result<PlotKind, String> {
    s.parse().map_err(|e: nfsolve::Error| e.to_string())
}

fn build_config(args: &Args, command: Command, overrides: &[String]) -> Result<RunConfig> {
    let base = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut config = base.with_overrides(overrides)?;
    config.command = Some(command);
    if let Some(out) = &args.out {
        config.output.dir = out.to_string_lossy().into_owned();
    }
    if let Some(cache) = &args.cache {
        config.output.cache = Some(cache.to_string_lossy().into_owned());
    }
    Ok(config)
}

fn execute(args: &Args) -> Result<i32> {
    let (command, overrides) = match &args.command {
        Sub::CheckPotential(o) => (Command::CheckPotential, &o.overrides),
        Sub::ScatteringState(o) => (Command::ScatteringState, &o.overrides),
        Sub::SolveH(o) => (Command::SolveH, &o.overrides),
        Sub::Spectrum(o) => (Command::Spectrum, &o.overrides),
        Sub::SolveSeparable(o) => (Command::SolveSeparable, &o.overrides),
        Sub::Witness(o) => (Command::Witness, &o.overrides),
        Sub::Plot { report, which } => {
            let r = RunReport::from_json(&std::fs::read_to_string(report)?)?;
            let dir = report.parent().map(PathBuf::from).unwrap_or_default();
            let path = emit_plot_data(&r, *which, &dir)?;
            println!("{}", path.display());
            return Ok(0);
        }
    };
    let config = build_config(args, command, overrides)?;
    let report = cli::run(&config)?;
    println!(
        "{}: {:?} (exit {}), report in {}",
        command.name(),
        report.verdict,
        report.exit_code,
        PathBuf::from(&config.output.dir).join("report.json").display()
    );
    Ok(report.exit_code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    if args.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_exit_code(&e) as u8)
        }
    }
}
