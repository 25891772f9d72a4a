//! `vsc`: cavity-coupled reactive molecular dynamics on the built-in
//! surrogate.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime or numerics error,
//! 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vsc_core::commands::{
    cmd_analyze, cmd_calibrate, cmd_ensemble, cmd_model_check, cmd_run, cmd_scan, cmd_spectrum, Invocation,
};
use vsc_core::config::{parse_config, Format};
use vsc_core::Error;

#[derive(Parser)]
#[command(name = "vsc", version, about = "Reactive molecular dynamics under vibrational strong coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override `ensemble.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override `outputs.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for ensembles.
    #[arg(long, global = true, env = "VSC_THREADS")]
    threads: Option<usize>,

    /// Override `outputs.formats`.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Bare and polaritonic line spectra.
    Spectrum,
    /// A single trajectory.
    Run,
    /// A thermal ensemble at one cavity setting.
    Ensemble,
    /// Cavity-frequency or coupling-strength scan.
    Scan,
    /// Occupation and correlation analysis of stored trajectories.
    Analyze,
    /// Build the surrogate and report its calibration.
    Calibrate,
    /// Force and energy-conservation checks.
    ModelCheck,
}

const DEFAULT_CONFIG: &str = "[system]\nbuiltin = \"pta_surrogate\"\n";

fn run(cli: &Cli) -> Result<PathBuf, Error> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.display().to_string(),
            source: e,
        })?,
        None => DEFAULT_CONFIG.to_string(),
    };
    let mut config = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        config.ensemble.seed = seed;
    }
    if let Some(f) = cli.format {
        config.outputs.formats = match f {
            FormatArg::Csv => vec![Format::Csv],
            FormatArg::Json => vec![Format::Json],
            FormatArg::Both => vec![Format::Csv, Format::Json],
        };
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&config.outputs.directory));
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Argument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(e.to_string()))?;
    }
    let inv = Invocation { config, text, out };
    match cli.command {
        Command::Spectrum => cmd_spectrum(&inv),
        Command::Run => cmd_run(&inv),
        Command::Ensemble => cmd_ensemble(&inv),
        Command::Scan => cmd_scan(&inv),
        Command::Analyze => cmd_analyze(&inv),
        Command::Calibrate => cmd_calibrate(&inv),
        Command::ModelCheck => cmd_model_check(&inv),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
