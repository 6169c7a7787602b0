use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use charge_meter::config::{ExperimentConfig, OutputFormat, ShellEntry};
use charge_meter::Error;

mod run;

#[derive(Parser)]
#[command(name = "charge-meter", version, about = "Finite-size Ising sectors, strip transfer matrices and central-charge estimates")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Output file (standard output when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct Model {
    #[arg(long = "J")]
    j: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Potential shells as `r2:v` pairs, e.g. `2:1.0`.
    #[arg(long, value_delimiter = ',', value_parser = parse_shell)]
    v_shells: Option<Vec<ShellEntry>>,
}

#[derive(Args, Clone, Default)]
struct Size {
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long = "L")]
    big_l: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form sector values on the torus.
    Exact {
        #[command(flatten)]
        size: Size,
        /// Bond activity tanh(βJ); defaults to the critical value.
        #[arg(long)]
        t: Option<f64>,
    },
    /// Brute-force and cycle-space reference values.
    Oracle {
        #[command(flatten)]
        size: Size,
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        beta: Option<f64>,
        /// Also verify the sign table with random couplings from this seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sector inequalities with the interaction expansion.
    Lemma1 {
        #[command(flatten)]
        size: Size,
        #[command(flatten)]
        model: Model,
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
        /// first, second, split, optionally with `+long`.
        #[arg(long)]
        convention: Option<String>,
    },
    /// Strip transfer-matrix free energies and correlation lengths.
    Strip {
        #[arg(long, value_delimiter = ',')]
        ell_list: Option<Vec<usize>>,
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        beta: Option<f64>,
        /// Locate the crossing of ξ/ℓ for these two widths.
        #[arg(long, value_delimiter = ',')]
        locate: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        bracket: Option<Vec<f64>>,
    },
    /// Central-charge estimates.
    Charge {
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, value_delimiter = ',')]
        ell_list: Option<Vec<usize>>,
        #[command(flatten)]
        model: Model,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        extrapolation_order: Option<usize>,
    },
    /// Multiscale-analysis property checks.
    RgCheck {
        #[command(flatten)]
        size: Size,
        /// Inclusive scale range `lo,hi` with `lo <= hi <= 0`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        h_range: Option<Vec<i32>>,
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
    },
    /// Runs an acceptance suite (or `all`).
    Reproduce {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        lambda: Option<f64>,
    },
}

fn parse_shell(s: &str) -> Result<ShellEntry, String> {
    let (r2, v) = s.split_once(':').ok_or_else(|| format!("expected r2:v, got {s:?}"))?;
    Ok(ShellEntry {
        r2: r2.trim().parse().map_err(|e| format!("bad r2 in {s:?}: {e}"))?,
        v: v.trim().parse().map_err(|e| format!("bad v in {s:?}: {e}"))?,
    })
}

/// Failures mapped onto the exit-code contract.
pub enum Failure {
    Validation(String),
    Numerical(String),
    Verdict(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o: {e}"))
    }
}

fn set_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("CHARGE_METER_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Validation(format!("CHARGE_METER_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Validation(e.to_string()))
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(f) = common.format {
        cfg.output.format = match f {
            Format::Json => OutputFormat::Json,
            Format::Csv => OutputFormat::Csv,
        };
    }
    if common.out.is_some() {
        cfg.output.path = common.out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = set_threads().and_then(|_| run::dispatch(&cli.common, cli.command));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
