use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use softcilqr::config::RunConfig;

mod commands;
mod report;

/// Soft-constrained iterative LQR lane keeping: model, gains, invariant-set
/// horizon, closed-loop simulation and the acceptance suite.
#[derive(Parser, Debug)]
#[command(name = "softcilqr", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the built-in defaults, in this order:
/// config file, then `--set`, then the dedicated flags.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Extra `key=value` override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    sigma: Option<f64>,

    /// Stage horizon.
    #[arg(long = "N", global = true, value_name = "N")]
    horizon: Option<usize>,

    #[arg(long, global = true)]
    eps_max: Option<f64>,

    /// `hard` or `soft`.
    #[arg(long, global = true)]
    mode: Option<String>,

    #[arg(long, global = true)]
    steps: Option<usize>,

    /// Longitudinal speed (m/s).
    #[arg(long, global = true)]
    vx: Option<f64>,

    /// Steering weight.
    #[arg(long = "R", global = true, value_name = "R")]
    r: Option<f64>,

    /// Seed each solve with the previous solution.
    #[arg(long, global = true)]
    warm: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the discrete-time lateral model.
    Model,
    /// Print the Riccati solution, LQR gain and residuals.
    Gain {
        /// Solve the scalar problem A = B = Q = R = 1 instead.
        #[arg(long)]
        scalar: bool,
    },
    /// Determination index of the terminal invariant set, as CSV.
    Mpi {
        /// Comma-separated slack ranges.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [19.0, 29.0, 39.0, 49.0, 59.0, 79.0, 99.0])]
        eps: Vec<f64>,
        /// Persistent cache of computed indices.
        #[arg(long)]
        cache: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop run; per-step CSV to `--out` or stdout.
    Simulate {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write measured solve times instead of zeros.
        #[arg(long)]
        timing: bool,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// One run per value of a parameter; summary CSV.
    Sweep {
        /// `N`, `eps_max` or `sigma`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Run the acceptance criteria and report each one.
    Verify {
        /// Multiply every tolerance by this factor.
        #[arg(long, default_value_t = 1.0)]
        tighten: f64,
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

/// Process exit status.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, configuration or parameters.
    Usage(String),
    /// A computation broke down.
    Numerical(String),
    /// `verify` finished with failing criteria.
    Acceptance(usize),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Acceptance(_) => 3,
        }
    }
}

impl From<softcilqr::Error> for Failure {
    fn from(e: softcilqr::Error) -> Self {
        use softcilqr::Error::*;
        match e {
            InvalidParameter { .. } | Dimension(_) | Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Numerical(m) => f.write_str(m),
            Failure::Acceptance(n) => write!(f, "{n} acceptance criteria failed"),
        }
    }
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for pair in &self.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got `{pair}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("sigma", self.sigma.map(|v| v.to_string())),
            ("N", self.horizon.map(|v| v.to_string())),
            ("eps_max", self.eps_max.map(|v| v.to_string())),
            ("mode", self.mode.clone()),
            ("steps", self.steps.map(|v| v.to_string())),
            ("vx", self.vx.map(|v| v.to_string())),
            ("R", self.r.map(|v| v.to_string())),
            ("warm", self.warm.then(|| "true".to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = cli.common.resolve().and_then(|cfg| match cli.command {
        Command::Model => commands::model(&cfg),
        Command::Gain { scalar } => commands::gain(&cfg, scalar),
        Command::Mpi { eps, cache, out } => commands::mpi(&cfg, &eps, cache.as_deref(), out.as_deref()),
        Command::Simulate { out, timing, cache } => {
            commands::simulate(&cfg, out.as_deref(), timing, cache.as_deref())
        }
        Command::Sweep {
            param,
            values,
            out,
            cache,
        } => commands::sweep(&cfg, &param, &values, out.as_deref(), cache.as_deref()),
        Command::Verify { tighten, only } => commands::verify(cfg, tighten, &only),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
