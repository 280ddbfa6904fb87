//! `polycube`: build and check Markov cubature rules for polynomial
//! diffusions from a JSON config.
//!
//! Exit codes: 0 success, 1 honest negative (infeasible, assumption fails,
//! statistical check fails), 2 usage or validation error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "polycube", version, about = "Markov cubature rules for polynomial diffusions")]
struct Cli {
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long, global = true, env = "POLYCUBE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Write the JSON result here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Polynomial degree.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Tolerance override, e.g. `--tol tol.cone=1e-8` (repeatable).
    #[arg(long = "tol", value_name = "KEY=VALUE", value_parser = config::parse_tol)]
    pub tol: Vec<(String, f64)>,
    /// Points as JSON, e.g. `[[0.0],[1.0]]`.
    #[arg(long, value_parser = config::parse_points)]
    pub points: Option<config::PointList>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generator matrix G on the monomial basis.
    Generator(Common),
    /// Conditional moments E_x[h_j(X_t)] or a multi-time moment.
    Moments {
        #[command(flatten)]
        common: Common,
        /// Starting point, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[arg(long)]
        t: Option<f64>,
    },
    /// Long-run limit of e^{tG} and the stationary moments.
    Asymptotic(Common),
    /// Continuous-time rule on given points.
    CheckCt(Common),
    /// Lifted rule (S, L), optionally with signed measures on base points.
    Lift {
        #[command(flatten)]
        common: Common,
        /// Base points for the signed-measure form, as JSON.
        #[arg(long, value_parser = config::parse_points)]
        base_points: Option<config::PointList>,
    },
    /// Discrete-time rule (delta, Q).
    Discrete {
        #[command(flatten)]
        common: Common,
        /// Number of Gauss points (d = 1).
        #[arg(long)]
        gauss: Option<usize>,
        #[arg(long)]
        delta_init: Option<f64>,
        #[arg(long)]
        l_max: Option<usize>,
    },
    /// Reload a rule file, re-verify it and compare simulated moments.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rule: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        /// Euler step for --sde.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Steps for discrete rules.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        start: Option<usize>,
        #[arg(long)]
        z_crit: Option<f64>,
        /// Also simulate the diffusion itself.
        #[arg(long)]
        sde: bool,
        /// Also write the comparison rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// A run that did not succeed. `payload` is still emitted as the result.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    pub payload: Option<Value>,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
            payload: None,
        }
    }
}

impl From<polycube::Error> for Failure {
    fn from(e: polycube::Error) -> Self {
        use polycube::Error as E;
        let message = e.to_string();
        match e {
            E::AssumptionViolated {
                assumption,
                eigenvalues,
                ..
            } => Failure {
                code: 1,
                payload: Some(serde_json::json!({
                    "error": message,
                    "assumption": assumption,
                    "eigenvalues": eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                })),
                message,
            },
            E::SearchExhausted { .. } | E::NotRepresentable { .. } => Failure {
                code: 1,
                payload: Some(serde_json::json!({ "error": message })),
                message,
            },
            _ => Failure::usage(message),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
