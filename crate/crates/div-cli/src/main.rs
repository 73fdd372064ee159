//! Command-line front end: fit models on CSV data, predict interventional
//! quantities, run the simulation suite, and run the release gate.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use div_core::DivError;

/// An error carrying its process exit code. Data/configuration problems exit
/// with 2, numerical failures during estimation with 3, model-format version
/// mismatches with 4.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn data(message: String) -> Self {
        CliError { code: 2, message }
    }
}

impl From<DivError> for CliError {
    fn from(e: DivError) -> Self {
        let code = match &e {
            DivError::Numerical(_) | DivError::DegenerateDesign(_) => 3,
            DivError::Serialization(msg) if msg.contains("version mismatch") => 4,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(name = "div", about = "Distributional instrumental-variable estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum OutcomeHeadArg {
    Mlp,
    LinearNoBias,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum PredictMode {
    Mean,
    Quantile,
    Sample,
}

/// Training flags shared by `fit` and `simulate`.
#[derive(clap::Args)]
struct FitFlags {
    #[arg(long, default_value_t = 10_000)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    /// Dimension of each of the three noise inputs.
    #[arg(long, default_value_t = 50)]
    noise_dim: usize,
    #[arg(long, default_value_t = 100)]
    width: usize,
    /// Number of weight layers per network.
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, value_enum, default_value_t = OutcomeHeadArg::Mlp)]
    outcome_head: OutcomeHeadArg,
    /// Hard-threshold generated treatments at 0.5 (straight-through gradient).
    #[arg(long, default_value_t = false)]
    binary_treatment: bool,
}

impl FitFlags {
    fn to_config(&self, seed: u64) -> div_core::FitConfig {
        div_core::FitConfig {
            hidden_layers: self.layers,
            hidden_width: self.width,
            lr: self.lr,
            epochs: self.epochs,
            batch_size: self.batch,
            seed,
            noise: div_core::NoiseConfig {
                dim_eps_x: self.noise_dim,
                dim_eps_y: self.noise_dim,
                dim_eps_h: self.noise_dim,
            },
            outcome_head: match self.outcome_head {
                OutcomeHeadArg::Mlp => div_core::OutcomeHead::Mlp,
                OutcomeHeadArg::LinearNoBias => div_core::OutcomeHead::LinearNoBias,
            },
            binary_treatment: self.binary_treatment,
            ..div_core::FitConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a joint treatment/outcome model on a CSV file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Instrument column names (comma separated).
        #[arg(long, value_delimiter = ',', required = true)]
        z: Vec<String>,
        /// Treatment column names.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<String>,
        /// Outcome column names.
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<String>,
        /// Exogenous covariate column names.
        #[arg(long, value_delimiter = ',')]
        w: Vec<String>,
        #[command(flatten)]
        fit: FitFlags,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model output path.
        #[arg(long)]
        out: PathBuf,
        /// Training trace CSV (epoch,loss,s1,s2).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate a fitted model at new treatment values.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV of treatment values (and covariates when fitted with them).
        #[arg(long)]
        input: PathBuf,
        /// Treatment column names.
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        w: Vec<String>,
        #[arg(long, value_enum)]
        mode: PredictMode,
        /// Quantile levels for mode=quantile.
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        /// Monte Carlo draws per input row.
        #[arg(long, default_value_t = 1000)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a simulation scenario across methods and seeds.
    Simulate {
        /// Scenario id, e.g. cont_linear_contZ or weak_instrument:0.5.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Comma-separated subset of div,tsls,cf_linear,cf_spline,engression.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<String>,
        /// Simulation seeds, one fit per (method, seed).
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[command(flatten)]
        fit: FitFlags,
        /// Monte Carlo draws per grid point.
        #[arg(long, default_value_t = 1000)]
        m: usize,
        /// Output directory for metrics.csv and predictions.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full release-gate suite and write a JSON report.
    Benchmark {
        #[arg(long)]
        out: Option<PathBuf>,
        /// 1-based criterion ids to run (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<usize>,
        /// Multiplies pass thresholds; 0 forces failure.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Fit {
            input,
            z,
            x,
            y,
            w,
            fit,
            seed,
            out,
            trace,
        } => commands::cmd_fit(&input, &z, &x, &y, &w, &fit, seed, &out, trace.as_deref()),
        Command::Predict {
            model,
            input,
            x,
            w,
            mode,
            alphas,
            m,
            seed,
            out,
        } => commands::cmd_predict(&model, &input, &x, &w, mode, &alphas, m, seed, &out),
        Command::Simulate {
            scenario,
            n,
            methods,
            seeds,
            fit,
            m,
            out,
        } => commands::cmd_simulate(&scenario, n, &methods, &seeds, &fit, m, &out),
        Command::Benchmark {
            out,
            criteria,
            tolerance_scale,
        } => {
            return match commands::cmd_benchmark(out.as_deref(), &criteria, tolerance_scale) {
                Ok(all_pass) => {
                    if all_pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {}", e.message);
                    ExitCode::from(e.code)
                }
            }
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
