use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use exposure_glm::simulate::{CovariateMode, DecreasingRule, Scenario, ScenarioConfig};
use exposure_glm::{FitConfig, WeightScheme};
use serde_json::json;

mod commands;
mod ingest;
mod output;

use commands::{ModelOptions, SimulateOptions};
use ingest::IngestError;

/// Tweedie loss-cost regressions with offset and ratio exposure treatments.
#[derive(Parser)]
#[command(name = "exposure-glm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one or both schemes and write fit.json.
    Fit {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = SchemeArg::Both)]
        scheme: SchemeArg,
    },
    /// Fit both schemes; write coefficient ratios, premium ratios, gaps and class balance.
    Compare {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Gap and class-balance reports for both schemes.
    Balance {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Ranked-exposure gap experiment, or a mid-term cancellation mimic portfolio.
    Simulate(SimulateArgs),
    /// Poisson claim counts under both modes and the zero-inflated comparison.
    Counts {
        #[command(flatten)]
        io: InputArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Point mass at zero for the zero-inflated comparison.
        #[arg(long, default_value_t = 0.3)]
        zero_inflation: f64,
    },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 100)]
    max_iter: usize,
    /// Halve IRLS steps that lower the objective.
    #[arg(long)]
    step_halving: bool,
}

impl SolverArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            tolerance: self.tol,
            max_iterations: self.max_iter,
            step_halving: self.step_halving,
            ..FitConfig::default()
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    /// Tweedie variance power, in (1, 2).
    #[arg(long, default_value_t = 1.42)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    phi: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

impl ModelArgs {
    fn options(&self) -> ModelOptions {
        ModelOptions {
            p: self.p,
            phi: self.phi,
            fit: self.solver.config(),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.42)]
    p: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Increasing)]
    scenario: ScenarioArg,
    /// Add two binary risk factors to the design.
    #[arg(long)]
    heterogeneous: bool,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Use y_i = n - i - 1 for the decreasing scenario instead of n - i + 1.
    #[arg(long)]
    literal_decreasing: bool,
    /// Draw risk factors as Binomial(100, .) counts instead of Bernoulli.
    #[arg(long)]
    binomial_covariates: bool,
    /// Generate the mimic portfolio with this share of mid-term contracts.
    #[arg(long)]
    mimic_share: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Offset,
    Ratio,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Increasing,
    Decreasing,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fit { io, model, scheme } => {
            let schemes: &[WeightScheme] = match scheme {
                SchemeArg::Offset => &[WeightScheme::Offset],
                SchemeArg::Ratio => &[WeightScheme::Ratio],
                SchemeArg::Both => &WeightScheme::ALL,
            };
            commands::cmd_fit(&io.input, &io.out, schemes, &model.options())
        }
        Command::Compare { io, model } => commands::cmd_compare(&io.input, &io.out, &model.options()),
        Command::Balance { io, model } => commands::cmd_balance(&io.input, &io.out, &model.options()),
        Command::Simulate(a) => commands::cmd_simulate(&SimulateOptions {
            out: a.out,
            scenario: ScenarioConfig {
                n: a.n,
                scenario: match a.scenario {
                    ScenarioArg::Increasing => Scenario::Increasing,
                    ScenarioArg::Decreasing => Scenario::Decreasing,
                },
                heterogeneous: a.heterogeneous,
                p: a.p,
                seed: a.seed,
                decreasing_rule: if a.literal_decreasing {
                    DecreasingRule::Literal
                } else {
                    DecreasingRule::Reversed
                },
                covariate_mode: if a.binomial_covariates {
                    CovariateMode::BinomialCount
                } else {
                    CovariateMode::Bernoulli
                },
            },
            fit: a.solver.config(),
            mimic_share: a.mimic_share,
        }),
        Command::Counts {
            io,
            solver,
            zero_inflation,
        } => commands::cmd_counts(&io.input, &io.out, zero_inflation, &solver.config()),
    }
}

fn error_kind(e: &exposure_glm::Error) -> &'static str {
    use exposure_glm::Error::*;
    match e {
        VariancePower(_) => "variance_power",
        Dispersion(_) => "dispersion",
        InvalidObservation { .. } => "invalid_observation",
        Domain { .. } => "domain",
        Dimension { .. } => "dimension",
        TooFewContracts { .. } => "too_few_contracts",
        RankDeficient { .. } => "rank_deficient",
        EmptyPortfolio => "empty_portfolio",
        AllZeroLosses => "all_zero_losses",
        SingularInformation(_) => "singular_information",
        NotPositiveDefinite(_) => "not_positive_definite",
        Asymmetric(_) => "asymmetric",
        NonFinite(_) => "non_finite",
        FitMismatch(_) => "fit_mismatch",
    }
}

fn error_json(err: &anyhow::Error) -> serde_json::Value {
    let message = format!("{err:#}");
    let mut body = json!({ "kind": "other", "message": message });
    if let Some(e) = err.downcast_ref::<IngestError>() {
        body["kind"] = json!("invalid_input");
        body["row"] = json!(e.row);
        body["column"] = json!(e.column);
    } else if let Some(e) = err.chain().find_map(|c| c.downcast_ref::<exposure_glm::Error>()) {
        body["kind"] = json!(error_kind(e));
        match e {
            exposure_glm::Error::RankDeficient { columns } => body["columns"] = json!(columns),
            exposure_glm::Error::InvalidObservation { row, field, .. } => {
                body["row"] = json!(row + 1);
                body["column"] = json!(field);
            }
            _ => {}
        }
    } else if err.chain().any(|c| c.is::<std::io::Error>() || c.is::<csv::Error>()) {
        body["kind"] = json!("io");
    }
    json!({ "schema_version": output::SCHEMA_VERSION, "error": body })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EXPOSURE_GLM_LOG", "error")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
