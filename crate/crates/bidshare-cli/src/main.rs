//! Command-line benchmark harness for the vehicle-sharing CMDP toolkit.
//!
//! Exit codes: 0 success, 2 the scenario admits no feasible policy, 3 the
//! scenario or arguments fail to parse or validate, 4 a resource bound
//! (state, decision, or table size) was exceeded.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bidshare::bench::{
    comparison_csv, comparison_table, run, solve_scenario, Algorithm, BenchError, ComparisonRow,
    ExperimentPlan,
};
use bidshare::env::{export_explicit, EnvError, Scenario};
use bidshare::learn::LearnError;

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_RESOURCE: u8 = 4;

#[derive(Parser)]
#[command(name = "bidshare", version, about = "Constrained vehicle-sharing benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scenario exactly and print the solver report.
    Solve(SolveArgs),
    /// Train one algorithm and write its learning-curve CSV.
    Train(TrainArgs),
    /// Train one algorithm and print its evaluation row.
    Evaluate(RunArgs),
    /// Run several algorithms and print a comparison table.
    Compare(CompareArgs),
    /// Convert the scenario into an explicit table model.
    ExportExplicit(ExportArgs),
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario description in TOML.
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Algorithm: dp, two-phase-sync, two-phase-async, vanilla, penalized,
    /// lagrangian, or greedy.
    #[arg(long)]
    algo: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo trials for the final evaluation.
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Training episodes (sweeps for the synchronous learner).
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    /// Penalty weights for the penalized learner; several values trigger a
    /// grid search.
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    penalty_weights: Vec<f64>,
    /// Exploration rate during training.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write the learning-curve CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Comma-separated algorithm list.
    #[arg(long, value_delimiter = ',', default_value = "dp,two-phase-async,vanilla,greedy")]
    algos: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    penalty_weights: Vec<f64>,
    /// Exploration rate during training.
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Emit CSV instead of the aligned table.
    #[arg(long)]
    csv: bool,
    /// Write the output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Write the model here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    message: String,
    code: u8,
}

impl Failure {
    fn parse(message: impl Into<String>) -> Failure {
        Failure { message: message.into(), code: EXIT_PARSE }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Failure {
        let code = match &e {
            BenchError::Infeasible => EXIT_INFEASIBLE,
            BenchError::Env(env) => env_exit_code(env),
            BenchError::Learn(LearnError::TooManyPairs { .. }) => EXIT_RESOURCE,
            BenchError::Dp(_) => 1,
        };
        Failure { message: e.to_string(), code }
    }
}

impl From<EnvError> for Failure {
    fn from(e: EnvError) -> Failure {
        Failure { message: e.to_string(), code: env_exit_code(&e) }
    }
}

fn env_exit_code(e: &EnvError) -> u8 {
    match e {
        EnvError::TooLarge { .. } => EXIT_RESOURCE,
        EnvError::Export(message) if message.contains("more than") => EXIT_RESOURCE,
        _ => EXIT_PARSE,
    }
}

fn load_scenario(arg: &ScenarioArg) -> Result<Scenario, Failure> {
    Scenario::from_file(&arg.scenario).map_err(|e| Failure::parse(e.to_string()))
}

fn build_plan(args: &RunArgs) -> Result<ExperimentPlan, Failure> {
    let Some(algorithm) = Algorithm::parse(&args.algo) else {
        let tokens: Vec<&str> = Algorithm::ALL.iter().map(|a| a.token()).collect();
        return Err(Failure::parse(format!(
            "unknown algorithm {:?}; expected one of {}",
            args.algo,
            tokens.join(", ")
        )));
    };
    let mut plan = ExperimentPlan::new(algorithm, args.seed);
    plan.trials = args.trials;
    plan.learner.max_episodes = args.episodes;
    plan.learner.eval_every = (args.episodes / 10).max(1);
    plan.learner.exploration_epsilon = args.epsilon;
    plan.penalty_weights = args.penalty_weights.clone();
    Ok(plan)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure { message: format!("cannot write {}: {e}", path.display()), code: 1 }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn single_row_table(row: ComparisonRow) -> String {
    comparison_table(std::slice::from_ref(&row))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let (_, outcome) = solve_scenario(&scenario)?;
            emit(&args.out, outcome.report.as_deref().unwrap_or_default())
        }
        Command::Train(args) => {
            let scenario = load_scenario(&args.run.scenario)?;
            let plan = build_plan(&args.run)?;
            let outcome = run(&scenario, &plan)?;
            let Some(log) = outcome.log else {
                return Err(Failure::parse(format!(
                    "{} does not train; use evaluate instead",
                    plan.algorithm.token()
                )));
            };
            emit(&args.out, &log.to_csv())?;
            eprint!("{}", single_row_table(outcome.row));
            Ok(())
        }
        Command::Evaluate(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let plan = build_plan(&args)?;
            let outcome = run(&scenario, &plan)?;
            print!("{}", single_row_table(outcome.row));
            Ok(())
        }
        Command::Compare(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let mut rows = Vec::with_capacity(args.algos.len());
            for algo in &args.algos {
                let run_args = RunArgs {
                    scenario: ScenarioArg { scenario: args.scenario.scenario.clone() },
                    algo: algo.clone(),
                    seed: args.seed,
                    trials: args.trials,
                    episodes: args.episodes,
                    penalty_weights: args.penalty_weights.clone(),
                    epsilon: args.epsilon,
                };
                let plan = build_plan(&run_args)?;
                rows.push(run(&scenario, &plan)?.row);
            }
            let text = if args.csv { comparison_csv(&rows) } else { comparison_table(&rows) };
            emit(&args.out, &text)
        }
        Command::ExportExplicit(args) => {
            let scenario = load_scenario(&args.scenario)?;
            let model = export_explicit(&scenario)?;
            emit(&args.out, &model.to_text())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
