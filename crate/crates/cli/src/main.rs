//! `wassopt` command-line front end: reads JSON instances, runs one solver,
//! writes JSON (or CSV for traces and measures).

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use wassopt::dro::{self, DroInstance};
use wassopt::flows::{self, Ball, Direction, FlowConfig};
use wassopt::functionals::Functional;
use wassopt::gaussian::{self, KlBallInstance};
use wassopt::optimality::{self, Constraint};
use wassopt::{oracles, ot, DiscreteMeasure, Measure, MeasureSpec};

use io::{CliError, Output};

#[derive(Parser, Debug)]
#[command(name = "wassopt", version, about = "Optimization in the Wasserstein space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Debug, Clone)]
struct Opts {
    /// Input JSON file.
    #[arg(long = "in", global = true, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Iteration budget for flows.
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long = "step-size", global = true)]
    step_size: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact optimal transport.
    #[command(subcommand)]
    Ot(OtCommand),
    /// Functional values and Wasserstein gradients.
    #[command(subcommand)]
    Grad(GradCommand),
    /// Unconstrained first-order residual.
    Stationarity,
    /// Multiplier fit and sufficiency certificate for a constrained candidate.
    Lagrange,
    /// Particle gradient flows.
    #[command(subcommand)]
    Flow(FlowCommand),
    /// Distributionally robust worst cases over a Wasserstein ball.
    #[command(subcommand)]
    Dro(DroCommand),
    /// Minimum KL over a Wasserstein ball of Gaussians.
    #[command(subcommand)]
    Klmin(KlminCommand),
    /// Brute-force cross-checks.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Subcommand, Debug)]
enum OtCommand {
    Distance,
    Plan,
}

#[derive(Subcommand, Debug)]
enum GradCommand {
    Eval,
}

#[derive(Subcommand, Debug)]
enum FlowCommand {
    Run,
}

#[derive(Subcommand, Debug)]
enum DroCommand {
    Solve,
    Dual,
}

#[derive(Subcommand, Debug)]
enum KlminCommand {
    Solve,
}

#[derive(Subcommand, Debug)]
enum OracleCommand {
    /// Compares the LP against permutation enumeration, on `--in` or on
    /// 200 random pairs drawn from `--seed`.
    OtCheck,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairInput {
    mu: MeasureSpec,
    nu: MeasureSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FunctionalInput {
    functional: Functional,
    measure: MeasureSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LagrangeInput {
    functional: Functional,
    constraint: Constraint,
    measure: MeasureSpec,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowInput {
    functional: Functional,
    initial: MeasureSpec,
    #[serde(default)]
    ball: Option<Ball>,
    #[serde(default = "default_direction")]
    direction: Direction,
    #[serde(default)]
    step: Option<f64>,
    #[serde(default)]
    max_iters: Option<usize>,
}

fn default_direction() -> Direction {
    Direction::Descent
}

#[derive(Deserialize)]
struct DualInput {
    #[serde(flatten)]
    instance: DroInstance,
    /// Defaults to the optimal multiplier `|w| / (2 eps)`.
    #[serde(default)]
    lambda: Option<f64>,
}

#[derive(Serialize)]
struct OtCheckRecord {
    lp_cost: f64,
    oracle_cost: f64,
    relative_gap: f64,
    matching: Vec<usize>,
}

fn discrete(spec: MeasureSpec) -> Result<DiscreteMeasure, CliError> {
    Ok(DiscreteMeasure::try_from(spec)?)
}

fn measure(spec: MeasureSpec) -> Result<Measure, CliError> {
    Ok(Measure::try_from(spec)?)
}

fn measure_csv(mu: &DiscreteMeasure) -> String {
    let d = mu.dim();
    let mut out = String::from("weight");
    for k in 0..d {
        out.push_str(&format!(",x{k}"));
    }
    out.push('\n');
    for (x, w) in mu.iter() {
        out.push_str(&io::fmt_f64(w));
        for v in x.iter() {
            out.push(',');
            out.push_str(&io::fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

fn run(cli: Cli) -> Result<Output, CliError> {
    let opts = &cli.opts;
    let tol = opts.tol.unwrap_or(optimality::DEFAULT_TOL);
    match &cli.command {
        Command::Ot(OtCommand::Distance) => {
            io::json_only(opts.format, "ot distance")?;
            let input: PairInput = io::read_input(opts)?;
            let d = ot::w2(&measure(input.mu)?, &measure(input.nu)?)?;
            Output::json(&d)
        }
        Command::Ot(OtCommand::Plan) => {
            let input: PairInput = io::read_input(opts)?;
            let plan = ot::solve_ot(&discrete(input.mu)?, &discrete(input.nu)?)?;
            let support = plan.support();
            match opts.format {
                Format::Csv => {
                    let mut out = String::from("i,j,mass\n");
                    for (i, j, m) in &support {
                        out.push_str(&format!("{i},{j},{}\n", io::fmt_f64(*m)));
                    }
                    Ok(Output::Text(out))
                }
                Format::Json => Output::json(&json!({
                    "cost": plan.cost,
                    "support": support,
                    "phi": plan.phi,
                    "psi": plan.psi,
                })),
            }
        }
        Command::Grad(GradCommand::Eval) => {
            let input: FunctionalInput = io::read_input(opts)?;
            input.functional.validate()?;
            match measure(input.measure)? {
                Measure::Discrete(mu) => {
                    let value = input.functional.evaluate_discrete(&mu)?;
                    let grad = input.functional.gradient(&mu)?;
                    match opts.format {
                        Format::Csv => {
                            let mut out = String::from("atom,weight,component,position,gradient\n");
                            for (i, ((x, w), g)) in mu.iter().zip(grad.vectors()).enumerate() {
                                for k in 0..mu.dim() {
                                    out.push_str(&format!(
                                        "{i},{},{k},{},{}\n",
                                        io::fmt_f64(w),
                                        io::fmt_f64(x[k]),
                                        io::fmt_f64(g[k])
                                    ));
                                }
                            }
                            Ok(Output::Text(out))
                        }
                        Format::Json => {
                            let rows: Vec<Vec<f64>> = grad.vectors().iter().map(|v| v.iter().copied().collect()).collect();
                            Output::json(&json!({ "value": value, "gradient": rows, "norm": grad.norm() }))
                        }
                    }
                }
                Measure::Gaussian(g) => {
                    io::json_only(opts.format, "grad eval on a gaussian")?;
                    let value = input.functional.evaluate_gaussian(&g)?;
                    let field = input.functional.gaussian_gradient(&g)?;
                    let matrix: Vec<Vec<f64>> = field.matrix.row_iter().map(|r| r.iter().copied().collect()).collect();
                    let offset: Vec<f64> = field.offset.iter().copied().collect();
                    Output::json(&json!({ "value": value, "matrix": matrix, "offset": offset, "norm": field.l2_norm(&g) }))
                }
            }
        }
        Command::Stationarity => {
            io::json_only(opts.format, "stationarity")?;
            let input: FunctionalInput = io::read_input(opts)?;
            input.functional.validate()?;
            let report = optimality::check_stationarity(&input.functional, &measure(input.measure)?, tol)?;
            Output::json(&report)
        }
        Command::Lagrange => {
            io::json_only(opts.format, "lagrange")?;
            let input: LagrangeInput = io::read_input(opts)?;
            input.functional.validate()?;
            let mu = discrete(input.measure)?;
            let Some(k) = input.constraint.as_functional() else {
                let report = optimality::check_stationarity(&input.functional, &Measure::Discrete(mu.clone()), tol)?;
                let cert = optimality::certify(&input.functional, &input.constraint, &mu, 0.0, tol)?;
                return Output::json(&json!({ "stationarity": report, "certificate": cert }));
            };
            let fit = optimality::estimate_multiplier(&input.functional, &k, &mu)?;
            let cert = optimality::certify(&input.functional, &input.constraint, &mu, -fit.lambda_hat, tol)?;
            Output::json(&json!({ "multiplier": fit, "certificate": cert }))
        }
        Command::Flow(FlowCommand::Run) => {
            let input: FlowInput = io::read_input(opts)?;
            input.functional.validate()?;
            let step = opts.step_size.or(input.step).ok_or_else(|| {
                CliError::Usage("flow run needs --step-size or a `step` field".into())
            })?;
            let iters = opts.steps.or(input.max_iters).unwrap_or(1000);
            let mut cfg = FlowConfig::new(step, iters, input.direction).with_tol(tol);
            cfg.ball = input.ball;
            cfg.seed = opts.seed.unwrap_or(0);
            let trace = flows::run_flow(&input.functional, &discrete(input.initial)?, &cfg)?;
            match opts.format {
                Format::Csv => Ok(Output::Text(trace.to_csv())),
                Format::Json => Output::json(&json!({
                    "converged": trace.converged,
                    "final_value": trace.final_value(),
                    "records": trace.records,
                    "final_measure": MeasureSpec::from(trace.final_measure),
                })),
            }
        }
        Command::Dro(DroCommand::Solve) => {
            let inst: DroInstance = io::read_input(opts)?;
            let sol = inst.solve()?;
            match opts.format {
                Format::Csv => Ok(Output::Text(measure_csv(&sol.worst_measure))),
                Format::Json => {
                    let cert = dro::certify_solution(&inst, &sol, tol.max(1e-6))?;
                    let mut value = serde_json::to_value(&sol).map_err(io::serialize_error)?;
                    value["certificate"] = serde_json::to_value(&cert).map_err(io::serialize_error)?;
                    Output::json(&value)
                }
            }
        }
        Command::Dro(DroCommand::Dual) => {
            io::json_only(opts.format, "dro dual")?;
            let input: DualInput = io::read_input(opts)?;
            let inst = input.instance;
            inst.validate()?;
            let lambda = input.lambda.unwrap_or(inst.w.norm() / (2.0 * inst.eps));
            let value = dro::dual_value_linear(&inst, lambda)?;
            Output::json(&json!({ "lambda": lambda, "dual_value": value }))
        }
        Command::Klmin(KlminCommand::Solve) => {
            io::json_only(opts.format, "klmin solve")?;
            let inst: KlBallInstance = io::read_input(opts)?;
            let sol = gaussian::solve_kl_ball(&inst)?;
            Output::json(&sol)
        }
        Command::Oracle(OracleCommand::OtCheck) => {
            io::json_only(opts.format, "oracle ot-check")?;
            let check = |mu: &DiscreteMeasure, nu: &DiscreteMeasure| -> Result<OtCheckRecord, CliError> {
                let lp_cost = ot::solve_ot(mu, nu)?.cost;
                let (oracle_cost, matching) = oracles::permutation_ot(mu, nu)?;
                let relative_gap = (lp_cost - oracle_cost).abs() / oracle_cost.abs().max(f64::MIN_POSITIVE);
                Ok(OtCheckRecord { lp_cost, oracle_cost, relative_gap, matching })
            };
            let records = if opts.input.is_some() {
                let input: PairInput = io::read_input(opts)?;
                vec![check(&discrete(input.mu)?, &discrete(input.nu)?)?]
            } else {
                let seed = opts.seed.ok_or_else(|| CliError::Usage("oracle ot-check needs --in or --seed".into()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = Vec::new();
                for _ in 0..200 {
                    let d = rng.random_range(1..=3);
                    let n = rng.random_range(1..=oracles::MAX_PERMUTATION_ATOMS);
                    let mut draw = || -> Result<DiscreteMeasure, CliError> {
                        let atoms = (0..n)
                            .map(|_| random_row(d, &mut rng))
                            .collect::<Vec<_>>();
                        Ok(DiscreteMeasure::uniform_from_rows(atoms)?)
                    };
                    let (mu, nu) = (draw()?, draw()?);
                    out.push(check(&mu, &nu)?);
                }
                out
            };
            let max_gap = records.iter().map(|r| r.relative_gap).fold(0.0, f64::max);
            let threshold = opts.tol.unwrap_or(1e-12);
            Output::json(&json!({
                "pairs": records.len(),
                "max_relative_gap": max_gap,
                "agree": max_gap <= threshold,
                "records": records,
            }))
        }
    }
}

/// Uniform point in `[-1, 1]^d` as a plain row.
fn random_row(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = io::configure_threads() {
        return e.report();
    }
    let out = cli.opts.out.clone();
    match run(cli).and_then(|o| o.write(out.as_deref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
