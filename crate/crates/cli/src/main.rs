mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use pcal::exact::solve_exact;
use pcal::fptas::{build_grid, fptas_solve};
use pcal::model::PredictorRepr;
use pcal::structure::{
    analyze_structure, binary_action_certificate, count_predictions, verify_optimality,
    GammaCertificate,
};
use pcal::{agent_payoff, ece, payoff, validate_instance, Instance, Norm, Predictor, RawInstance};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use output::{num, value_json, Emit};

/// Principal-optimal predictors under an expected calibration error budget.
///
/// Exit codes: 0 success, 1 verification found problems, 2 invalid input,
/// 3 solver or output failure. Set PCAL_LOG (e.g. `info`, `debug`) for logs.
#[derive(Parser)]
#[command(name = "pcal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute an optimal (exact) or near-optimal (fptas) predictor.
    Solve(SolveArgs),
    /// Report calibration errors and payoffs of a predictor.
    Eval(EvalArgs),
    /// Solve over a list of budgets and emit one CSV row per budget.
    Sweep(SweepArgs),
    /// Emit reliability-diagram data `(p, kappa, mass)` for a predictor.
    Reliability(PredictorArgs),
    /// Check the structure of a predictor on an event-independent instance.
    VerifyStructure(VerifyArgs),
    /// Dump the discretization grid used by the fptas solver.
    Grid(GridArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Exact,
    Fptas,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance JSON file.
    instance: PathBuf,
    /// Replace the instance's ECE budget.
    #[arg(long, value_name = "EPS")]
    eps_override: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    #[arg(long, value_enum, default_value = "exact")]
    method: Method,
    /// Precision of the fptas solver, in (0, 1).
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Also write the predictor JSON to this file.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct PredictorArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    /// Predictor JSON file.
    predictor: PathBuf,
    /// Write to this file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    io: PredictorArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    /// Comma-separated budgets.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    eps: Vec<f64>,
    #[arg(long, value_enum, default_value = "exact")]
    method: Method,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    io: PredictorArgs,
    /// Certificate JSON; defaults to the closed-form one for binary-action
    /// instances.
    #[arg(long)]
    certificate: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    inst: InstanceArgs,
    /// Grid precision, in (0, 1/3).
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

/// Error with a machine-readable code and the exit status it maps to.
#[derive(Debug)]
struct Failure {
    code: String,
    message: String,
    status: u8,
}

impl Failure {
    fn input(code: &str, message: impl Into<String>) -> Failure {
        Failure { code: code.into(), message: message.into(), status: 2 }
    }

    fn output(message: impl Into<String>) -> Failure {
        Failure { code: "IO".into(), message: message.into(), status: 3 }
    }
}

impl From<pcal::Error> for Failure {
    fn from(e: pcal::Error) -> Failure {
        let status = if e.is_validation() { 2 } else { 3 };
        Failure { code: e.code().into(), message: e.to_string(), status }
    }
}

type Outcome = Result<u8, Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::input("IO", format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::input("BAD_INSTANCE", format!("malformed {what} {}: {e}", path.display())))
}

fn load_instance(args: &InstanceArgs) -> Result<Instance, Failure> {
    let raw: RawInstance = read_json(&args.instance, "instance")?;
    let inst = validate_instance(raw)?;
    let inst = match args.eps_override {
        Some(eps) => inst.with_epsilon(eps)?,
        None => inst,
    };
    info!("loaded instance with n = {}, m = {}, budget {}", inst.n(), inst.m(), inst.epsilon());
    Ok(inst)
}

fn load_predictor(path: &Path, inst: &Instance) -> Result<Predictor, Failure> {
    let repr: PredictorRepr = read_json(path, "predictor")
        .map_err(|f| Failure { code: "BAD_PREDICTOR".into(), ..f })?;
    let pred = Predictor::try_from(repr)?;
    pred.check_compatible(inst)?;
    Ok(pred)
}

fn check_method(method: Method, inst: &Instance) -> Result<(), Failure> {
    if method == Method::Exact && inst.norm().exponent().is_some_and(|t| t != 1.0) {
        return Err(Failure::input(
            "UNSUPPORTED_NORM",
            format!("the exact solver needs t = 1 or t = inf, got {}", inst.norm()),
        ));
    }
    Ok(())
}

/// Predictor and the objective value reported by the chosen solver.
fn run_solver(inst: &Instance, method: Method, delta: f64) -> Result<(Predictor, f64), Failure> {
    check_method(method, inst)?;
    match method {
        Method::Exact => {
            let sol = solve_exact(inst)?;
            Ok((sol.predictor, sol.objective))
        }
        Method::Fptas => {
            let sol = fptas_solve(inst, delta)?;
            Ok((sol.predictor, sol.objective))
        }
    }
}

#[derive(Serialize)]
struct Summary {
    method: &'static str,
    epsilon: f64,
    norm: Norm,
    objective: f64,
    payoff: f64,
    agent_payoff: serde_json::Value,
    ece: f64,
    support_size: usize,
    event_supports: Vec<usize>,
    predictor: PredictorRepr,
}

fn cmd_solve(args: &SolveArgs) -> Outcome {
    let inst = load_instance(&args.inst)?;
    let (pred, objective) = run_solver(&inst, args.method, args.delta)?;
    let repr = PredictorRepr::from(pred.clone());
    if let Some(path) = &args.output {
        let text = serde_json::to_string_pretty(&repr).expect("predictor serializes");
        fs::write(path, text + "\n")
            .map_err(|e| Failure::output(format!("cannot write {}: {e}", path.display())))?;
    }
    let summary = Summary {
        method: match args.method {
            Method::Exact => "exact",
            Method::Fptas => "fptas",
        },
        epsilon: inst.epsilon(),
        norm: inst.norm(),
        objective,
        payoff: payoff(&pred, &inst),
        agent_payoff: value_json(agent_payoff(&pred, &inst)),
        ece: ece(&pred, &inst, inst.norm()),
        support_size: pred.len(),
        event_supports: (0..inst.n()).map(|i| pred.event_support_size(i)).collect(),
        predictor: repr,
    };
    let emit = Emit::new(None);
    match args.format {
        Format::Json | Format::Text => emit.json(&summary)?,
        Format::Csv => {
            let header = ["method", "epsilon", "objective", "payoff", "agent_payoff", "ece", "support_size"];
            let row = vec![
                summary.method.to_string(),
                num(summary.epsilon),
                num(summary.objective),
                num(summary.payoff),
                num(agent_payoff(&pred, &inst)),
                num(summary.ece),
                summary.support_size.to_string(),
            ];
            emit.csv(&header, &[row])?
        }
    }
    Ok(0)
}

fn cmd_eval(args: &EvalArgs) -> Outcome {
    let inst = load_instance(&args.io.inst)?;
    let pred = load_predictor(&args.io.predictor, &inst)?;
    let norms = [("1", Norm::L1), ("2", Norm::L(2.0)), ("inf", Norm::Inf)];
    let eces: Vec<f64> = norms.iter().map(|(_, n)| ece(&pred, &inst, *n)).collect();
    let (v, w) = (payoff(&pred, &inst), agent_payoff(&pred, &inst));
    let counts = count_predictions(&pred, &inst);
    let emit = Emit::new(args.io.output.as_deref());
    match args.format {
        Format::Text => {
            let mut text = String::new();
            for ((label, _), e) in norms.iter().zip(&eces) {
                text += &format!("ece t={label}: {}\n", num(*e));
            }
            text += &format!("payoff: {}\n", num(v));
            text += &format!("agent_payoff: {}\n", num(w));
            text += &format!(
                "predictions: total {}, per event {}, per kappa {}\n",
                counts.total, counts.max_per_event, counts.max_per_kappa
            );
            emit.text(&text)?
        }
        Format::Json => emit.json(&json!({
            "ece": { "1": eces[0], "2": eces[1], "inf": eces[2] },
            "payoff": v,
            "agent_payoff": value_json(w),
            "counts": counts,
        }))?,
        Format::Csv => {
            let header = ["ece_1", "ece_2", "ece_inf", "payoff", "agent_payoff", "total", "max_per_event", "max_per_kappa"];
            let row = vec![
                num(eces[0]),
                num(eces[1]),
                num(eces[2]),
                num(v),
                num(w),
                counts.total.to_string(),
                counts.max_per_event.to_string(),
                counts.max_per_kappa.to_string(),
            ];
            emit.csv(&header, &[row])?
        }
    }
    Ok(0)
}

fn cmd_sweep(args: &SweepArgs) -> Outcome {
    let inst = load_instance(&args.inst)?;
    check_method(args.method, &inst)?;
    for &eps in &args.eps {
        inst.with_epsilon(eps)?;
    }
    let rows: Vec<Vec<String>> = args
        .eps
        .par_iter()
        .map(|&eps| {
            let inst = inst.with_epsilon(eps).expect("budget checked above");
            match run_solver(&inst, args.method, args.delta) {
                Ok((pred, _)) => vec![
                    num(eps),
                    num(payoff(&pred, &inst)),
                    num(agent_payoff(&pred, &inst)),
                    num(ece(&pred, &inst, inst.norm())),
                    "ok".into(),
                ],
                Err(f) => vec![num(eps), String::new(), String::new(), String::new(), f.code],
            }
        })
        .collect();
    let header = ["epsilon", "principal_payoff", "agent_payoff", "ece", "status"];
    Emit::new(args.output.as_deref()).csv(&header, &rows)?;
    Ok(0)
}

fn cmd_reliability(args: &PredictorArgs) -> Outcome {
    let inst = load_instance(&args.inst)?;
    let pred = load_predictor(&args.predictor, &inst)?;
    let mut rows: Vec<(f64, f64, f64)> = (0..pred.len())
        .filter_map(|k| {
            let mass = pred.marginal_at(&inst, k);
            pred.kappa_at(&inst, k).filter(|_| mass > 0.0).map(|kappa| (pred.support()[k], kappa, mass))
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows: Vec<Vec<String>> = rows.into_iter().map(|(p, k, m)| vec![num(p), num(k), num(m)]).collect();
    Emit::new(args.output.as_deref()).csv(&["p", "kappa", "marginal_mass"], &rows)?;
    Ok(0)
}

fn cmd_verify(args: &VerifyArgs) -> Outcome {
    let inst = load_instance(&args.io.inst)?;
    let pred = load_predictor(&args.io.predictor, &inst)?;
    let report = analyze_structure(&pred, &inst)?;
    let cert: Option<GammaCertificate> = match &args.certificate {
        Some(path) => Some(read_json(path, "certificate")?),
        None => binary_action_certificate(&inst).ok(),
    };
    let verdict = match &cert {
        Some(c) => Some(verify_optimality(&pred, &inst, c)?),
        None => None,
    };
    let ok = report.violations.is_empty() && verdict.as_ref().is_none_or(|v| v.all_pass());
    Emit::new(args.io.output.as_deref()).json(&json!({
        "structure": report,
        "counts": count_predictions(&pred, &inst),
        "certificate": cert,
        "verdict": verdict,
        "ok": ok,
    }))?;
    Ok(if ok { 0 } else { 1 })
}

fn cmd_grid(args: &GridArgs) -> Outcome {
    let inst = load_instance(&args.inst)?;
    let grid = build_grid(&inst, args.delta)?;
    let emit = Emit::new(args.output.as_deref());
    match args.format {
        Format::Json | Format::Text => emit.json(&grid)?,
        Format::Csv => {
            let rows: Vec<Vec<String>> =
                grid.points.iter().enumerate().map(|(k, p)| vec![k.to_string(), num(*p)]).collect();
            emit.csv(&["index", "point"], &rows)?
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("PCAL_LOG", "warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Reliability(a) => cmd_reliability(a),
        Command::VerifyStructure(a) => cmd_verify(a),
        Command::Grid(a) => cmd_grid(a),
    };
    match outcome {
        Ok(status) => ExitCode::from(status),
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(f.status)
        }
    }
}
