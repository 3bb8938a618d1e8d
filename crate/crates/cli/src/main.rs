//! `byzfl` command-line runner: single runs, parameter sweeps and the
//! verification suites.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use byzfl::config::{RateSpec, StepsSpec};
use byzfl::server::rounds_to_gap;
use byzfl::verify::Suite;
use byzfl::{Aggregator, Error, Experiment, ExperimentConfig, TraceRecord, WeiszfeldConfig};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

const TRACE_FILE: &str = "trace.jsonl";
const SUMMARY_FILE: &str = "summary.csv";
const CONFIG_FILE: &str = "config.json";
const COMPARISON_FILE: &str = "comparison.csv";
const SWEEP_GAP: f64 = 1e-6;

#[derive(Parser)]
#[command(
    name = "byzfl",
    version,
    about = "Byzantine-robust federated learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its trace, summary and resolved config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment per value of a parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated values, e.g. `0,0.2,0.4` or `geomed,mean`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the property suites and report pass/fail per property.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Beta,
    #[value(name = "K")]
    K,
    Eta,
    Aggregator,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Geomed,
    Assumptions,
    Bounds,
    All,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Solver { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure_threads().and_then(|()| match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, &out),
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => cmd_sweep(&config, param, &values, &out),
        Command::Verify { suite } => cmd_verify(suite),
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Sizes the global rayon pool from `BYZFL_THREADS` (unset or 0 = automatic).
fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("BYZFL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().map_err(|_| {
        Failure::config(format!(
            "BYZFL_THREADS must be a non-negative integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::config(format!("cannot size thread pool: {e}")))
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SummaryRow {
    t: usize,
    loss: f64,
    gap: f64,
    bound1: Option<f64>,
    bound2: Option<f64>,
    accuracy: Option<f64>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(path, e))
}

fn write_artifacts(exp: &Experiment, trace: &[TraceRecord], out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let mut lines = String::new();
    for record in trace {
        lines.push_str(&serde_json::to_string(record).expect("trace record serializes"));
        lines.push('\n');
    }
    write_file(&out.join(TRACE_FILE), &lines)?;
    write_file(&out.join(CONFIG_FILE), &(exp.config().to_json() + "\n"))?;

    let summary = out.join(SUMMARY_FILE);
    let mut writer =
        csv::Writer::from_path(&summary).map_err(|e| Failure::io(&summary, e.into()))?;
    for r in trace {
        writer
            .serialize(SummaryRow {
                t: r.t,
                loss: r.global_loss,
                gap: r.optimality_gap,
                bound1: r.theorem1_bound,
                bound2: r.theorem2_bound,
                accuracy: r.test_accuracy,
            })
            .map_err(|e| Failure::io(&summary, e.into()))?;
    }
    writer.flush().map_err(|e| Failure::io(&summary, e))
}

fn execute(config: &ExperimentConfig, out: &Path) -> Result<Vec<TraceRecord>, Failure> {
    let exp = Experiment::new(config)?;
    for warning in exp.warnings() {
        eprintln!("warning: {warning}");
    }
    let trace = exp.run()?;
    write_artifacts(&exp, &trace, out)?;
    Ok(trace)
}

fn cmd_run(config: &Path, seed: Option<u64>, out: &Path) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let trace = execute(&cfg, out)?;
    if let Some(last) = trace.last() {
        println!(
            "t = {}: loss {:e}, gap {:e}",
            last.t, last.global_loss, last.optimality_gap
        );
    }
    Ok(())
}

fn parse_aggregator(value: &str, beta: f64) -> Result<Aggregator, Failure> {
    match value {
        "geomed" | "geometric_median" => {
            Ok(Aggregator::GeometricMedian(WeiszfeldConfig::default()))
        }
        "mean" => Ok(Aggregator::Mean),
        "coordinate_median" | "median" => Ok(Aggregator::CoordinateMedian),
        "trimmed_mean" => Ok(Aggregator::TrimmedMean { fraction: beta }),
        other => Err(Failure::config(format!(
            "unknown aggregator {other:?}; expected geomed, mean, coordinate_median or trimmed_mean"
        ))),
    }
}

fn apply(
    base: &ExperimentConfig,
    param: SweepParam,
    value: &str,
) -> Result<ExperimentConfig, Failure> {
    let mut cfg = base.clone();
    let number = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Failure::config(format!("sweep value {v:?} is not a number")))
    };
    match param {
        SweepParam::Beta => cfg.beta = number(value)?,
        SweepParam::Eta => cfg.schedule.rate = RateSpec::Constant(number(value)?),
        SweepParam::K => {
            let k = value.trim().parse::<usize>().map_err(|_| {
                Failure::config(format!("sweep value {value:?} is not a step count"))
            })?;
            cfg.schedule.steps = StepsSpec::Constant(k);
        }
        SweepParam::Aggregator => cfg.aggregator = parse_aggregator(value.trim(), cfg.beta)?,
    }
    Ok(cfg)
}

fn param_name(param: SweepParam) -> &'static str {
    match param {
        SweepParam::Beta => "beta",
        SweepParam::K => "K",
        SweepParam::Eta => "eta",
        SweepParam::Aggregator => "aggregator",
    }
}

#[derive(Serialize)]
struct ComparisonRow<'a> {
    param: &'a str,
    value: &'a str,
    rounds: usize,
    final_loss: f64,
    final_gap: f64,
    rounds_to_gap_1e_6: Option<usize>,
    final_bound1: Option<f64>,
    final_bound2: Option<f64>,
}

fn cmd_sweep(
    config: &Path,
    param: SweepParam,
    values: &[String],
    out: &Path,
) -> Result<(), Failure> {
    let base = load_config(config)?;
    let name = param_name(param);
    let configs = values
        .iter()
        .map(|v| apply(&base, param, v))
        .collect::<Result<Vec<_>, _>>()?;
    let traces: Vec<Result<Vec<TraceRecord>, Failure>> = configs
        .par_iter()
        .zip(values)
        .map(|(cfg, value)| execute(cfg, &out.join(format!("{name}_{}", value.trim()))))
        .collect();

    let comparison = out.join(COMPARISON_FILE);
    let mut writer =
        csv::Writer::from_path(&comparison).map_err(|e| Failure::io(&comparison, e.into()))?;
    for (trace, value) in traces.into_iter().zip(values) {
        let trace = trace?;
        let last = trace.last().expect("runs have at least one round");
        let row = ComparisonRow {
            param: name,
            value: value.trim(),
            rounds: trace.len(),
            final_loss: last.global_loss,
            final_gap: last.optimality_gap,
            rounds_to_gap_1e_6: rounds_to_gap(&trace, SWEEP_GAP),
            final_bound1: last.theorem1_bound,
            final_bound2: last.theorem2_bound,
        };
        println!("{name} = {}: gap {:e}", row.value, row.final_gap);
        writer
            .serialize(row)
            .map_err(|e| Failure::io(&comparison, e.into()))?;
    }
    writer.flush().map_err(|e| Failure::io(&comparison, e))
}

fn cmd_verify(suite: SuiteArg) -> Result<(), Failure> {
    let suites: &[Suite] = match suite {
        SuiteArg::Geomed => &[Suite::Geomed],
        SuiteArg::Assumptions => &[Suite::Assumptions],
        SuiteArg::Bounds => &[Suite::Bounds],
        SuiteArg::All => &Suite::ALL,
    };
    let mut failures = Vec::new();
    for s in suites {
        for outcome in s.run() {
            let status = if outcome.passed { "PASS" } else { "FAIL" };
            println!(
                "{status}  [{}] {} ({} cases): {}",
                s.name(),
                outcome.name,
                outcome.cases,
                outcome.detail
            );
            if !outcome.passed {
                failures.push(outcome);
            }
        }
    }
    if failures.is_empty() {
        return Ok(());
    }
    for f in &failures {
        eprintln!("counterexample for {}: {}", f.name, f.detail);
    }
    Err(Failure {
        code: 1,
        message: format!(
            "{} propert{} failed",
            failures.len(),
            if failures.len() == 1 { "y" } else { "ies" }
        ),
    })
}
