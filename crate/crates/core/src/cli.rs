//! Command-line surface.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 inference did
//! not converge (the report is still written).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::coords::Coordinates;
use crate::engine::{run_inference, EngineConfig, Schedule};
use crate::error::{Error, Result};
use crate::model::{build_factor_graph, build_model, parse_model, DiscreteModel, DEFAULT_FLOOR};
use crate::objective::{bethe_free_energy, local_adjusted_objective, num, InferenceMode, ObjectiveReport};
use crate::oracle::{degenerate_scheme_probe, validation_suite, Fault};
use crate::planner::{condition_on_evidence, plan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bethe-aif", version, about = "Discrete Active Inference on region-extended Bethe coordinates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run inference and select actions.
    Plan(PlanArgs),
    /// Report the objective with its breakdown.
    Evaluate(EvaluateArgs),
    /// Run the seeded identity suite.
    Validate(ValidateArgs),
    /// Emit one JSON line per sweep.
    Trace(RunArgs),
    /// Diagnose the channel-free observation block of a model.
    ProbeDegeneracy(ProbeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "active-inference")]
    pub mode: InferenceMode,
    #[arg(long, default_value_t = 5000)]
    pub sweeps: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol_belief: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub tol_residual: f64,
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    #[arg(long, default_value = "forward-backward")]
    pub schedule: Schedule,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Clamp an observation, as `t=y`; repeatable.
    #[arg(long = "observe", value_parser = parse_observation)]
    pub observe: Vec<(usize, usize)>,
    /// Clamp the initial state.
    #[arg(long)]
    pub x0: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Evaluate these coordinates instead of running inference.
    #[arg(long)]
    pub coords: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_observation(s: &str) -> std::result::Result<(usize, usize), String> {
    let (t, y) = s.split_once('=').ok_or_else(|| format!("expected t=y, got `{s}`"))?;
    let t = t.trim().parse().map_err(|e| format!("bad time index `{t}`: {e}"))?;
    let y = y.trim().parse().map_err(|e| format!("bad observation `{y}`: {e}"))?;
    Ok((t, y))
}

pub fn load_model(path: &Path) -> Result<DiscreteModel> {
    let text = fs::read_to_string(path)?;
    build_model(&parse_model(&text)?, DEFAULT_FLOOR)
}

fn engine_config(run: &RunArgs) -> Result<EngineConfig> {
    let cfg = EngineConfig {
        max_sweeps: run.sweeps,
        tol_belief: run.tol_belief,
        tol_residual: run.tol_residual,
        damping: run.damping,
        schedule: run.schedule,
        mode: run.mode,
        ..Default::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
        }
    }
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

fn report_object(r: &ObjectiveReport) -> Value {
    Value::Object(r.flatten().into_iter().collect())
}

fn cmd_plan(args: &PlanArgs) -> Result<i32> {
    let mut model = load_model(&args.run.model)?;
    let observed: BTreeMap<usize, usize> = args.observe.iter().copied().collect();
    if !observed.is_empty() || args.x0.is_some() {
        model = condition_on_evidence(&model, &observed, args.x0)?;
    }
    let cfg = engine_config(&args.run)?;
    let result = plan(&model, &cfg)?;
    let mut doc = result.to_json();
    doc["mode"] = json!(cfg.mode.name());
    doc["seed"] = json!(args.run.seed);
    emit(args.run.out.as_deref(), &pretty(&doc))?;
    Ok(if result.converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32> {
    let model = load_model(&args.run.model)?;
    let cfg = engine_config(&args.run)?;
    let graph = build_factor_graph(&model);
    let (coords, converged) = match &args.coords {
        Some(path) => {
            let coords = Coordinates::from_json(&fs::read_to_string(path)?)?;
            if coords.cards != model.cards {
                return Err(Error::DimensionMismatch {
                    field: "coords.cards".into(),
                    expected: format!("{:?}", model.cards),
                    found: format!("{:?}", coords.cards),
                });
            }
            coords.check_normalized(1e-9)?;
            (coords, None)
        }
        None => {
            let (coords, _, trace) = run_inference(&model, &cfg)?;
            (coords, Some(trace))
        }
    };
    let report = local_adjusted_objective(&model, &coords, &graph, cfg.mode);
    let bethe = bethe_free_energy(&model, &coords, &graph);
    let mut doc = json!({
        "mode": cfg.mode.name(),
        "objective": report_object(&report),
        "bethe_free_energy": num(bethe.total),
        "seed": args.run.seed,
    });
    if let Some(trace) = &converged {
        doc["converged"] = json!(trace.converged);
        doc["sweeps"] = json!(trace.sweeps);
    }
    emit(args.run.out.as_deref(), &pretty(&doc))?;
    Ok(match converged {
        Some(t) if !t.converged => EXIT_NOT_CONVERGED,
        _ => EXIT_OK,
    })
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let fault = args.inject_fault.then_some(Fault::FlipTheoremSign);
    let rows = validation_suite(args.samples, args.seed, fault)?;
    let all = rows.iter().all(|r| r.pass);
    let table: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "check": r.check,
                "samples": r.samples,
                "max_gap": num(r.max_gap),
                "tolerance": num(r.tolerance),
                "pass": r.pass,
            })
        })
        .collect();
    let doc = json!({ "seed": args.seed, "pass": all, "checks": table });
    emit(args.out.as_deref(), &pretty(&doc))?;
    for r in rows.iter().filter(|r| !r.pass) {
        eprintln!("FAIL {} max_gap={:e} tolerance={:e}", r.check, r.max_gap, r.tolerance);
    }
    Ok(if all { EXIT_OK } else { EXIT_INPUT })
}

fn cmd_trace(args: &RunArgs) -> Result<i32> {
    let model = load_model(&args.model)?;
    let cfg = engine_config(args)?;
    let (_, _, trace) = run_inference(&model, &cfg)?;
    emit(args.out.as_deref(), &trace.to_lines())?;
    Ok(if trace.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_probe(args: &ProbeArgs) -> Result<i32> {
    let model = load_model(&args.model)?;
    let r = degenerate_scheme_probe(&model);
    let witness = r.separability.witness.map(|w| {
        json!({ "y": w.y, "y2": w.y2, "c": w.c, "c2": w.c2, "mixed": num(w.mixed) })
    });
    let verdict = if !r.separability.separable {
        "infeasible"
    } else if r.flat_gap < 1e-12 {
        "flat"
    } else {
        "feasible"
    };
    let doc = json!({
        "verdict": verdict,
        "separable": r.separability.separable,
        "witness": witness,
        "infeasibility_residual": num(r.infeasibility_residual),
        "flat_objectives": [num(r.flat_objectives.0), num(r.flat_objectives.1)],
        "flat_gap": num(r.flat_gap),
        "flat_distance": num(r.flat_distance),
        "random_spread": num(r.random_spread),
    });
    emit(args.out.as_deref(), &pretty(&doc))?;
    Ok(EXIT_OK)
}

/// Dispatches a parsed command; errors map to exit code 1.
pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Trace(a) => cmd_trace(a),
        Command::ProbeDegeneracy(a) => cmd_probe(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_flag_parses() {
        assert_eq!(parse_observation("2=1").unwrap(), (2, 1));
        assert!(parse_observation("2").is_err());
        assert!(parse_observation("a=1").is_err());
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "bethe-aif", "plan", "--model", "m.json", "--mode", "maxamb", "--sweeps", "10", "--observe", "1=0",
        ])
        .unwrap();
        match cli.command {
            Command::Plan(p) => {
                assert_eq!(p.run.mode, InferenceMode::MaxAmb);
                assert_eq!(p.run.sweeps, 10);
                assert_eq!(p.observe, vec![(1, 0)]);
            }
            _ => panic!("wrong command"),
        }
        assert!(Cli::try_parse_from(["bethe-aif", "plan", "--model", "m", "--mode", "map"]).is_err());
    }
}
