use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, Mode, TraceMode};
use crate::error::{Error, Result};
use crate::estimation::EmpiricalModel;
use crate::eval::{exhaustive_optimal_tiny, robust_policy_eval, EvalReport};
use crate::grid::BudgetGrid;
use crate::mdp::TabularCmdp;
use crate::rcvi::{exact_mode, solve_on_pool, Solution};
use crate::uncertainty::UncertaintySpec;

/// Sub-optimality is only reported when `H * |S| * |C| * |A|` is at most this.
pub const SUB_OPT_LIMIT: usize = 10_000;

/// Recorded in the manifest so the x-axis of a trace is unambiguous.
pub const ITERATION_DEFINITION: &str = "sampled mode: iteration i re-solves on a pool holding i fresh blocks of \
`samples` draws per (h, s, a); each row evaluates that solve's policy under the true nominal model. \
per-stage rows read the final solve's tables at the initial state and projected budget.";

pub const TRACE_HEADER: [&str; 7] = [
    "seed",
    "stage_or_iter",
    "robust_reward_value",
    "robust_utility_value",
    "violation",
    "reward_per_step",
    "utility_per_step",
];

pub const SUMMARY_HEADER: [&str; 9] =
    ["config_hash", "seed", "n", "rho", "metric", "robust_reward", "robust_utility", "violation", "sub_opt"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub seed: u64,
    pub stage_or_iter: usize,
    pub robust_reward_value: f64,
    pub robust_utility_value: f64,
    pub violation: f64,
    pub reward_per_step: f64,
    pub utility_per_step: f64,
}

impl TraceRow {
    fn new(seed: u64, at: usize, reward: f64, utility: f64, steps: usize) -> Self {
        let steps = steps.max(1) as f64;
        TraceRow {
            seed,
            stage_or_iter: at,
            robust_reward_value: reward,
            robust_utility_value: utility,
            violation: (-utility).max(0.0),
            reward_per_step: reward / steps,
            utility_per_step: utility / steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    /// Samples per cell behind the final solve; `None` in exact mode.
    pub samples: Option<u64>,
    pub report: EvalReport,
    pub trace: Vec<TraceRow>,
    pub solution: Solution,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub results: Vec<SeedResult>,
}

/// Runs every seed of `config` and writes the artifacts into `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    let outcome = execute(config)?;
    write_artifacts(&outcome)?;
    Ok(outcome)
}

/// Runs every seed without touching the filesystem.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let mdp = config.build_model()?;
    let violations = mdp.validate();
    if let Some(first) = violations.first() {
        return Err(Error::Invariant(format!("model: {first} ({} violations)", violations.len())));
    }
    let grid = config.build_grid()?;
    let spec = config.spec();
    spec.validate()?;
    let reference = sub_opt_reference(&mdp, &spec, &grid)?;
    let results = (0..config.seeds as u64)
        .into_par_iter()
        .map(|i| run_seed(config, &mdp, &spec, &grid, config.seed + i, reference))
        .collect::<Result<Vec<_>>>()?;
    for r in &results {
        check_outputs(r, config.horizon)?;
    }
    Ok(RunOutcome { config: config.clone(), config_hash: config.hash(), results })
}

fn sub_opt_reference(mdp: &TabularCmdp, spec: &UncertaintySpec, grid: &BudgetGrid) -> Result<Option<f64>> {
    let work = mdp.horizon() * mdp.n_states() * grid.len() * mdp.n_actions();
    if work > SUB_OPT_LIMIT {
        return Ok(None);
    }
    let (_, best) = exhaustive_optimal_tiny(mdp, spec, grid)?;
    Ok(Some(best.robust_reward_value))
}

fn run_seed(
    config: &ExperimentConfig,
    mdp: &TabularCmdp,
    spec: &UncertaintySpec,
    grid: &BudgetGrid,
    seed: u64,
    reference: Option<f64>,
) -> Result<SeedResult> {
    let horizon = mdp.horizon();
    let mut trace = Vec::new();
    let (solution, samples) = match config.mode {
        Mode::Exact => (exact_mode(mdp, spec, grid, config.slack_eps)?, None),
        Mode::Sampled => {
            let mut pool = EmpiricalModel::sample(mdp, config.samples, seed)?;
            let mut solution = solve_on_pool(mdp, &pool, spec, grid, config.slack_eps)?;
            for it in 1..=config.iterations {
                if it > 1 {
                    pool.add_round(mdp, config.samples, seed)?;
                    solution = solve_on_pool(mdp, &pool, spec, grid, config.slack_eps)?;
                }
                if config.trace == TraceMode::PerIteration && it < config.iterations {
                    let rep = robust_policy_eval(mdp, &solution.policy, spec)?;
                    trace.push(TraceRow::new(seed, it, rep.robust_reward_value, rep.robust_utility_value, horizon));
                }
            }
            (solution, Some(pool.n_samples()))
        }
    };
    let mut report = robust_policy_eval(mdp, &solution.policy, spec)?;
    if let Some(best) = reference {
        report = report.with_reference(best);
    }
    match config.trace {
        TraceMode::PerIteration | TraceMode::FinalOnly => {
            let at = if config.mode == Mode::Sampled { config.iterations } else { 1 };
            trace.push(TraceRow::new(seed, at, report.robust_reward_value, report.robust_utility_value, horizon));
        }
        TraceMode::PerStage => {
            let c = grid.project_index(mdp.budget());
            let s = mdp.initial_state();
            for h in 0..horizon {
                let t = &solution.tables;
                trace.push(TraceRow::new(seed, h + 1, t.v_r(h, s, c), t.v_g(h, s, c), horizon - h));
            }
        }
    }
    Ok(SeedResult { seed, samples, report, trace, solution })
}

fn check_outputs(r: &SeedResult, horizon: usize) -> Result<()> {
    let cap = horizon as f64 + 1e-9;
    for row in &r.trace {
        let ok = row.violation >= 0.0 && row.robust_reward_value.abs() <= cap && row.robust_utility_value.abs() <= cap;
        if !ok {
            return Err(Error::Invariant(format!("trace row out of range: {row:?}")));
        }
    }
    let rep = &r.report;
    if rep.violation < 0.0 || rep.robust_reward_value.abs() > cap || rep.robust_utility_value.abs() > cap {
        return Err(Error::Invariant(format!("report out of range: {rep:?}")));
    }
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

pub fn write_trace(path: &Path, results: &[SeedResult]) -> Result<()> {
    let mut rows: Vec<&TraceRow> = results.iter().flat_map(|r| &r.trace).collect();
    rows.sort_by_key(|r| (r.seed, r.stage_or_iter));
    let mut out = csv_writer(path)?;
    out.write_record(TRACE_HEADER)?;
    for r in rows {
        out.write_record([
            r.seed.to_string(),
            r.stage_or_iter.to_string(),
            r.robust_reward_value.to_string(),
            r.robust_utility_value.to_string(),
            r.violation.to_string(),
            r.reward_per_step.to_string(),
            r.utility_per_step.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One summary record per seed, in the column order of [`SUMMARY_HEADER`].
pub fn summary_record(hash: &str, config: &ExperimentConfig, r: &SeedResult) -> Vec<String> {
    let rep = &r.report;
    vec![
        hash.to_string(),
        r.seed.to_string(),
        r.samples.map(|n| n.to_string()).unwrap_or_default(),
        config.rho.to_string(),
        config.metric.as_str().to_string(),
        rep.robust_reward_value.to_string(),
        rep.robust_utility_value.to_string(),
        rep.violation.to_string(),
        rep.sub_opt.map(|x| x.to_string()).unwrap_or_default(),
    ]
}

pub fn write_summary(path: &Path, outcome: &RunOutcome) -> Result<()> {
    let mut out = csv_writer(path)?;
    out.write_record(SUMMARY_HEADER)?;
    let mut results: Vec<&SeedResult> = outcome.results.iter().collect();
    results.sort_by_key(|r| r.seed);
    for r in results {
        out.write_record(summary_record(&outcome.config_hash, &outcome.config, r))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    config_hash: &'a str,
    build: String,
    created_unix: u64,
    iteration_definition: &'a str,
    threads: usize,
    seeds: Vec<u64>,
}

fn build_id() -> String {
    let describe = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into());
    format!("{} {}", env!("CARGO_PKG_VERSION"), describe)
}

fn write_artifacts(outcome: &RunOutcome) -> Result<()> {
    let dir = &outcome.config.out;
    fs::create_dir_all(dir)?;
    write_trace(&dir.join("trace.csv"), &outcome.results)?;
    write_summary(&dir.join("summary.csv"), outcome)?;
    for r in &outcome.results {
        fs::write(dir.join(format!("policy-{}.json", r.seed)), r.solution.policy.to_json())?;
    }
    let manifest = Manifest {
        config: &outcome.config,
        config_hash: &outcome.config_hash,
        build: build_id(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        iteration_definition: ITERATION_DEFINITION,
        threads: rayon::current_num_threads(),
        seeds: outcome.results.iter().map(|r| r.seed).collect(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Samples,
    Rho,
    Eps,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "n" | "samples" => Ok(SweepAxis::Samples),
            "rho" => Ok(SweepAxis::Rho),
            "eps" | "slack_eps" | "slack-eps" => Ok(SweepAxis::Eps),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Samples => "N",
            SweepAxis::Rho => "rho",
            SweepAxis::Eps => "eps",
        }
    }

    fn apply(self, config: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = config.clone();
        match self {
            SweepAxis::Samples => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::Config(format!("sample size {value} is not a positive integer")));
                }
                c.samples = value as u64;
            }
            SweepAxis::Rho => c.rho = value,
            SweepAxis::Eps => c.slack_eps = value,
        }
        c.out = config.out.join(format!("{}-{value}", self.name()));
        c.validate()?;
        Ok(c)
    }
}

/// Runs `config` once per axis value (each into its own subdirectory) and
/// writes `sweep.csv` with the summary columns prefixed by `axis,value`.
pub fn sweep(config: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<RunOutcome>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let outcomes = values.iter().map(|&v| run(&axis.apply(config, v)?)).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&config.out)?;
    let mut out = csv_writer(&config.out.join("sweep.csv"))?;
    let header: Vec<&str> = ["axis", "value"].into_iter().chain(SUMMARY_HEADER).collect();
    out.write_record(header)?;
    for (value, outcome) in values.iter().zip(&outcomes) {
        let mut results: Vec<&SeedResult> = outcome.results.iter().collect();
        results.sort_by_key(|r| r.seed);
        for r in results {
            let mut rec = vec![axis.name().to_string(), value.to_string()];
            rec.extend(summary_record(&outcome.config_hash, &outcome.config, r));
            out.write_record(rec)?;
        }
    }
    out.flush()?;
    Ok(outcomes)
}
