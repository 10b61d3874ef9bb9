//! Experiment runner: resolves a configuration, solves once per seed and
//! writes the trace, summary, policies and a manifest.
//!
//! Output files in the run directory:
//!
//! * `trace.csv`: `seed, stage_or_iter, robust_reward_value,
//!   robust_utility_value, violation, reward_per_step, utility_per_step`
//! * `summary.csv`: one row per seed
//! * `policy-<seed>.json`: the final policy document
//! * `manifest.json`: resolved config, hash, build id and timestamp
//!
//! Everything except the manifest is a pure function of config and seed.

pub mod config;
mod run;

pub use config::{ConfigLayer, ExperimentConfig, GridChoice, Mode, TraceMode, PRESETS};
pub use run::{
    execute, run, summary_record, sweep, write_summary, write_trace, RunOutcome, SeedResult, SweepAxis, TraceRow,
    ITERATION_DEFINITION, SUB_OPT_LIMIT, SUMMARY_HEADER, TRACE_HEADER,
};

/// Caps the global rayon pool from `RCVI_THREADS` when it holds a positive
/// integer. Returns the cap that was applied.
pub fn init_threads_from_env() -> Option<usize> {
    let n = std::env::var("RCVI_THREADS").ok()?.trim().parse::<usize>().ok().filter(|&n| n > 0)?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok()?;
    Some(n)
}
