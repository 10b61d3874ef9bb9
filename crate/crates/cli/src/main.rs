use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rcmdp::bench::{self, ConfigLayer, ExperimentConfig, Mode, SweepAxis, TraceMode};
use rcmdp::{robust_policy_eval, AugPolicy, Error, Metric, Support};

#[derive(Parser)]
#[command(name = "rcvi", version, about = "Robust constrained value iteration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once per seed and write trace, summary, policies and manifest.
    Run(Flags),
    /// Repeat `run` across values of one axis and collect sweep.csv.
    Sweep {
        #[command(flatten)]
        flags: Flags,
        /// N, rho or eps.
        #[arg(long)]
        sweep_axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        sweep_values: Vec<f64>,
    },
    /// Robustly evaluate a saved policy document.
    Eval {
        #[command(flatten)]
        flags: Flags,
        #[arg(long)]
        policy: PathBuf,
    },
}

#[derive(Args)]
struct Flags {
    /// TOML config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset (riverswim, garnet, counterexample) or model document path.
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    rho: Option<f64>,
    /// Temperature of the kl-tilted metric.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_parser = parse_support)]
    tv_support: Option<Support>,
    #[arg(long, allow_negative_numbers = true)]
    budget: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long, conflicts_with_all = ["grid_eps", "target_eps"])]
    bins: Option<usize>,
    #[arg(long, conflicts_with = "target_eps")]
    grid_eps: Option<f64>,
    #[arg(long)]
    target_eps: Option<f64>,
    #[arg(long)]
    slack_eps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    #[arg(long, value_parser = parse_trace)]
    trace: Option<TraceMode>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    garnet_states: Option<usize>,
    #[arg(long)]
    garnet_actions: Option<usize>,
    /// Seed of the Garnet instance draw, separate from the sampling seed.
    #[arg(long)]
    garnet_seed: Option<u64>,
}

fn parse_support(s: &str) -> Result<Support, String> {
    match s {
        "simplex" => Ok(Support::Simplex),
        "nominal" => Ok(Support::Nominal),
        _ => Err(format!("expected simplex or nominal, got `{s}`")),
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "sampled" => Ok(Mode::Sampled),
        "exact" => Ok(Mode::Exact),
        _ => Err(format!("expected sampled or exact, got `{s}`")),
    }
}

fn parse_trace(s: &str) -> Result<TraceMode, String> {
    match s {
        "per-iteration" => Ok(TraceMode::PerIteration),
        "per-stage" => Ok(TraceMode::PerStage),
        "final-only" | "final" => Ok(TraceMode::FinalOnly),
        _ => Err(format!("expected per-iteration, per-stage or final-only, got `{s}`")),
    }
}

impl Flags {
    fn resolve(&self) -> rcmdp::Result<ExperimentConfig> {
        let file = self.config.as_deref().map(ConfigLayer::from_file).transpose()?;
        let layer = ConfigLayer {
            env: self.env.clone(),
            metric: self.metric,
            rho: self.rho,
            temperature: self.temperature,
            tv_support: self.tv_support,
            budget: self.budget,
            horizon: self.horizon,
            samples: self.samples,
            bins: self.bins,
            grid_eps: self.grid_eps,
            target_eps: self.target_eps,
            slack_eps: self.slack_eps,
            seed: self.seed,
            seeds: self.seeds,
            mode: self.mode,
            trace: self.trace,
            iterations: self.iterations,
            out: self.out.clone(),
            garnet_states: self.garnet_states,
            garnet_actions: self.garnet_actions,
            garnet_seed: self.garnet_seed,
        };
        ExperimentConfig::resolve(file.as_ref(), &layer)
    }
}

fn main() -> ExitCode {
    bench::init_threads_from_env();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rcvi: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Document(_) => 2,
        Error::Invariant(_) => 3,
        _ => 1,
    }
}

fn dispatch(command: Command) -> rcmdp::Result<()> {
    // A closed stdout (for example `| head`) is not an error worth reporting.
    let mut out = std::io::stdout().lock();
    match command {
        Command::Run(flags) => {
            let config = flags.resolve()?;
            let outcome = bench::run(&config)?;
            for r in &outcome.results {
                let _ = writeln!(
                    out,
                    "seed {}: robust reward {}, robust utility {}, violation {}",
                    r.seed, r.report.robust_reward_value, r.report.robust_utility_value, r.report.violation
                );
            }
            let _ = writeln!(out, "wrote {}", config.out.display());
        }
        Command::Sweep { flags, sweep_axis, sweep_values } => {
            let config = flags.resolve()?;
            bench::sweep(&config, sweep_axis, &sweep_values)?;
            let _ = writeln!(out, "wrote {}", config.out.join("sweep.csv").display());
        }
        Command::Eval { flags, policy } => {
            let config = flags.resolve()?;
            let text = std::fs::read_to_string(&policy)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", policy.display())))?;
            let policy = AugPolicy::from_json(&text)?;
            let mdp = config.build_model()?;
            let report = robust_policy_eval(&mdp, &policy, &config.spec())?;
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
