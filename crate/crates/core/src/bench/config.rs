//! Experiment configuration: presets, TOML files and flag overrides.
//!
//! Layers are merged field by field, later layers winning:
//! built-in defaults, the environment preset, the config file, then flags.
//! The three grid knobs (`bins`, `grid_eps`, `target_eps`) are treated as
//! one setting, so a layer that names any of them replaces the others.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{self, GarnetParams};
use crate::error::{Error, Result};
use crate::grid::BudgetGrid;
use crate::mdp::TabularCmdp;
use crate::uncertainty::{Metric, Support, UncertaintySpec};

pub const PRESETS: [&str; 3] = ["riverswim", "garnet", "counterexample"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Estimate the nominal kernel from generative-model samples.
    Sampled,
    /// Use the model's own kernel.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceMode {
    /// One row per sampling round (a fresh block of samples is added to the
    /// pool each round and the problem is re-solved).
    PerIteration,
    /// One row per stage of the final solve, read off its value tables.
    PerStage,
    /// One row per seed.
    FinalOnly,
}

/// How the budget axis is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridChoice {
    /// Number of equal intervals over `[-H, H]`.
    Bins(usize),
    /// Explicit grid step.
    Step(f64),
    /// Target accuracy; the step is `target / H`.
    TargetEps(f64),
}

impl GridChoice {
    pub fn build(&self, horizon: usize) -> Result<BudgetGrid> {
        match *self {
            GridChoice::Bins(b) => BudgetGrid::with_bins(horizon, b),
            GridChoice::Step(step) => BudgetGrid::new(horizon, step),
            GridChoice::TargetEps(eps) => BudgetGrid::for_accuracy(horizon, eps),
        }
    }
}

/// One partially specified configuration layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    /// Preset name or path to a model document.
    pub env: Option<String>,
    pub metric: Option<Metric>,
    pub rho: Option<f64>,
    pub temperature: Option<f64>,
    pub tv_support: Option<Support>,
    /// Cost cap for the cost-based presets; utility threshold otherwise.
    pub budget: Option<f64>,
    pub horizon: Option<usize>,
    pub samples: Option<u64>,
    pub bins: Option<usize>,
    pub grid_eps: Option<f64>,
    pub target_eps: Option<f64>,
    pub slack_eps: Option<f64>,
    pub seed: Option<u64>,
    pub seeds: Option<usize>,
    pub mode: Option<Mode>,
    pub trace: Option<TraceMode>,
    pub iterations: Option<usize>,
    pub out: Option<PathBuf>,
    pub garnet_states: Option<usize>,
    pub garnet_actions: Option<usize>,
    pub garnet_seed: Option<u64>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl ConfigLayer {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// `self` with every field set in `top` replaced.
    pub fn merged(mut self, top: &ConfigLayer) -> Self {
        if top.bins.is_some() || top.grid_eps.is_some() || top.target_eps.is_some() {
            self.bins = top.bins;
            self.grid_eps = top.grid_eps;
            self.target_eps = top.target_eps;
        }
        overlay!(
            self,
            top,
            env,
            metric,
            rho,
            temperature,
            tv_support,
            budget,
            horizon,
            samples,
            slack_eps,
            seed,
            seeds,
            mode,
            trace,
            iterations,
            out,
            garnet_states,
            garnet_actions,
            garnet_seed
        );
        self
    }

    /// Built-in values for a preset name; empty for a model file.
    pub fn preset(env: &str) -> Self {
        match env {
            "riverswim" => ConfigLayer {
                metric: Some(Metric::Kl),
                rho: Some(0.05),
                horizon: Some(envs::RIVERSWIM_HORIZON),
                samples: Some(1000),
                bins: Some(10),
                slack_eps: Some(0.05),
                budget: Some(envs::RIVERSWIM_COST_BUDGET),
                ..Default::default()
            },
            "garnet" => ConfigLayer {
                metric: Some(Metric::Kl),
                rho: Some(0.05),
                horizon: Some(1000),
                samples: Some(1000),
                bins: Some(20),
                slack_eps: Some(0.05),
                budget: Some(15.0),
                garnet_states: Some(10),
                garnet_actions: Some(5),
                garnet_seed: Some(0),
                ..Default::default()
            },
            "counterexample" => ConfigLayer {
                metric: Some(Metric::Tv),
                rho: Some(0.2),
                tv_support: Some(Support::Nominal),
                mode: Some(Mode::Exact),
                horizon: Some(3),
                budget: Some(1.0),
                bins: Some(6),
                slack_eps: Some(1e-6),
                ..Default::default()
            },
            _ => ConfigLayer::default(),
        }
    }

    fn defaults() -> Self {
        ConfigLayer {
            metric: Some(Metric::Kl),
            rho: Some(0.05),
            temperature: Some(1.0),
            tv_support: Some(Support::Simplex),
            samples: Some(1000),
            bins: Some(10),
            slack_eps: Some(0.05),
            seed: Some(0),
            seeds: Some(1),
            mode: Some(Mode::Sampled),
            trace: Some(TraceMode::PerIteration),
            iterations: Some(1),
            out: Some(PathBuf::from("out")),
            garnet_states: Some(10),
            garnet_actions: Some(5),
            garnet_seed: Some(0),
            ..Default::default()
        }
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: String,
    pub metric: Metric,
    pub rho: f64,
    pub temperature: f64,
    pub tv_support: Support,
    pub budget: f64,
    pub horizon: usize,
    pub samples: u64,
    pub grid: GridChoice,
    pub slack_eps: f64,
    pub seed: u64,
    pub seeds: usize,
    pub mode: Mode,
    pub trace: TraceMode,
    pub iterations: usize,
    pub out: PathBuf,
    pub garnet_states: usize,
    pub garnet_actions: usize,
    pub garnet_seed: u64,
}

impl ExperimentConfig {
    /// Resolves `defaults < preset < file < flags`. The preset is chosen by
    /// the `env` named in the file or flags.
    pub fn resolve(file: Option<&ConfigLayer>, flags: &ConfigLayer) -> Result<Self> {
        let user = file.cloned().unwrap_or_default().merged(flags);
        let env =
            user.env.clone().ok_or_else(|| Error::Config("no environment given (preset name or model file)".into()))?;
        let file_model =
            if PRESETS.contains(&env.as_str()) { None } else { Some(TabularCmdp::from_json(&read_model(&env)?)?) };
        let mut layer = ConfigLayer::defaults().merged(&ConfigLayer::preset(&env));
        if let Some(m) = &file_model {
            layer.horizon = Some(m.horizon());
            layer.budget = Some(m.budget());
        }
        let layer = layer.merged(&user);
        if let (Some(m), Some(h)) = (&file_model, layer.horizon) {
            if h != m.horizon() {
                return Err(Error::Config(format!("model file has horizon {}, config asks for {h}", m.horizon())));
            }
        }
        if env == "counterexample" && layer.horizon != Some(3) {
            return Err(Error::Config("the counterexample has a fixed horizon of 3".into()));
        }
        let need = |name: &str| Error::Config(format!("missing `{name}`"));
        let grid = match (layer.bins, layer.grid_eps, layer.target_eps) {
            (Some(b), None, None) => GridChoice::Bins(b),
            (None, Some(e), None) => GridChoice::Step(e),
            (None, None, Some(t)) => GridChoice::TargetEps(t),
            _ => return Err(Error::Config("set exactly one of bins, grid_eps, target_eps".into())),
        };
        let cfg = ExperimentConfig {
            env,
            metric: layer.metric.ok_or_else(|| need("metric"))?,
            rho: layer.rho.ok_or_else(|| need("rho"))?,
            temperature: layer.temperature.ok_or_else(|| need("temperature"))?,
            tv_support: layer.tv_support.ok_or_else(|| need("tv_support"))?,
            budget: layer.budget.ok_or_else(|| need("budget"))?,
            horizon: layer.horizon.ok_or_else(|| need("horizon"))?,
            samples: layer.samples.ok_or_else(|| need("samples"))?,
            grid,
            slack_eps: layer.slack_eps.ok_or_else(|| need("slack_eps"))?,
            seed: layer.seed.ok_or_else(|| need("seed"))?,
            seeds: layer.seeds.ok_or_else(|| need("seeds"))?,
            mode: layer.mode.ok_or_else(|| need("mode"))?,
            trace: layer.trace.ok_or_else(|| need("trace"))?,
            iterations: layer.iterations.ok_or_else(|| need("iterations"))?,
            out: layer.out.ok_or_else(|| need("out"))?,
            garnet_states: layer.garnet_states.ok_or_else(|| need("garnet_states"))?,
            garnet_actions: layer.garnet_actions.ok_or_else(|| need("garnet_actions"))?,
            garnet_seed: layer.garnet_seed.ok_or_else(|| need("garnet_seed"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves a preset with no file and no overrides.
    pub fn preset(env: &str) -> Result<Self> {
        Self::resolve(None, &ConfigLayer { env: Some(env.into()), ..Default::default() })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be positive, got {x}")))
            }
        };
        positive("rho", self.rho)?;
        positive("temperature", self.temperature)?;
        if !(self.slack_eps >= 0.0 && self.slack_eps.is_finite()) {
            return Err(Error::Config(format!("`slack_eps` must be nonnegative, got {}", self.slack_eps)));
        }
        if !self.budget.is_finite() {
            return Err(Error::Config("`budget` must be finite".into()));
        }
        match self.grid {
            GridChoice::Bins(0) => return Err(Error::Config("`bins` must be positive".into())),
            GridChoice::Step(x) => positive("grid_eps", x)?,
            GridChoice::TargetEps(x) => positive("target_eps", x)?,
            GridChoice::Bins(_) => {}
        }
        for (name, v) in [
            ("horizon", self.horizon),
            ("seeds", self.seeds),
            ("iterations", self.iterations),
            ("garnet_states", self.garnet_states),
            ("garnet_actions", self.garnet_actions),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be positive")));
            }
        }
        if self.samples == 0 {
            return Err(Error::Config("`samples` must be positive".into()));
        }
        Ok(())
    }

    pub fn spec(&self) -> UncertaintySpec {
        UncertaintySpec {
            metric: self.metric,
            radius: self.rho,
            temperature: self.temperature,
            support: self.tv_support,
        }
    }

    /// The nominal model the experiment runs on.
    pub fn build_model(&self) -> Result<TabularCmdp> {
        match self.env.as_str() {
            "riverswim" => Ok(envs::riverswim(self.horizon, self.budget)),
            "garnet" => envs::build_garnet(&GarnetParams::sampled(
                self.garnet_states,
                self.garnet_actions,
                self.horizon,
                self.budget,
                self.garnet_seed,
            )),
            "counterexample" => Ok(envs::build_counterexample().with_budget(self.budget)),
            path => Ok(TabularCmdp::from_json(&read_model(path)?)?.with_budget(self.budget)),
        }
    }

    pub fn build_grid(&self) -> Result<BudgetGrid> {
        self.grid.build(self.horizon)
    }

    /// Short digest of everything that affects results (the output path
    /// and the seeds are left out).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut keyed = self.clone();
        keyed.out = PathBuf::new();
        keyed.seed = 0;
        keyed.seeds = 1;
        let text = serde_json::to_string(&keyed).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn read_model(path: &str) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read model file {path}: {e}")))
}
