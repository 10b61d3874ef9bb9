//! Benchmark environments: constrained RiverSwim, cost-based Garnet and the
//! two-branch instance on which state-only policies lose to budget-aware ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularCmdp;

pub const RIVERSWIM_STATES: usize = 6;
/// Per-state reward, independent of the action.
pub const RIVERSWIM_REWARD: [f64; 6] = [0.001, 0.0, 0.0, 0.0, 0.1, 1.0];
/// Per-state constraint cost, independent of the action.
pub const RIVERSWIM_COST: [f64; 6] = [0.2, 0.035, 0.0, 0.01, 0.08, 0.9];
pub const RIVERSWIM_COST_BUDGET: f64 = 4.0;
pub const RIVERSWIM_HORIZON: usize = 1000;

pub const SWIM_LEFT: usize = 0;
pub const SWIM_RIGHT: usize = 1;

/// RiverSwim at full scale: horizon 1000, cost budget 4.
pub fn build_riverswim() -> TabularCmdp {
    riverswim(RIVERSWIM_HORIZON, RIVERSWIM_COST_BUDGET)
}

/// Constrained RiverSwim over `horizon` steps with cumulative cost capped at
/// `cost_budget`.
///
/// Costs are stored as negative utilities, so the stored threshold is
/// `-cost_budget`. Mass that would leave the river at either bank stays put.
/// The swimmer starts at the left bank.
pub fn riverswim(horizon: usize, cost_budget: f64) -> TabularCmdp {
    let n = RIVERSWIM_STATES;
    let mut kernel = vec![0.0; n * 2 * n];
    let mut set = |s: usize, a: usize, next: usize, p: f64| kernel[(s * 2 + a) * n + next] += p;

    set(0, SWIM_LEFT, 0, 0.9);
    set(0, SWIM_LEFT, 1, 0.1);
    for i in 1..n {
        set(i, SWIM_LEFT, i, 0.6);
        set(i, SWIM_LEFT, i - 1, 0.3);
        set(i, SWIM_LEFT, (i + 1).min(n - 1), 0.1);
    }
    for i in 0..n - 1 {
        set(i, SWIM_RIGHT, i, 0.6);
        set(i, SWIM_RIGHT, i.saturating_sub(1), 0.1);
        set(i, SWIM_RIGHT, i + 1, 0.3);
    }
    set(n - 1, SWIM_RIGHT, n - 1, 0.9);
    set(n - 1, SWIM_RIGHT, n - 2, 0.1);

    let reward: Vec<f64> = (0..n).flat_map(|s| [RIVERSWIM_REWARD[s]; 2]).collect();
    let utility: Vec<f64> = (0..n).flat_map(|s| [-RIVERSWIM_COST[s]; 2]).collect();
    TabularCmdp::stationary(horizon, n, 2, &kernel, &reward, &utility, -cost_budget, 0)
        .expect("riverswim dimensions are consistent")
}

/// State indices of the two-branch instance.
pub mod branch {
    pub const S1: usize = 0;
    pub const S2: usize = 1;
    pub const S2_PRIME: usize = 2;
    pub const S3: usize = 3;
    /// Absorbing state that fills the steps after `S3`.
    pub const SINK: usize = 4;
    pub const ACTION_A: usize = 0;
    pub const ACTION_B: usize = 1;
}

/// Three-step instance where the reward branch and the utility branch
/// merge before the final decision.
///
/// From `S1` the nominal model moves to `S2` or `S2_PRIME` with probability
/// 1/2 each, both continue to `S3`, then to the sink. `S2` pays reward 1,
/// `S2_PRIME` pays utility 1; at `S3` action `a` pays reward 1 and action
/// `b` pays utility 1. Threshold 1.
pub fn build_counterexample() -> TabularCmdp {
    use branch::*;
    let n = 5;
    let mut kernel = vec![0.0; n * 2 * n];
    for a in 0..2 {
        let mut set = |s: usize, next: usize, p: f64| kernel[(s * 2 + a) * n + next] = p;
        set(S1, S2, 0.5);
        set(S1, S2_PRIME, 0.5);
        set(S2, S3, 1.0);
        set(S2_PRIME, S3, 1.0);
        set(S3, SINK, 1.0);
        set(SINK, SINK, 1.0);
    }
    let mut reward = vec![0.0; n * 2];
    let mut utility = vec![0.0; n * 2];
    for a in 0..2 {
        reward[S2 * 2 + a] = 1.0;
        utility[S2_PRIME * 2 + a] = 1.0;
    }
    reward[S3 * 2 + ACTION_A] = 1.0;
    utility[S3 * 2 + ACTION_B] = 1.0;
    TabularCmdp::stationary(3, n, 2, &kernel, &reward, &utility, 1.0, S1)
        .expect("counterexample dimensions are consistent")
}

/// Draw parameters for a cost-based Garnet instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarnetParams {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub kernel_mean: f64,
    pub kernel_scale: f64,
    pub reward_mean: f64,
    pub reward_scale: f64,
    pub cost_mean: f64,
    pub cost_scale: f64,
    /// Cap on cumulative cost, in the units of the raw cost draws.
    pub cost_budget: f64,
    pub seed: u64,
}

impl GarnetParams {
    /// Draws the normal means and scales themselves: `U(0,100)` for the
    /// kernel logits, `U(0,10)` for reward and cost.
    pub fn sampled(n_states: usize, n_actions: usize, horizon: usize, cost_budget: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Fixed stream so the hyperparameters do not overlap the table draws.
        rng.set_stream(u64::MAX);
        GarnetParams {
            n_states,
            n_actions,
            horizon,
            kernel_mean: rng.random_range(0.0..100.0),
            kernel_scale: rng.random_range(0.0..100.0),
            reward_mean: rng.random_range(0.0..10.0),
            reward_scale: rng.random_range(0.0..10.0),
            cost_mean: rng.random_range(0.0..10.0),
            cost_scale: rng.random_range(0.0..10.0),
            cost_budget,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 || self.horizon == 0 {
            return Err(Error::param("garnet", "state, action and horizon counts must be positive"));
        }
        let fields = [
            self.kernel_mean,
            self.kernel_scale,
            self.reward_mean,
            self.reward_scale,
            self.cost_mean,
            self.cost_scale,
            self.cost_budget,
        ];
        if fields.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("garnet", "parameters must be finite"));
        }
        if self.kernel_scale < 0.0 || self.reward_scale < 0.0 || self.cost_scale < 0.0 {
            return Err(Error::param("garnet", "scales must be nonnegative"));
        }
        Ok(())
    }
}

/// Affine map of `xs` onto `[0, 1]`; returns `(min, range)`. A constant
/// table maps to all zeros with unit range.
fn rescale_unit(xs: &mut [f64]) -> (f64, f64) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range > 0.0 {
        xs.iter_mut().for_each(|x| *x = (*x - lo) / range);
        (lo, range)
    } else {
        xs.iter_mut().for_each(|x| *x = 0.0);
        (lo, 1.0)
    }
}

/// Builds a stationary Garnet instance.
///
/// Kernel rows are a softmax over normal logits, so every entry is strictly
/// positive. Reward and cost tables are drawn from their normals and mapped
/// affinely onto `[0, 1]`; the cost budget goes through the same map applied
/// to an H-step sum, which leaves the feasible set unchanged.
pub fn build_garnet(params: &GarnetParams) -> Result<TabularCmdp> {
    params.validate()?;
    let (ns, na) = (params.n_states, params.n_actions);
    let normal = |mean: f64, sd: f64| Normal::new(mean, sd).map_err(|e| Error::param("garnet", e.to_string()));
    let kernel_dist = normal(params.kernel_mean, params.kernel_scale)?;
    let reward_dist = normal(params.reward_mean, params.reward_scale)?;
    let cost_dist = normal(params.cost_mean, params.cost_scale)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut kernel = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        let logits: Vec<f64> = (0..ns).map(|_| kernel_dist.sample(&mut rng)).collect();
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = weights.iter().sum();
        let mut row: Vec<f64> = weights.iter().map(|w| (w / z).max(f64::MIN_POSITIVE)).collect();
        let z: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= z);
        kernel.extend(row);
    }
    let mut reward: Vec<f64> = (0..ns * na).map(|_| reward_dist.sample(&mut rng)).collect();
    let mut cost: Vec<f64> = (0..ns * na).map(|_| cost_dist.sample(&mut rng)).collect();
    rescale_unit(&mut reward);
    let (cost_lo, cost_range) = rescale_unit(&mut cost);
    let budget = (params.cost_budget - params.horizon as f64 * cost_lo) / cost_range;
    let utility: Vec<f64> = cost.iter().map(|c| -c).collect();
    TabularCmdp::stationary(params.horizon, ns, na, &kernel, &reward, &utility, -budget, 0)
}
