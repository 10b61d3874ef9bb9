//! Robust constrained value iteration on the budget-augmented state space.
//!
//! Stage `k` is 0-based (`k = h - 1`). At each stage the solver
//!
//! 1. evaluates `Q_g = L V_g(., c')` and `Q_r = r + L V_r(., c')` with
//!    `c' = phi(c - g)`, clamped to `[-H, H]`;
//! 2. declares `(s, c)` feasible when some action has
//!    `Q_g >= -(H - k - 1) * slack`, and then solves the single-constraint LP
//!    with threshold `-(H - k) * slack`;
//! 3. otherwise falls back to the Dirac on the first maximizer of `Q_r`;
//! 4. sets `V = pi . Q`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::EmpiricalModel;
use crate::grid::BudgetGrid;
use crate::lp::{self, LpSolution};
use crate::mdp::TabularCmdp;
use crate::uncertainty::UncertaintySpec;

/// Refuse to allocate Q tables with more entries than this.
pub const MAX_TABLE_ENTRIES: usize = 200_000_000;
/// Slices of a policy document must sum to 1 within this tolerance.
const POLICY_SUM_TOL: f64 = 1e-9;

/// Knobs of a solve beyond the model, the ball and the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcviOptions {
    /// Per-stage constraint relaxation.
    pub slack_eps: f64,
    /// Samples per `(h, s, a)` cell.
    pub samples: u64,
    pub seed: u64,
}

/// Action distributions `pi_h(. | s, c)` over the augmented state space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyDocument", into = "PolicyDocument")]
pub struct AugPolicy {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    grid: BudgetGrid,
    slack_eps: f64,
    /// `(h, s, c, a)`, row-major.
    probs: Vec<f64>,
}

/// On-disk policy layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub grid_step: f64,
    pub grid_points: Vec<f64>,
    pub slack_eps: f64,
    pub probs: Vec<f64>,
}

impl TryFrom<PolicyDocument> for AugPolicy {
    type Error = Error;

    fn try_from(doc: PolicyDocument) -> Result<Self> {
        if doc.n_states == 0 || doc.n_actions == 0 {
            return Err(Error::Document("policy needs at least one state and action".into()));
        }
        let grid = BudgetGrid::new(doc.horizon, doc.grid_step)?;
        if grid.len() != doc.grid_points.len()
            || grid.points().iter().zip(&doc.grid_points).any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::Document("grid points do not match horizon and step".into()));
        }
        if !doc.slack_eps.is_finite() {
            return Err(Error::Document("slack_eps must be finite".into()));
        }
        let expected = doc
            .horizon
            .checked_mul(doc.n_states)
            .and_then(|x| x.checked_mul(grid.len()))
            .and_then(|x| x.checked_mul(doc.n_actions))
            .ok_or_else(|| Error::Document("policy dimensions overflow".into()))?;
        if doc.probs.len() != expected {
            return Err(Error::Document(format!("policy has {} probabilities, expected {expected}", doc.probs.len())));
        }
        for slice in doc.probs.chunks(doc.n_actions) {
            let sum: f64 = slice.iter().sum();
            if slice.iter().any(|p| !(*p >= 0.0 && *p <= 1.0)) || (sum - 1.0).abs() > POLICY_SUM_TOL {
                return Err(Error::Document(format!("action distribution {slice:?} is not a probability vector")));
            }
        }
        Ok(AugPolicy {
            horizon: doc.horizon,
            n_states: doc.n_states,
            n_actions: doc.n_actions,
            grid,
            slack_eps: doc.slack_eps,
            probs: doc.probs,
        })
    }
}

impl From<AugPolicy> for PolicyDocument {
    fn from(p: AugPolicy) -> Self {
        PolicyDocument {
            horizon: p.horizon,
            n_states: p.n_states,
            n_actions: p.n_actions,
            grid_step: p.grid.step(),
            grid_points: p.grid.points().to_vec(),
            slack_eps: p.slack_eps,
            probs: p.probs,
        }
    }
}

impl AugPolicy {
    /// Policy built from explicit `(h, s, c, a)` probabilities.
    pub fn from_probs(
        n_states: usize,
        n_actions: usize,
        grid: BudgetGrid,
        slack_eps: f64,
        probs: Vec<f64>,
    ) -> Result<Self> {
        let doc = PolicyDocument {
            horizon: grid.horizon(),
            n_states,
            n_actions,
            grid_step: grid.step(),
            grid_points: grid.points().to_vec(),
            slack_eps,
            probs,
        };
        AugPolicy::try_from(doc)
    }

    /// Uniform distribution over actions everywhere.
    pub fn uniform(n_states: usize, n_actions: usize, grid: BudgetGrid) -> Self {
        let len = grid.horizon() * n_states * grid.len() * n_actions;
        AugPolicy {
            horizon: grid.horizon(),
            n_states,
            n_actions,
            grid,
            slack_eps: 0.0,
            probs: vec![1.0 / n_actions as f64; len],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn grid(&self) -> &BudgetGrid {
        &self.grid
    }

    pub fn slack_eps(&self) -> f64 {
        self.slack_eps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `pi_h(. | s, c_idx)`.
    #[inline]
    pub fn action_probs(&self, h: usize, s: usize, c_idx: usize) -> &[f64] {
        let start = ((h * self.n_states + s) * self.grid.len() + c_idx) * self.n_actions;
        &self.probs[start..start + self.n_actions]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Errors unless the policy fits `mdp`.
    pub fn check_compatible(&self, mdp: &TabularCmdp) -> Result<()> {
        if (self.horizon, self.n_states, self.n_actions) != (mdp.horizon(), mdp.n_states(), mdp.n_actions()) {
            return Err(Error::ShapeMismatch(format!(
                "policy is ({}, {}, {}) but model is ({}, {}, {})",
                self.horizon,
                self.n_states,
                self.n_actions,
                mdp.horizon(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

/// Robust Q and V tables of a solve.
///
/// V layers run over `h = 0..=H`; layer `H` is the terminal layer with
/// `V_g = -c` and `V_r = 0`. Q tables have `H` layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustTables {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_budgets: usize,
    pub q_r: Vec<f64>,
    pub q_g: Vec<f64>,
    pub v_r: Vec<f64>,
    pub v_g: Vec<f64>,
}

impl RobustTables {
    #[inline]
    fn v_index(&self, h: usize, s: usize, c: usize) -> usize {
        (h * self.n_states + s) * self.n_budgets + c
    }

    #[inline]
    fn q_index(&self, h: usize, s: usize, c: usize, a: usize) -> usize {
        self.v_index(h, s, c) * self.n_actions + a
    }

    pub fn v_r(&self, h: usize, s: usize, c: usize) -> f64 {
        self.v_r[self.v_index(h, s, c)]
    }

    pub fn v_g(&self, h: usize, s: usize, c: usize) -> f64 {
        self.v_g[self.v_index(h, s, c)]
    }

    pub fn q_r(&self, h: usize, s: usize, c: usize, a: usize) -> f64 {
        self.q_r[self.q_index(h, s, c, a)]
    }

    pub fn q_g(&self, h: usize, s: usize, c: usize, a: usize) -> f64 {
        self.q_g[self.q_index(h, s, c, a)]
    }
}

/// Output of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub policy: AugPolicy,
    pub tables: RobustTables,
}

impl Solution {
    /// `V_r` and `V_g` at the model's start: stage 0, initial state and the
    /// projected budget.
    pub fn initial_values(&self, mdp: &TabularCmdp) -> (f64, f64) {
        let c = self.policy.grid.project_index(mdp.budget());
        let s = mdp.initial_state();
        (self.tables.v_r(0, s, c), self.tables.v_g(0, s, c))
    }
}

/// Sampled solve: draws `options.samples` next states per cell from `mdp`
/// and runs the backward induction on the empirical kernel.
pub fn rcvi(mdp: &TabularCmdp, spec: &UncertaintySpec, grid: &BudgetGrid, options: &RcviOptions) -> Result<Solution> {
    if options.samples == 0 {
        return Err(Error::param("samples", "must be at least 1"));
    }
    let pool = EmpiricalModel::sample(mdp, options.samples, options.seed)?;
    solve_on_pool(mdp, &pool, spec, grid, options.slack_eps)
}

/// Solve on the kernel estimated by `pool`; rewards and utilities come from `mdp`.
pub fn solve_on_pool(
    mdp: &TabularCmdp,
    pool: &EmpiricalModel,
    spec: &UncertaintySpec,
    grid: &BudgetGrid,
    slack_eps: f64,
) -> Result<Solution> {
    exact_mode(&pool.apply_to(mdp)?, spec, grid, slack_eps)
}

/// Solve with the nominal kernel taken as known.
pub fn exact_mode(mdp: &TabularCmdp, spec: &UncertaintySpec, grid: &BudgetGrid, slack_eps: f64) -> Result<Solution> {
    if !(slack_eps >= 0.0) || !slack_eps.is_finite() {
        return Err(Error::param("slack_eps", format!("must be nonnegative and finite, got {slack_eps}")));
    }
    spec.validate()?;
    backward_induction(mdp, spec, grid, Some(slack_eps), true)
}

/// Backward induction shared by the solver and the tiny-instance oracle.
///
/// With `slack = None` no relaxation is applied and the LP threshold is 0
/// at every stage.
pub(crate) fn backward_induction(
    mdp: &TabularCmdp,
    spec: &UncertaintySpec,
    grid: &BudgetGrid,
    slack: Option<f64>,
    clamp: bool,
) -> Result<Solution> {
    let horizon = mdp.horizon();
    if grid.horizon() != horizon {
        return Err(Error::ShapeMismatch(format!("grid is for horizon {}, model has {horizon}", grid.horizon())));
    }
    let (ns, na, nc) = (mdp.n_states(), mdp.n_actions(), grid.len());
    let layer = ns * nc;
    let q_len = horizon
        .checked_mul(layer)
        .and_then(|x| x.checked_mul(na))
        .filter(|&x| x <= MAX_TABLE_ENTRIES)
        .ok_or_else(|| Error::TooLarge(format!("{horizon} x {ns} x {nc} x {na} Q table")))?;
    let cap = horizon as f64;
    let eps = slack.unwrap_or(0.0);

    let mut v_r = vec![0.0; (horizon + 1) * layer];
    let mut v_g = vec![0.0; (horizon + 1) * layer];
    for s in 0..ns {
        for c in 0..nc {
            v_g[horizon * layer + s * nc + c] = -grid.point(c);
        }
    }
    let mut q_r = vec![0.0; q_len];
    let mut q_g = vec![0.0; q_len];
    let mut probs = vec![0.0; q_len];

    for k in (0..horizon).rev() {
        let (cur_r, next_r) = v_r.split_at_mut((k + 1) * layer);
        let (cur_g, next_g) = v_g.split_at_mut((k + 1) * layer);
        let next_r = &next_r[..layer];
        let next_g = &next_g[..layer];
        let cur_r = &mut cur_r[k * layer..];
        let cur_g = &mut cur_g[k * layer..];
        let qs = k * layer * na..(k + 1) * layer * na;
        let feasible_at = -((horizon - k - 1) as f64) * eps;
        let lp_at = if slack.is_some() { -((horizon - k) as f64) * eps } else { 0.0 };

        cur_r
            .par_iter_mut()
            .zip(cur_g.par_iter_mut())
            .zip(q_r[qs.clone()].par_chunks_mut(na))
            .zip(q_g[qs.clone()].par_chunks_mut(na))
            .zip(probs[qs].par_chunks_mut(na))
            .enumerate()
            .try_for_each(|(cell, ((((vr, vg), qr), qg), pi))| -> Result<()> {
                let (s, c) = (cell / nc, cell % nc);
                let mut succ_r = vec![0.0; ns];
                let mut succ_g = vec![0.0; ns];
                for a in 0..na {
                    let c_next = grid.step_budget(c, mdp.utility(k, s, a));
                    for t in 0..ns {
                        succ_r[t] = next_r[t * nc + c_next];
                        succ_g[t] = next_g[t * nc + c_next];
                    }
                    let row = mdp.row(k, s, a);
                    let lg = spec.worst_case(row, &succ_g, cap)?;
                    let lr = mdp.reward(k, s, a) + spec.worst_case(row, &succ_r, cap)?;
                    if clamp {
                        qg[a] = lg.clamp(-cap, cap);
                        qr[a] = lr.clamp(-cap, cap);
                    } else {
                        qg[a] = lg;
                        qr[a] = lr;
                    }
                }
                let feasible = qg.iter().any(|&g| g >= feasible_at);
                let chosen = if feasible {
                    match lp::solve(qr, qg, lp_at) {
                        LpSolution::Optimal(p) => p,
                        LpSolution::Infeasible => lp::argmax_dirac(qr),
                    }
                } else {
                    lp::argmax_dirac(qr)
                };
                pi.copy_from_slice(&chosen);
                *vr = dot(pi, qr);
                *vg = dot(pi, qg);
                Ok(())
            })?;
    }

    let policy = AugPolicy { horizon, n_states: ns, n_actions: na, grid: grid.clone(), slack_eps: eps, probs };
    let tables = RobustTables { horizon, n_states: ns, n_actions: na, n_budgets: nc, q_r, q_g, v_r, v_g };
    Ok(Solution { policy, tables })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
