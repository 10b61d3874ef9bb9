//! Robust evaluation of fixed policies and optimality oracles for tiny
//! instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BudgetGrid;
use crate::mdp::TabularCmdp;
use crate::rcvi::{backward_induction, AugPolicy};
use crate::uncertainty::{Metric, Support, UncertaintySpec};

/// Largest number of state-action-budget evaluations the oracles accept.
pub const ORACLE_GUARD: usize = 10_000_000;
/// Default number of points per free parameter in the Markovian sweep.
pub const MARKOV_DENSITY: usize = 201;
/// A Markovian policy counts as feasible when its utility shortfall is
/// below this.
const FEASIBLE_TOL: f64 = 1e-9;

/// Worst-case values of a policy at the model's start.
///
/// `robust_utility_value` is in augmented coordinates: the grid-tracked
/// residual budget is charged at the end of the episode, so it equals
/// `min_P V_g - b` up to the upward rounding of the grid. The `exact_*`
/// fields sum utilities without rounding while the policy still reads its
/// budget from the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub robust_reward_value: f64,
    pub robust_utility_value: f64,
    pub violation: f64,
    pub exact_utility_value: f64,
    pub exact_violation: f64,
    pub sub_opt: Option<f64>,
}

impl EvalReport {
    fn new(reward: f64, utility: f64, exact_utility: f64) -> Self {
        EvalReport {
            robust_reward_value: reward,
            robust_utility_value: utility,
            violation: (-utility).max(0.0),
            exact_utility_value: exact_utility,
            exact_violation: (-exact_utility).max(0.0),
            sub_opt: None,
        }
    }

    pub fn with_reference(mut self, optimal_reward: f64) -> Self {
        self.sub_opt = Some(optimal_reward - self.robust_reward_value);
        self
    }
}

/// Per-stage worst-case values of an augmented policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValues {
    pub n_states: usize,
    pub n_budgets: usize,
    /// `(h, s, c)` with `h = 0..=H`.
    pub reward: Vec<f64>,
    pub utility: Vec<f64>,
    /// Utility collected from stage `h` on, without the terminal charge.
    pub exact_utility: Vec<f64>,
}

impl PolicyValues {
    pub fn index(&self, h: usize, s: usize, c: usize) -> usize {
        (h * self.n_states + s) * self.n_budgets + c
    }
}

/// Backward induction of `policy` under the uncertainty ball around the
/// nominal kernel of `mdp`. Reward and utility are each charged their own
/// worst-case kernel.
pub fn robust_policy_values(mdp: &TabularCmdp, policy: &AugPolicy, spec: &UncertaintySpec) -> Result<PolicyValues> {
    policy.check_compatible(mdp)?;
    let grid = policy.grid();
    let (horizon, ns, na, nc) = (mdp.horizon(), mdp.n_states(), mdp.n_actions(), grid.len());
    let layer = ns * nc;
    let cap = horizon as f64;
    let mut reward = vec![0.0; (horizon + 1) * layer];
    let mut utility = vec![0.0; (horizon + 1) * layer];
    let mut exact = vec![0.0; (horizon + 1) * layer];
    for s in 0..ns {
        for c in 0..nc {
            utility[horizon * layer + s * nc + c] = -grid.point(c);
        }
    }
    for k in (0..horizon).rev() {
        let (cur_r, next_r) = reward.split_at_mut((k + 1) * layer);
        let (cur_g, next_g) = utility.split_at_mut((k + 1) * layer);
        let (cur_e, next_e) = exact.split_at_mut((k + 1) * layer);
        let (next_r, next_g, next_e) = (&next_r[..layer], &next_g[..layer], &next_e[..layer]);
        cur_r[k * layer..]
            .par_iter_mut()
            .zip(cur_g[k * layer..].par_iter_mut())
            .zip(cur_e[k * layer..].par_iter_mut())
            .enumerate()
            .try_for_each(|(cell, ((vr, vg), ve))| -> Result<()> {
                let (s, c) = (cell / nc, cell % nc);
                let pi = policy.action_probs(k, s, c);
                let (mut r, mut g, mut e) = (0.0, 0.0, 0.0);
                let mut succ = vec![0.0; ns];
                for (a, &p_a) in pi.iter().enumerate().take(na) {
                    if p_a == 0.0 {
                        continue;
                    }
                    let u = mdp.utility(k, s, a);
                    let c_next = grid.step_budget(c, u);
                    let row = mdp.row(k, s, a);
                    let mut worst = |next: &[f64]| {
                        for t in 0..ns {
                            succ[t] = next[t * nc + c_next];
                        }
                        spec.worst_case(row, &succ, cap)
                    };
                    r += p_a * (mdp.reward(k, s, a) + worst(next_r)?);
                    g += p_a * worst(next_g)?;
                    e += p_a * (u + worst(next_e)?);
                }
                (*vr, *vg, *ve) = (r, g, e);
                Ok(())
            })?;
    }
    Ok(PolicyValues { n_states: ns, n_budgets: nc, reward, utility, exact_utility: exact })
}

/// Worst-case reward and utility of `policy` from the initial state and
/// the projected budget of `mdp`.
pub fn robust_policy_eval(mdp: &TabularCmdp, policy: &AugPolicy, spec: &UncertaintySpec) -> Result<EvalReport> {
    let values = robust_policy_values(mdp, policy, spec)?;
    let c = policy.grid().project_index(mdp.budget());
    let i = values.index(0, mdp.initial_state(), c);
    Ok(EvalReport::new(values.reward[i], values.utility[i], values.exact_utility[i] - mdp.budget()))
}

/// Best augmented policy found by per-stage exhaustive backward search with
/// exactly evaluated Q tables and no constraint slack.
///
/// At every `(h, s, c)` the best feasible action is kept; when only a
/// randomized choice satisfies the constraint, the best binding two-action
/// mix is used instead.
pub fn exhaustive_optimal_tiny(
    mdp: &TabularCmdp,
    spec: &UncertaintySpec,
    grid: &BudgetGrid,
) -> Result<(AugPolicy, EvalReport)> {
    let work = mdp.horizon() * mdp.n_states() * grid.len() * mdp.n_actions();
    if work > ORACLE_GUARD {
        return Err(Error::TooLarge(format!("{work} state-action-budget evaluations")));
    }
    spec.validate()?;
    let sol = backward_induction(mdp, spec, grid, None, false)?;
    let report = robust_policy_eval(mdp, &sol.policy, spec)?;
    Ok((sol.policy, report.with_reference(report.robust_reward_value)))
}

/// Result of the Markovian sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovianBest {
    pub report: EvalReport,
    /// `(h, s, a)` probabilities of the best policy.
    pub policy: Vec<f64>,
    /// Whether any swept policy met the constraint.
    pub feasible: bool,
    pub evaluated: usize,
}

/// Sweeps non-augmented stochastic policies `pi_h(a | s)` on a grid with
/// `density` points per free parameter and returns the best feasible one.
///
/// Only stage-state pairs that can be reached and where actions differ are
/// swept; elsewhere the first action is used. If nothing is feasible the
/// least-violating policy is returned with `feasible = false`.
pub fn best_markovian_tiny(mdp: &TabularCmdp, spec: &UncertaintySpec, density: usize) -> Result<MarkovianBest> {
    if density < 2 {
        return Err(Error::param("density", "need at least 2 points per parameter"));
    }
    let (horizon, ns, na) = (mdp.horizon(), mdp.n_states(), mdp.n_actions());
    let cells = relevant_cells(mdp, spec);
    let mut choices = Vec::new();
    let mut parts = vec![0usize; na];
    compositions(density - 1, &mut parts, 0, &mut |p| {
        choices.push(p.iter().map(|&k| k as f64 / (density - 1) as f64).collect::<Vec<f64>>())
    });
    let mut total = 1usize;
    for _ in &cells {
        total = total
            .checked_mul(choices.len())
            .filter(|&t| t.saturating_mul(horizon * ns * na) <= ORACLE_GUARD * 10)
            .ok_or_else(|| Error::TooLarge(format!("{} swept cells at density {density}", cells.len())))?;
    }

    let mut base = vec![0.0; horizon * ns * na];
    for cell in 0..horizon * ns {
        base[cell * na] = 1.0;
    }
    let best = (0..total)
        .into_par_iter()
        .map(|mut code| -> Result<(bool, f64, f64, usize, Vec<f64>)> {
            let mut pi = base.clone();
            for &(h, s) in &cells {
                let choice = &choices[code % choices.len()];
                code /= choices.len();
                let start = (h * ns + s) * na;
                pi[start..start + na].copy_from_slice(choice);
            }
            let (r, g) = markov_values(mdp, &pi, spec)?;
            let slack = g - mdp.budget();
            Ok((slack >= -FEASIBLE_TOL, r, slack, code, pi))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .enumerate()
        .fold(None::<(usize, (bool, f64, f64, usize, Vec<f64>))>, |acc, (i, cand)| match acc {
            None => Some((i, cand)),
            Some((j, cur)) => {
                let better = match (cand.0, cur.0) {
                    (true, false) => true,
                    (false, true) => false,
                    (true, true) => cand.1 > cur.1,
                    (false, false) => cand.2 > cur.2,
                };
                Some(if better { (i, cand) } else { (j, cur) })
            }
        })
        .expect("at least one policy");
    let (_, (feasible, r, slack, _, policy)) = best;
    Ok(MarkovianBest { report: EvalReport::new(r, slack, slack), policy, feasible, evaluated: total })
}

/// Robust reward and utility of a Markovian policy from the initial state.
pub fn markov_values(mdp: &TabularCmdp, pi: &[f64], spec: &UncertaintySpec) -> Result<(f64, f64)> {
    let (horizon, ns, na) = (mdp.horizon(), mdp.n_states(), mdp.n_actions());
    if pi.len() != horizon * ns * na {
        return Err(Error::ShapeMismatch(format!("Markovian policy has {} entries", pi.len())));
    }
    let cap = horizon as f64;
    let mut next_r = vec![0.0; ns];
    let mut next_g = vec![0.0; ns];
    for k in (0..horizon).rev() {
        let mut cur_r = vec![0.0; ns];
        let mut cur_g = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let p = pi[(k * ns + s) * na + a];
                if p == 0.0 {
                    continue;
                }
                let row = mdp.row(k, s, a);
                cur_r[s] += p * (mdp.reward(k, s, a) + spec.worst_case(row, &next_r, cap)?);
                cur_g[s] += p * (mdp.utility(k, s, a) + spec.worst_case(row, &next_g, cap)?);
            }
        }
        next_r = cur_r;
        next_g = cur_g;
    }
    Ok((next_r[mdp.initial_state()], next_g[mdp.initial_state()]))
}

/// Stage-state pairs that are reachable and where the action matters.
fn relevant_cells(mdp: &TabularCmdp, spec: &UncertaintySpec) -> Vec<(usize, usize)> {
    let ns = mdp.n_states();
    let anywhere = spec.metric == Metric::Tv && spec.support == Support::Simplex;
    let mut reach = vec![false; ns];
    reach[mdp.initial_state()] = true;
    let mut cells = Vec::new();
    for h in 0..mdp.horizon() {
        let mut next = vec![false; ns];
        for s in (0..ns).filter(|&s| reach[s]) {
            if !mdp.actions_equivalent(h, s) {
                cells.push((h, s));
            }
            for a in 0..mdp.n_actions() {
                for (t, &p) in mdp.row(h, s, a).iter().enumerate() {
                    next[t] |= anywhere || p > 0.0;
                }
            }
        }
        reach = next;
    }
    cells
}

fn compositions(total: usize, parts: &mut [usize], at: usize, visit: &mut impl FnMut(&[usize])) {
    if at + 1 == parts.len() {
        parts[at] = total;
        visit(parts);
        return;
    }
    for k in (0..=total).rev() {
        parts[at] = k;
        compositions(total - k, parts, at + 1, visit);
    }
}
