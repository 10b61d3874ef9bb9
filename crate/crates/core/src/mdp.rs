//! Tabular finite-horizon constrained MDPs.
//!
//! Stages are 0-based throughout the crate: stage `h` here is step `h + 1`
//! of an episode of length `horizon`. Kernels are always stored per stage,
//! so stationary environments simply repeat one table.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums must match 1 to this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A nominal finite-horizon model with deterministic reward and utility.
///
/// The constraint is `sum of utilities >= budget`. Cost-constrained
/// environments are stored with `utility = -cost` and `budget = -cap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelDocument", into = "ModelDocument")]
pub struct TabularCmdp {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    /// `(h, s, a, s')`, row-major.
    kernel: Vec<f64>,
    /// `(h, s, a)`, row-major.
    reward: Vec<f64>,
    utility: Vec<f64>,
    budget: f64,
    initial_state: usize,
}

/// On-disk layout of a model: scalar fields plus flat named arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub budget: f64,
    pub initial_state: usize,
    pub kernel: Vec<f64>,
    pub reward: Vec<f64>,
    pub utility: Vec<f64>,
}

impl TryFrom<ModelDocument> for TabularCmdp {
    type Error = Error;

    fn try_from(doc: ModelDocument) -> Result<Self> {
        TabularCmdp::new(
            doc.horizon,
            doc.n_states,
            doc.n_actions,
            doc.kernel,
            doc.reward,
            doc.utility,
            doc.budget,
            doc.initial_state,
        )
    }
}

impl From<TabularCmdp> for ModelDocument {
    fn from(m: TabularCmdp) -> Self {
        ModelDocument {
            horizon: m.horizon,
            n_states: m.n_states,
            n_actions: m.n_actions,
            budget: m.budget,
            initial_state: m.initial_state,
            kernel: m.kernel,
            reward: m.reward,
            utility: m.utility,
        }
    }
}

/// One broken invariant, with the `(h, s, a)` cell it was found at.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum { h: usize, s: usize, a: usize, sum: f64 },
    EntryOutOfRange { h: usize, s: usize, a: usize, next: usize, value: f64 },
    RewardOutOfRange { h: usize, s: usize, a: usize, value: f64 },
    UtilityOutOfRange { h: usize, s: usize, a: usize, value: f64 },
    NonFiniteBudget(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::RowSum { h, s, a, sum } => {
                write!(f, "row sum {sum} \u{2260} 1 at ({h},{s},{a})")
            }
            Violation::EntryOutOfRange { h, s, a, next, value } => {
                write!(f, "P({next}|{s},{a}) = {value} outside [0,1] at stage {h}")
            }
            Violation::RewardOutOfRange { h, s, a, value } => {
                write!(f, "|r|>1 at ({h},{s},{a}): {value}")
            }
            Violation::UtilityOutOfRange { h, s, a, value } => {
                write!(f, "|g|>1 at ({h},{s},{a}): {value}")
            }
            Violation::NonFiniteBudget(b) => write!(f, "budget threshold {b} is not finite"),
        }
    }
}

impl TabularCmdp {
    /// Builds a model after checking dimensions only; call [`validate`]
    /// for the numeric invariants.
    ///
    /// [`validate`]: TabularCmdp::validate
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        horizon: usize,
        n_states: usize,
        n_actions: usize,
        kernel: Vec<f64>,
        reward: Vec<f64>,
        utility: Vec<f64>,
        budget: f64,
        initial_state: usize,
    ) -> Result<Self> {
        if horizon == 0 || n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidModel(format!(
                "horizon, n_states and n_actions must be positive (got {horizon}, {n_states}, {n_actions})"
            )));
        }
        if initial_state >= n_states {
            return Err(Error::InvalidModel(format!(
                "initial_state {initial_state} out of range for {n_states} states"
            )));
        }
        let cells = horizon
            .checked_mul(n_states)
            .and_then(|x| x.checked_mul(n_actions))
            .ok_or_else(|| Error::InvalidModel("dimensions overflow".into()))?;
        let kernel_len =
            cells.checked_mul(n_states).ok_or_else(|| Error::InvalidModel("dimensions overflow".into()))?;
        if kernel.len() != kernel_len {
            return Err(Error::ShapeMismatch(format!("kernel has {} entries, expected {kernel_len}", kernel.len())));
        }
        if reward.len() != cells || utility.len() != cells {
            return Err(Error::ShapeMismatch(format!(
                "reward/utility have {}/{} entries, expected {cells}",
                reward.len(),
                utility.len()
            )));
        }
        Ok(TabularCmdp { horizon, n_states, n_actions, kernel, reward, utility, budget, initial_state })
    }

    /// Repeats one stationary table across every stage.
    ///
    /// `kernel` is `(s, a, s')`, `reward`/`utility` are `(s, a)`.
    #[allow(clippy::too_many_arguments)]
    pub fn stationary(
        horizon: usize,
        n_states: usize,
        n_actions: usize,
        kernel: &[f64],
        reward: &[f64],
        utility: &[f64],
        budget: f64,
        initial_state: usize,
    ) -> Result<Self> {
        let rep = |xs: &[f64]| -> Vec<f64> { std::iter::repeat_n(xs, horizon).flatten().copied().collect() };
        TabularCmdp::new(horizon, n_states, n_actions, rep(kernel), rep(reward), rep(utility), budget, initial_state)
    }

    /// Same rewards, utilities and budget on a different nominal kernel.
    pub fn with_kernel(&self, kernel: Vec<f64>) -> Result<Self> {
        if kernel.len() != self.kernel.len() {
            return Err(Error::ShapeMismatch(format!(
                "kernel has {} entries, expected {}",
                kernel.len(),
                self.kernel.len()
            )));
        }
        Ok(TabularCmdp { kernel, ..self.clone() })
    }

    /// The full `(h, s, a, s')` kernel.
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
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

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_initial_state(mut self, s: usize) -> Result<Self> {
        if s >= self.n_states {
            return Err(Error::IndexOutOfRange(format!("initial state {s}")));
        }
        self.initial_state = s;
        Ok(self)
    }

    #[inline]
    fn cell(&self, h: usize, s: usize, a: usize) -> usize {
        debug_assert!(h < self.horizon && s < self.n_states && a < self.n_actions);
        (h * self.n_states + s) * self.n_actions + a
    }

    pub fn check_indices(&self, h: usize, s: usize, a: usize) -> Result<()> {
        if h >= self.horizon || s >= self.n_states || a >= self.n_actions {
            return Err(Error::IndexOutOfRange(format!(
                "(h={h}, s={s}, a={a}) for model of shape ({}, {}, {})",
                self.horizon, self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// Nominal next-state distribution `P_h(. | s, a)`.
    #[inline]
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[f64] {
        let start = self.cell(h, s, a) * self.n_states;
        &self.kernel[start..start + self.n_states]
    }

    pub fn row_mut(&mut self, h: usize, s: usize, a: usize) -> &mut [f64] {
        let start = self.cell(h, s, a) * self.n_states;
        let n = self.n_states;
        &mut self.kernel[start..start + n]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.reward[self.cell(h, s, a)]
    }

    #[inline]
    pub fn utility(&self, h: usize, s: usize, a: usize) -> f64 {
        self.utility[self.cell(h, s, a)]
    }

    pub fn set_reward(&mut self, h: usize, s: usize, a: usize, value: f64) {
        let i = self.cell(h, s, a);
        self.reward[i] = value;
    }

    pub fn set_utility(&mut self, h: usize, s: usize, a: usize, value: f64) {
        let i = self.cell(h, s, a);
        self.utility[i] = value;
    }

    /// True when reward, utility and next-state row agree for every action.
    pub fn actions_equivalent(&self, h: usize, s: usize) -> bool {
        (1..self.n_actions).all(|a| {
            self.reward(h, s, a) == self.reward(h, s, 0)
                && self.utility(h, s, a) == self.utility(h, s, 0)
                && self.row(h, s, a) == self.row(h, s, 0)
        })
    }

    /// Every invariant violation, in `(h, s, a)` order. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if !self.budget.is_finite() {
            out.push(Violation::NonFiniteBudget(self.budget));
        }
        for h in 0..self.horizon {
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    let row = self.row(h, s, a);
                    for (next, &p) in row.iter().enumerate() {
                        if !(0.0..=1.0).contains(&p) {
                            out.push(Violation::EntryOutOfRange { h, s, a, next, value: p });
                        }
                    }
                    let sum: f64 = row.iter().sum();
                    if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                        out.push(Violation::RowSum { h, s, a, sum });
                    }
                    let r = self.reward(h, s, a);
                    if !(r.abs() <= 1.0) {
                        out.push(Violation::RewardOutOfRange { h, s, a, value: r });
                    }
                    let g = self.utility(h, s, a);
                    if !(g.abs() <= 1.0) {
                        out.push(Violation::UtilityOutOfRange { h, s, a, value: g });
                    }
                }
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> TabularCmdp {
        TabularCmdp::stationary(2, 2, 1, &[0.5, 0.5, 0.0, 1.0], &[0.1, 0.2], &[0.0, 1.0], 0.5, 0).unwrap()
    }

    #[test]
    fn zero_row_is_reported_with_coordinates() {
        let mut m = two_state();
        m.row_mut(0, 0, 0).fill(0.0);
        let v = m.validate();
        assert_eq!(v, vec![Violation::RowSum { h: 0, s: 0, a: 0, sum: 0.0 }]);
        assert_eq!(v[0].to_string(), "row sum 0 \u{2260} 1 at (0,0,0)");
    }

    #[test]
    fn reward_out_of_range_is_reported() {
        let mut m = two_state();
        m.set_reward(1, 1, 0, 1.5);
        let v = m.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().starts_with("|r|>1 at (1,1,0)"));
    }

    #[test]
    fn nan_entries_are_violations() {
        let mut m = two_state();
        m.set_utility(0, 0, 0, f64::NAN);
        m.row_mut(1, 0, 0)[0] = f64::NAN;
        assert_eq!(m.validate().len(), 3);
    }

    #[test]
    fn shape_errors() {
        assert!(TabularCmdp::new(0, 1, 1, vec![], vec![], vec![], 0.0, 0).is_err());
        assert!(TabularCmdp::new(1, 2, 1, vec![1.0], vec![0.0; 2], vec![0.0; 2], 0.0, 0).is_err());
        assert!(TabularCmdp::new(1, 1, 1, vec![1.0], vec![0.0], vec![0.0], 0.0, 1).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut m = two_state();
        m.set_reward(0, 0, 0, 0.1 + 0.2);
        m.set_utility(1, 1, 0, std::f64::consts::FRAC_1_SQRT_2);
        let back = TabularCmdp::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn document_with_wrong_lengths_is_rejected() {
        let text = r#"{"horizon":1,"n_states":2,"n_actions":1,"budget":0,"initial_state":0,
                       "kernel":[1.0],"reward":[0,0],"utility":[0,0]}"#;
        assert!(TabularCmdp::from_json(text).is_err());
    }
}
