//! Finite-horizon robust constrained MDPs.
//!
//! The solver works on the budget-augmented state `(s, c)`, where `c` is the
//! utility still owed to meet the constraint. Transition uncertainty is a
//! rectangular ball (TV, chi-squared or KL) around a nominal kernel that is
//! either known or estimated from a generative model.

// `!(x <= y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod envs;
pub mod error;
pub mod estimation;
pub mod eval;
pub mod grid;
pub mod lp;
pub mod mdp;
pub mod rcvi;
pub mod uncertainty;

pub use error::{Error, Result};
pub use estimation::{empirical_model, empirical_row, sample_generative, EmpiricalModel};
pub use eval::{robust_policy_eval, EvalReport};
pub use grid::BudgetGrid;
pub use lp::{LpSolution, SimplexLp};
pub use mdp::TabularCmdp;
pub use rcvi::{exact_mode, rcvi, AugPolicy, RcviOptions, RobustTables, Solution};
pub use uncertainty::{Metric, Support, UncertaintySpec};
