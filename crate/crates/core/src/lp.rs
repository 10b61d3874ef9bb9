//! Linear programs over the action simplex with a single linear constraint.
//!
//! `max pi . q_r  s.t.  pi . q_g >= tau,  pi in simplex`. A basic optimal
//! solution mixes at most two actions, so the solver enumerates Diracs and
//! binding two-action mixes instead of running a general method.

use crate::error::{Error, Result};

/// Relative margin (in units of `max |q_r|`) a candidate must gain to
/// replace the incumbent. Keeps tie-breaking stable under rescaling.
const TIE_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexLp {
    objective: Vec<f64>,
    constraint: Vec<f64>,
    threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpSolution {
    Optimal(Vec<f64>),
    Infeasible,
}

impl LpSolution {
    pub fn distribution(&self) -> Option<&[f64]> {
        match self {
            LpSolution::Optimal(p) => Some(p),
            LpSolution::Infeasible => None,
        }
    }
}

impl SimplexLp {
    pub fn new(objective: Vec<f64>, constraint: Vec<f64>, threshold: f64) -> Result<Self> {
        if objective.is_empty() || objective.len() != constraint.len() {
            return Err(Error::ShapeMismatch(format!(
                "objective has {} actions, constraint has {}",
                objective.len(),
                constraint.len()
            )));
        }
        if objective.iter().chain(&constraint).chain([&threshold]).any(|x| !x.is_finite()) {
            return Err(Error::param("lp", "coefficients must be finite"));
        }
        Ok(SimplexLp { objective, constraint, threshold })
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraint(&self) -> &[f64] {
        &self.constraint
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn is_feasible(&self) -> bool {
        self.constraint.iter().any(|&g| g >= self.threshold)
    }

    pub fn solve(&self) -> LpSolution {
        solve(&self.objective, &self.constraint, self.threshold)
    }
}

/// Solves the LP given by its coefficient slices; see [`SimplexLp`].
///
/// Candidates are visited as: feasible Diracs by action index, then binding
/// pairs `(i, j)` in lexicographic order. A later candidate wins only if it
/// is strictly better by more than the tie margin.
pub fn solve(q_r: &[f64], q_g: &[f64], tau: f64) -> LpSolution {
    let n = q_r.len();
    debug_assert_eq!(n, q_g.len());
    let scale = q_r.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let margin = TIE_REL * scale;

    let mut best: Option<Candidate> = None;
    for a in 0..n {
        if q_g[a] >= tau {
            offer(&mut best, margin, (q_r[a], a, a, 1.0));
        }
    }
    if best.is_none() {
        return LpSolution::Infeasible;
    }
    for i in 0..n {
        for j in 0..n {
            // Only a strictly feasible action mixed with a strictly
            // infeasible one can beat every feasible Dirac.
            if q_g[i] > tau && q_g[j] < tau && q_r[j] > q_r[i] {
                let w = ((tau - q_g[j]) / (q_g[i] - q_g[j])).clamp(0.0, 1.0);
                offer(&mut best, margin, (w * q_r[i] + (1.0 - w) * q_r[j], i, j, w));
            }
        }
    }
    let (_, i, j, w) = best.expect("a feasible Dirac exists");
    let mut pi = vec![0.0; n];
    pi[i] += w;
    pi[j] += 1.0 - w;
    LpSolution::Optimal(pi)
}

/// `(objective, i, j, weight on i)`.
type Candidate = (f64, usize, usize, f64);

fn offer(best: &mut Option<Candidate>, margin: f64, cand: Candidate) {
    match best {
        Some((v, ..)) if cand.0 <= *v + margin => {}
        _ => *best = Some(cand),
    }
}

/// Dirac on the first maximizer of `q`.
pub fn argmax_dirac(q: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (a, &x) in q.iter().enumerate() {
        if x > q[best] {
            best = a;
        }
    }
    let mut pi = vec![0.0; q.len()];
    pi[best] = 1.0;
    pi
}
