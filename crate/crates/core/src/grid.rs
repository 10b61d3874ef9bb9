//! Discretized residual-budget axis.
//!
//! The residual budget `c_h = b - sum of utilities so far` lives in
//! `[-H, H]`. It is tracked on a uniform grid and always rounded up to the
//! next grid point, so the grid never understates how much utility is
//! still owed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack (in units of the step) under which a value is treated as
/// already sitting on a grid point. Absorbs the rounding in `-H + i * step`.
const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetGrid {
    horizon: usize,
    step: f64,
    points: Vec<f64>,
}

/// Result of projecting a real budget onto the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Projection {
    pub index: usize,
    /// The input was outside `[points[0], points[last]]` and was clamped.
    pub clamped: bool,
}

impl BudgetGrid {
    /// Points `-H + i * step` for `i = 0..=ceil(2H / step)`.
    pub fn new(horizon: usize, step: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::param("grid_eps", format!("must be positive, got {step}")));
        }
        let h = horizon as f64;
        let intervals = (2.0 * h / step - SNAP).ceil().max(1.0);
        if intervals > 1e8 {
            return Err(Error::param("grid_eps", format!("{intervals} grid intervals is too many")));
        }
        let points = (0..=intervals as usize).map(|i| -h + i as f64 * step).collect();
        Ok(BudgetGrid { horizon, step, points })
    }

    /// `bins` equal intervals over `[-H, H]`, i.e. `bins + 1` points.
    pub fn with_bins(horizon: usize, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::param("bins", "must be at least 1"));
        }
        Self::new(horizon, 2.0 * horizon as f64 / bins as f64)
    }

    /// Resolution `target_eps / H`.
    pub fn for_accuracy(horizon: usize, target_eps: f64) -> Result<Self> {
        Self::new(horizon, target_eps / horizon as f64)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> f64 {
        self.points[index]
    }

    /// Index of the smallest grid point `>= c`. Values outside the grid are
    /// clamped to the nearest endpoint and flagged.
    pub fn project(&self, c: f64) -> Projection {
        let last = self.points.len() - 1;
        let lo = self.points[0];
        let hi = self.points[last];
        let tol = SNAP * self.step;
        if c.is_nan() {
            return Projection { index: last, clamped: true };
        }
        if c <= lo + tol {
            return Projection { index: 0, clamped: c < lo - tol };
        }
        if c > hi + tol {
            return Projection { index: last, clamped: true };
        }
        let mut k = (((c - lo) / self.step).ceil() as usize).min(last);
        while k > 0 && self.points[k - 1] >= c - tol {
            k -= 1;
        }
        while k < last && self.points[k] < c - tol {
            k += 1;
        }
        Projection { index: k, clamped: false }
    }

    pub fn project_index(&self, c: f64) -> usize {
        self.project(c).index
    }

    /// Residual budget after collecting utility `g` from grid point `c_idx`.
    pub fn step_budget(&self, c_idx: usize, g: f64) -> usize {
        if g == 0.0 {
            return c_idx;
        }
        self.project_index(self.points[c_idx] - g)
    }
}
