//! Worst-case expectations over rectangular uncertainty balls.
//!
//! For a nominal row `p0` and successor values `v`, the robust operator is
//! `L v = inf { P . v : D(P, p0) <= rho }`. Each metric is evaluated through
//! its one-dimensional dual. Every routine first shifts `v` by its minimum,
//! which makes the operator translation-equivariant by construction and lets
//! the dual variables live on `[0, span / ...]` whatever the sign of `v`.

mod minimize;
pub mod oracle;

use serde::{Deserialize, Serialize};

pub use minimize::minimize_1d;
pub use oracle::{brute_force_worst, grid_slack};

use crate::error::{Error, Result};

/// Row sums may deviate from 1 by this much (empirical rows are exact
/// ratios, model rows are checked to 1e-12 elsewhere).
const ROW_TOL: f64 = 1e-9;
/// Relative search tolerance for the dual variable.
const SEARCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Total variation, `D(P, Q) = 0.5 * |P - Q|_1`.
    Tv,
    /// Pearson chi-squared, `sum (P - Q)^2 / Q`.
    Chi2,
    /// Kullback-Leibler, `sum P log(P / Q)`.
    Kl,
    /// Fixed-temperature exponential tilt of the nominal row.
    KlTilted,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Tv => "tv",
            Metric::Chi2 => "chi2",
            Metric::Kl => "kl",
            Metric::KlTilted => "kl-tilted",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tv" => Ok(Metric::Tv),
            "chi2" | "chi-squared" => Ok(Metric::Chi2),
            "kl" => Ok(Metric::Kl),
            "kl-tilted" | "kltilted" => Ok(Metric::KlTilted),
            other => Err(Error::param("metric", format!("unknown metric `{other}`"))),
        }
    }
}

/// Which successors a perturbed kernel may put mass on.
///
/// Chi-squared and KL balls are always restricted to the nominal support.
/// A TV ball may reach the whole simplex or be restricted the same way.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Support {
    #[default]
    Simplex,
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    pub metric: Metric,
    pub radius: f64,
    /// Tilt temperature, only read by [`Metric::KlTilted`].
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub support: Support,
}

fn default_temperature() -> f64 {
    1.0
}

impl UncertaintySpec {
    pub fn tv(radius: f64) -> Self {
        Self::new(Metric::Tv, radius)
    }

    pub fn chi2(radius: f64) -> Self {
        Self::new(Metric::Chi2, radius)
    }

    pub fn kl(radius: f64) -> Self {
        Self::new(Metric::Kl, radius)
    }

    pub fn kl_tilted(radius: f64, temperature: f64) -> Self {
        UncertaintySpec { temperature, ..Self::new(Metric::KlTilted, radius) }
    }

    pub fn new(metric: Metric, radius: f64) -> Self {
        UncertaintySpec { metric, radius, temperature: default_temperature(), support: Support::Simplex }
    }

    pub fn with_support(mut self, support: Support) -> Self {
        self.support = support;
        self
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::param("rho", format!("must be positive and finite, got {}", self.radius)));
        }
        if self.metric == Metric::KlTilted && !(self.temperature > 0.0) {
            return Err(Error::param("temperature", format!("must be positive, got {}", self.temperature)));
        }
        Ok(())
    }

    /// `inf { P . v : P in ball(p0) }`, or the tilted expectation for
    /// [`Metric::KlTilted`]. `cap` bounds `|v|`.
    pub fn worst_case(&self, p0: &[f64], v: &[f64], cap: f64) -> Result<f64> {
        match self.metric {
            Metric::Tv => worst_tv_on(p0, v, self.radius, cap, self.support),
            Metric::Chi2 => worst_chi2(p0, v, self.radius, cap),
            Metric::Kl => worst_kl(p0, v, self.radius, cap),
            Metric::KlTilted => kl_tilted(p0, v, self.temperature).map(|(value, _)| value),
        }
    }
}

pub(crate) fn check_row(p0: &[f64], v: &[f64]) -> Result<()> {
    if p0.is_empty() || p0.len() != v.len() {
        return Err(Error::InvalidDistribution(format!("row has {} entries, values have {}", p0.len(), v.len())));
    }
    if let Some(p) = p0.iter().find(|p| !(**p >= 0.0 && **p <= 1.0 + ROW_TOL)) {
        return Err(Error::InvalidDistribution(format!("entry {p} outside [0, 1]")));
    }
    let sum: f64 = p0.iter().sum();
    if (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::InvalidDistribution(format!("row sums to {sum}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidDistribution("non-finite value".into()));
    }
    Ok(())
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::param("rho", format!("must be nonnegative and finite, got {radius}")));
    }
    Ok(())
}

fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(p, v)| p * v).sum()
}

/// Minimum of `v` over successors with positive nominal mass.
pub fn support_min(p0: &[f64], v: &[f64]) -> f64 {
    p0.iter().zip(v).filter(|(p, _)| **p > 0.0).map(|(_, v)| *v).fold(f64::INFINITY, f64::min)
}

fn global_min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// The true value always lies in `[floor, p0 . v]`; the clamp only removes
/// floating-point noise from the dual search.
fn sandwich(value: f64, floor: f64, nominal: f64) -> f64 {
    value.max(floor).min(nominal.max(floor))
}

/// Non-negated TV dual objective
/// `E_p0[(eta - v)+] + rho * (eta - min v)+ - eta`.
pub fn tv_dual_objective(p0: &[f64], v: &[f64], radius: f64, eta: f64) -> f64 {
    let m = global_min(v);
    let hinge: f64 = p0.iter().zip(v).map(|(p, x)| p * (eta - x).max(0.0)).sum();
    hinge + radius * (eta - m).max(0.0) - eta
}

/// Worst case over the TV ball `0.5 * |P - p0|_1 <= rho` on the whole simplex.
pub fn worst_tv(p0: &[f64], v: &[f64], radius: f64, cap: f64) -> Result<f64> {
    worst_tv_on(p0, v, radius, cap, Support::Simplex)
}

/// TV worst case with an explicit support restriction.
///
/// The dual objective is piecewise linear and convex in `eta`, so its
/// minimum over `[0, 2 * cap / rho]` sits at `0`, at one of the kinks
/// `v_i - min v`, or at the right end; all of them are evaluated.
pub fn worst_tv_on(p0: &[f64], v: &[f64], radius: f64, cap: f64, support: Support) -> Result<f64> {
    check_row(p0, v)?;
    check_radius(radius)?;
    let nominal = dot(p0, v);
    if radius == 0.0 {
        return Ok(nominal);
    }
    let (p, vals): (Vec<f64>, Vec<f64>) = match support {
        Support::Simplex => (p0.to_vec(), v.to_vec()),
        Support::Nominal => p0.iter().zip(v).filter(|(p, _)| **p > 0.0).map(|(p, v)| (*p, *v)).unzip(),
    };
    let m = global_min(&vals);
    let shifted: Vec<f64> = vals.iter().map(|x| x - m).collect();
    let span = global_min(&shifted.iter().map(|x| -x).collect::<Vec<_>>()).abs();
    let upper = (2.0 * cap.abs()).max(span) / radius;
    let mut best = 0.0_f64;
    for eta in shifted.iter().copied().chain([upper]) {
        if eta <= upper {
            best = best.min(tv_dual_objective(&p, &shifted, radius, eta));
        }
    }
    Ok(sandwich(m - best, m, nominal))
}

/// Non-negated chi-squared dual objective
/// `sqrt(1 + rho) * sqrt(E_p0[(eta - v)+^2]) - eta`.
pub fn chi2_dual_objective(p0: &[f64], v: &[f64], radius: f64, eta: f64) -> f64 {
    let c = (1.0 + radius).sqrt();
    let second: f64 = p0.iter().zip(v).map(|(p, x)| p * (eta - x).max(0.0).powi(2)).sum();
    c * second.sqrt() - eta
}

/// Worst case over the chi-squared ball `sum (P - p0)^2 / p0 <= rho`.
///
/// Searches `eta` on `[0, C span / (C - 1)]` with `C = sqrt(1 + rho)`.
pub fn worst_chi2(p0: &[f64], v: &[f64], radius: f64, cap: f64) -> Result<f64> {
    check_row(p0, v)?;
    check_radius(radius)?;
    let nominal = dot(p0, v);
    let m = support_min(p0, v);
    if radius == 0.0 {
        return Ok(nominal);
    }
    let (p, shifted) = shifted_support(p0, v, m);
    let span = shifted.iter().copied().fold(0.0, f64::max);
    if span == 0.0 {
        return Ok(m);
    }
    let c = (1.0 + radius).sqrt();
    let upper = c * span / (c - 1.0);
    let tol = search_tol(cap, upper);
    let (_, best) = minimize_1d(|eta| chi2_dual_objective(&p, &shifted, radius, eta), 0.0, upper, tol)?;
    Ok(sandwich(m - best.min(0.0), m, nominal))
}

/// Non-negated KL dual objective `lambda * rho + lambda * log E_p0[exp(-v / lambda)]`,
/// with its `lambda -> 0` limit `-min_supp v`.
pub fn kl_dual_objective(p0: &[f64], v: &[f64], radius: f64, lambda: f64) -> f64 {
    let m = support_min(p0, v);
    if lambda <= 0.0 {
        return -m;
    }
    // Shift by the support minimum so every exponent is <= 0.
    let sum: f64 = p0.iter().zip(v).filter(|(p, _)| **p > 0.0).map(|(p, x)| p * (-(x - m) / lambda).exp()).sum();
    lambda * radius + lambda * sum.ln() - m
}

/// Worst case over the KL ball `sum P log(P / p0) <= rho`.
///
/// `lambda` is searched on `[0, span / rho]`; past that point the dual
/// derivative is positive.
pub fn worst_kl(p0: &[f64], v: &[f64], radius: f64, cap: f64) -> Result<f64> {
    check_row(p0, v)?;
    check_radius(radius)?;
    let nominal = dot(p0, v);
    let m = support_min(p0, v);
    if radius == 0.0 {
        return Ok(nominal);
    }
    let (p, shifted) = shifted_support(p0, v, m);
    let span = shifted.iter().copied().fold(0.0, f64::max);
    if span == 0.0 {
        return Ok(m);
    }
    let upper = span / radius;
    let tol = search_tol(cap, upper);
    let (_, best) = minimize_1d(|lambda| kl_dual_objective(&p, &shifted, radius, lambda), 0.0, upper, tol)?;
    Ok(sandwich(m - best.min(0.0), m, nominal))
}

/// Exponential tilt `P* ∝ p0 exp(-v / temperature)` and its expectation of `v`.
pub fn kl_tilted(p0: &[f64], v: &[f64], temperature: f64) -> Result<(f64, Vec<f64>)> {
    check_row(p0, v)?;
    if !(temperature > 0.0) {
        return Err(Error::param("temperature", format!("must be positive, got {temperature}")));
    }
    let m = support_min(p0, v);
    let mut tilted: Vec<f64> =
        p0.iter().zip(v).map(|(p, x)| if *p > 0.0 { p * (-(x - m) / temperature).exp() } else { 0.0 }).collect();
    let z: f64 = tilted.iter().sum();
    tilted.iter_mut().for_each(|t| *t /= z);
    Ok((dot(&tilted, v), tilted))
}

fn shifted_support(p0: &[f64], v: &[f64], m: f64) -> (Vec<f64>, Vec<f64>) {
    p0.iter().zip(v).filter(|(p, _)| **p > 0.0).map(|(p, x)| (*p, x - m)).unzip()
}

fn search_tol(cap: f64, upper: f64) -> f64 {
    let by_cap = SEARCH_TOL * cap.abs();
    let by_range = SEARCH_TOL * upper;
    if by_cap > 0.0 {
        by_cap.min(by_range)
    } else {
        by_range
    }
}
