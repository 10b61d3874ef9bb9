//! Primal brute-force worst cases, independent of the dual formulas.

use super::{check_row, Metric, Support, UncertaintySpec};
use crate::error::{Error, Result};

/// Largest support the grid oracles will enumerate.
pub const MAX_GRID_DIM: usize = 4;
const KL_BISECTIONS: usize = 80;

/// Worst-case expectation found by direct search over the primal ball.
///
/// TV uses the exact greedy transport: up to `rho` mass moves from the
/// highest-valued successors onto the lowest-valued one. Chi-squared and KL
/// scan a simplex grid with `density` subdivisions over the nominal support
/// and, for each grid point `G`, the furthest point `p0 + t (G - p0)` that
/// stays inside the ball. The result is never below the true infimum.
pub fn brute_force_worst(p0: &[f64], v: &[f64], spec: &UncertaintySpec, density: usize) -> Result<f64> {
    check_row(p0, v)?;
    if !(spec.radius >= 0.0) {
        return Err(Error::param("rho", format!("must be nonnegative, got {}", spec.radius)));
    }
    match spec.metric {
        Metric::Tv => Ok(greedy_tv(p0, v, spec.radius, spec.support)),
        Metric::Chi2 | Metric::Kl => grid_search(p0, v, spec.metric, spec.radius, density),
        Metric::KlTilted => Err(Error::param("metric", "the tilted evaluator has no primal ball")),
    }
}

/// Accuracy of the grid oracle for values spanning `span` over `dim`
/// successors: neighbouring grid points differ by at most `2 / density` in
/// L1, so the boundary ray through the best grid point is within that
/// distance of the true minimizer's direction.
pub fn grid_slack(span: f64, dim: usize, density: usize) -> f64 {
    span * dim.saturating_sub(1) as f64 / density as f64
}

fn greedy_tv(p0: &[f64], v: &[f64], radius: f64, support: Support) -> f64 {
    let allowed = |i: usize| support == Support::Simplex || p0[i] > 0.0;
    let target = (0..v.len())
        .filter(|&i| allowed(i))
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if v[b] <= v[i] => Some(b),
            _ => Some(i),
        })
        .expect("row is non-empty");
    let mut order: Vec<usize> = (0..v.len()).filter(|&i| i != target && p0[i] > 0.0).collect();
    order.sort_by(|&i, &j| v[j].total_cmp(&v[i]).then(i.cmp(&j)));
    let mut q = p0.to_vec();
    let mut left = radius;
    for i in order {
        if left <= 0.0 || v[i] <= v[target] {
            break;
        }
        let moved = q[i].min(left);
        q[i] -= moved;
        q[target] += moved;
        left -= moved;
    }
    q.iter().zip(v).map(|(q, v)| q * v).sum()
}

fn grid_search(p0: &[f64], v: &[f64], metric: Metric, radius: f64, density: usize) -> Result<f64> {
    let (p, vals): (Vec<f64>, Vec<f64>) = p0.iter().zip(v).filter(|(p, _)| **p > 0.0).map(|(p, v)| (*p, *v)).unzip();
    let dim = p.len();
    if dim > MAX_GRID_DIM {
        return Err(Error::TooLarge(format!("{dim} successors, grid oracle handles at most {MAX_GRID_DIM}")));
    }
    if density == 0 {
        return Err(Error::param("density", "must be at least 1"));
    }
    let nominal: f64 = p.iter().zip(&vals).map(|(p, v)| p * v).sum();
    if dim == 1 || radius == 0.0 {
        return Ok(nominal);
    }
    let mut best = nominal;
    let mut counts = vec![0usize; dim];
    let mut dir = vec![0.0; dim];
    compositions(density, &mut counts, 0, &mut |c| {
        for i in 0..dim {
            dir[i] = c[i] as f64 / density as f64 - p[i];
        }
        let t = match metric {
            Metric::Chi2 => {
                let q: f64 = dir.iter().zip(&p).map(|(d, p)| d * d / p).sum();
                if q <= radius {
                    1.0
                } else {
                    (radius / q).sqrt()
                }
            }
            _ => kl_reach(&p, &dir, radius),
        };
        let slope: f64 = dir.iter().zip(&vals).map(|(d, v)| d * v).sum();
        best = best.min(nominal + t * slope);
    });
    Ok(best)
}

/// Largest `t` in `[0, 1]` with `KL(p + t d || p) <= rho`. KL along the
/// ray is convex and zero at `t = 0`, so bisection on the sublevel set works.
fn kl_reach(p: &[f64], dir: &[f64], radius: f64) -> f64 {
    let kl = |t: f64| -> f64 {
        p.iter()
            .zip(dir)
            .map(|(p, d)| {
                let q = (p + t * d).max(0.0);
                if q > 0.0 {
                    q * (q / p).ln()
                } else {
                    0.0
                }
            })
            .sum()
    };
    if kl(1.0) <= radius {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..KL_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if kl(mid) <= radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn compositions(total: usize, counts: &mut [usize], at: usize, visit: &mut impl FnMut(&[usize])) {
    if at + 1 == counts.len() {
        counts[at] = total;
        visit(counts);
        return;
    }
    for k in 0..=total {
        counts[at] = k;
        compositions(total - k, counts, at + 1, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_tv_moves_mass_to_the_minimum() {
        let spec = UncertaintySpec::tv(0.2);
        let got = brute_force_worst(&[0.5, 0.5], &[0.0, 1.0], &spec, 1).unwrap();
        assert!((got - 0.3).abs() < 1e-12);
        let got = brute_force_worst(&[0.2, 0.3, 0.5], &[1.0, 0.5, 2.0], &spec, 1).unwrap();
        // 0.2 of mass leaves the value-2 successor for the value-0.5 one.
        assert!((got - (0.2 + 0.5 * 0.5 + 0.3 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn nominal_support_tv_keeps_zero_entries_empty() {
        let spec = UncertaintySpec::tv(0.3).with_support(Support::Nominal);
        let got = brute_force_worst(&[0.0, 0.5, 0.5], &[-5.0, 0.0, 1.0], &spec, 1).unwrap();
        assert!((got - 0.2).abs() < 1e-12);
        let free = brute_force_worst(&[0.0, 0.5, 0.5], &[-5.0, 0.0, 1.0], &UncertaintySpec::tv(0.3), 1).unwrap();
        assert!((free - (0.3 * -5.0 + 0.5 * 0.0 + 0.2)).abs() < 1e-12);
    }

    #[test]
    fn zero_radius_is_nominal() {
        let p0 = [0.3, 0.7];
        let v = [2.0, -1.0];
        for metric in [Metric::Tv, Metric::Chi2, Metric::Kl] {
            let got = brute_force_worst(&p0, &v, &UncertaintySpec::new(metric, 0.0), 50).unwrap();
            assert!((got - (0.6 - 0.7)).abs() < 1e-12, "{metric:?}");
        }
    }

    #[test]
    fn chi2_boundary_on_two_points() {
        // {(p, 1 - p) : 4 (p - 1/2)^2 <= rho}, minimized at p = 1/2 + sqrt(rho)/2.
        let rho: f64 = 0.5;
        let got = brute_force_worst(&[0.5, 0.5], &[0.0, 1.0], &UncertaintySpec::chi2(rho), 400).unwrap();
        assert!((got - (0.5 - rho.sqrt() / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn too_many_successors_is_rejected() {
        let p0 = [0.2; 5];
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert!(matches!(brute_force_worst(&p0, &v, &UncertaintySpec::kl(0.1), 10), Err(Error::TooLarge(_))));
        assert!(brute_force_worst(&p0, &v, &UncertaintySpec::tv(0.1), 10).is_ok());
    }
}
