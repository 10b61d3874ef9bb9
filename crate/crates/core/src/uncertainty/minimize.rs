use crate::error::{Error, Result};

const SCAN_POINTS: usize = 64;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes a unimodal `f` on `[lo, hi]`: a uniform 64-point scan picks a
/// bracket, golden-section search shrinks it below `tol`.
///
/// Returns `(argmin, min)`. The endpoints and scan points are candidates
/// too, so a flat or monotone `f` is handled.
pub fn minimize_1d<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::param("interval", format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", format!("must be positive, got {tol}")));
    }
    let mut eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite { value: y, at: x })
        }
    };

    let width = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let grid_x = |i: usize| if i == SCAN_POINTS - 1 { hi } else { lo + i as f64 * width };
    let mut best_i = 0;
    let mut best = (lo, eval(lo)?);
    for i in 1..SCAN_POINTS {
        let x = grid_x(i);
        let y = eval(x)?;
        if y < best.1 {
            best = (x, y);
            best_i = i;
        }
    }

    let mut a = grid_x(best_i.saturating_sub(1));
    let mut b = grid_x((best_i + 1).min(SCAN_POINTS - 1));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    for (x, y) in [(c, fc), (d, fd)] {
        if y < best.1 {
            best = (x, y);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = eval(mid)?;
    if fm < best.1 {
        best = (mid, fm);
    }
    Ok(best)
}
