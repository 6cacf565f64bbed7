//! Small numeric helpers: safeguarded root finding, stable log-sum-exp,
//! and grid construction.

use crate::{Error, Result};

/// Solves f(x) = 0 on [lo, hi] by Newton steps safeguarded with bisection.
///
/// Requires f(lo) <= 0 <= f(hi) (f need not be monotone, but the returned
/// root is only unique if it is). Newton steps that leave the current
/// bracket, or fail to shrink the residual, fall back to bisection, so the
/// iteration cannot escape or stall. Converges when |f(x)| <= tol or the
/// bracket width falls below 1e-15 * max(1, |x|).
pub fn solve_bracketed<F, D>(f: F, df: D, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut lo, mut hi) = (lo, hi);
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::Domain(format!(
            "solve_bracketed: no sign change on [{lo}, {hi}] (f = {flo}, {fhi})"
        )));
    }
    let mut x = 0.5 * (lo + hi);
    let mut fx = f(x);
    for _ in 0..200 {
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 1e-15 * x.abs().max(1.0) {
            return Ok(x);
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        fx = f(x);
    }
    Err(Error::NoConvergence(format!(
        "solve_bracketed: residual {fx} after 200 iterations at x = {x}"
    )))
}

/// log(exp(a) + exp(b)) without overflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// log(sum exp(v_i)) without overflow.
pub fn ln_sum_exp(v: &[f64]) -> f64 {
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + v.iter().map(|&x| (x - hi).exp()).sum::<f64>().ln()
}

/// Clears a strict-monotonicity flag unless the step from prev to cur
/// moves in the given direction (+1 up, -1 down) by more than a
/// 1e-12 relative noise floor.
pub(crate) fn strictly(diffs_ok: &mut bool, prev: f64, cur: f64, direction: f64) {
    let scale = prev.abs().max(1.0);
    if (cur - prev) * direction <= 1e-12 * scale {
        *diffs_ok = false;
    }
}

/// n evenly spaced points covering [lo, hi] inclusive (n >= 2).
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}
