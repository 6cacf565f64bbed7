//! Exact block-occupancy counts and their saddle-point form.
//!
//! `exact_m(m, n)` counts maps from m labeled slots onto n labeled
//! variables with every variable hit at least twice; equivalently
//! m! [x^m] q(x)^n with q(x) = e^x - x - 1. Three independent routes are
//! provided and cross-checked in the tests; the two-term recurrence is
//! the fast default and is the one used at large sizes.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::{comb, genfn, Error, Result};

/// Occupancy count M(m, n); zero when m < 2n, one when m = n = 0.
///
/// Route: the recurrence b(m, n) = n b(m-1, n) + (m-1) b(m-2, n-1) for
/// partitions of m slots into n unlabeled blocks of size >= 2 (condition
/// on what the last slot does: it either joins one of the n blocks of a
/// partition of m-1 slots, or forms a new pair with one of the other
/// m-1 slots). M = n! b labels the blocks.
pub fn exact_m(m: u64, n: u64) -> BigInt {
    if m < 2 * n {
        return BigInt::zero();
    }
    if n == 0 {
        return if m == 0 { BigInt::one() } else { BigInt::zero() };
    }
    let cols = n as usize + 1;
    // rows i-2, i-1, i of b(i, j)
    let mut prev2 = vec![BigInt::zero(); cols];
    let mut prev = vec![BigInt::zero(); cols];
    let mut cur = vec![BigInt::zero(); cols];
    prev2[0] = BigInt::one(); // b(0, 0) = 1; the i = 1 row is all zero
    if m == 0 {
        return BigInt::zero(); // unreachable: m >= 2n >= 2 here
    }
    for i in 2..=m {
        cur[0] = BigInt::zero(); // b(i, 0) = 0 for i >= 1; buffer is recycled
        let jmax = (n).min(i / 2) as usize;
        for j in 1..=jmax {
            cur[j] = BigInt::from(j as u64) * &prev[j] + BigInt::from(i - 1) * &prev2[j - 1];
        }
        cur[jmax + 1..].fill(BigInt::zero());
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    comb::factorial(n) * &prev[n as usize]
}

/// Same count by coefficient convolution: M(m, n) =
/// sum over j >= 2 of binom(m, j) M(m - j, n - 1), the last variable
/// taking a j-subset of the slots.
pub fn exact_m_convolution(m: u64, n: u64) -> BigInt {
    let mu = m as usize;
    let mut cur = vec![BigInt::zero(); mu + 1];
    cur[0] = BigInt::one();
    for _ in 1..=n {
        let mut next = vec![BigInt::zero(); mu + 1];
        for (target, slot) in next.iter_mut().enumerate().skip(2) {
            let mut acc = BigInt::zero();
            for j in 2..=target {
                if !cur[target - j].is_zero() {
                    acc += comb::binomial(target as u64, j as u64) * &cur[target - j];
                }
            }
            *slot = acc;
        }
        cur = next;
    }
    cur[mu].clone()
}

/// Same count by inclusion-exclusion over the set of variables receiving
/// fewer than two slots (j of the i excluded variables get exactly one).
pub fn exact_m_inclusion_exclusion(m: u64, n: u64) -> BigInt {
    let mut total = BigInt::zero();
    for i in 0..=n {
        let mut inner = BigInt::zero();
        for j in 0..=i.min(m) {
            inner += comb::binomial(i, j)
                * comb::falling(m, j)
                * BigInt::from(n - i).pow((m - j) as u32);
        }
        let term = comb::binomial(n, i) * inner;
        if i % 2 == 0 {
            total += term;
        } else {
            total -= term;
        }
    }
    total
}

/// Natural log of a positive big integer, ~1e-15 relative accuracy even
/// far beyond f64 range.
pub fn ln_big(x: &BigInt) -> f64 {
    assert!(x.is_positive(), "ln_big needs a positive integer");
    let bits = x.bits();
    if bits <= 900 {
        x.to_f64().unwrap().ln()
    } else {
        let shift = bits - 64;
        let top: BigInt = x >> shift;
        top.to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
    }
}

/// Log of the saddle-point form (m/(a e))^m q(a)^n, where a solves
/// Q(a) = m/n. Requires m/n > 2.
pub fn mloc_ln(m: u64, n: u64) -> Result<f64> {
    let a = genfn::q_ratio_inverse(m as f64 / n as f64)?;
    Ok(m as f64 * ((m as f64).ln() - a.ln() - 1.0) + n as f64 * genfn::ln_q(a))
}

/// Ratio of the exact count M(m, n) to its saddle-point form, evaluated
/// in the log domain. As n grows with m/n fixed it converges to
/// 1/sqrt(C(a) Q(a)).
pub fn mloc_ratio(m: u64, n: u64) -> Result<f64> {
    let exact = exact_m(m, n);
    if exact.is_zero() {
        return Err(Error::Domain(format!(
            "mloc_ratio: M({m}, {n}) = 0, need m >= 2n"
        )));
    }
    Ok((ln_big(&exact) - mloc_ln(m, n)?).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genfn::{curvature, q_ratio_inverse};

    #[test]
    fn anchors() {
        let cases = [
            (0u64, 0u64, 1u64),
            (2, 1, 1),
            (3, 1, 1),
            (4, 2, 6),
            (5, 2, 20),
            (6, 3, 90),
            (8, 4, 2520),
            (9, 4, 30240),
        ];
        for (m, n, want) in cases {
            assert_eq!(exact_m(m, n), BigInt::from(want), "M({m}, {n})");
        }
        assert_eq!(exact_m(3, 2), BigInt::zero());
        assert_eq!(exact_m(6, 6), BigInt::zero());
        assert_eq!(exact_m(5, 0), BigInt::zero());
    }

    #[test]
    fn routes_agree_full_range() {
        // recurrence vs inclusion-exclusion on the whole guarded range
        for n in 0..=20u64 {
            for m in 0..=60u64 {
                assert_eq!(
                    exact_m(m, n),
                    exact_m_inclusion_exclusion(m, n),
                    "recurrence vs IE at ({m}, {n})"
                );
            }
        }
        // convolution route on a subgrid (it is O(m^2) per call)
        for n in 0..=8u64 {
            for m in (0..=40u64).step_by(4) {
                assert_eq!(
                    exact_m(m, n),
                    exact_m_convolution(m, n),
                    "recurrence vs convolution at ({m}, {n})"
                );
            }
        }
    }

    #[test]
    fn ln_big_handles_huge_values() {
        let x = BigInt::from(7).pow(5000);
        let want = 5000.0 * 7f64.ln();
        assert!((ln_big(&x) - want).abs() < 1e-10 * want);
        assert!((ln_big(&BigInt::from(1)) - 0.0).abs() < 1e-300);
    }

    #[test]
    fn mloc_ratio_converges_to_gaussian_correction() {
        // m/n = 3: ratio drifts towards 1/sqrt(C(a) Q(a))
        let a = q_ratio_inverse(3.0).unwrap();
        let limit = 1.0 / (curvature(a) * 3.0).sqrt();
        let r20 = mloc_ratio(60, 20).unwrap();
        let r80 = mloc_ratio(240, 80).unwrap();
        let r320 = mloc_ratio(960, 320).unwrap();
        assert!((r320 / limit - 1.0).abs() < 0.01, "r320 = {r320}, limit = {limit}");
        assert!(
            (r320 - limit).abs() < (r80 - limit).abs()
                && (r80 - limit).abs() < (r20 - limit).abs(),
            "no convergence: {r20} {r80} {r320} -> {limit}"
        );
    }
}
