//! Scalar generating functions and constraint-weight polynomials.
//!
//! Everything downstream (moment bounds, exact counts, Gaussian
//! corrections) is built from a handful of elementary functions evaluated
//! deep inside n-th powers, so relative accuracy near machine epsilon is
//! required across the whole domain. Functions with catastrophic
//! cancellation near zero (`q_eval`, `curvature`, `q_ratio`) switch to
//! truncated Taylor series on small arguments; functions that would
//! overflow for large arguments switch to forms scaled by e^{-x}.
//!
//! The cast:
//!
//! - `q(x) = e^x - x - 1`, the exponential generating function of sets of
//!   size at least two. It counts occupancy patterns in which every used
//!   variable appears in at least two constraint slots.
//! - `Q(x) = x q'(x)/q(x)`, the mean-occupancy functional. It increases
//!   strictly from 2 (at x -> 0) to infinity, so [`q_ratio_inverse`] is
//!   well defined for targets above 2. The model's scale parameter `s`
//!   solves Q(s) = k*gamma.
//! - `C(x) = q/(x q') + q'' q / q'^2 - 1`, the curvature of the occupancy
//!   tilt; it satisfies Q'(x) = C(x) Q(x)^2 / x and C(x) = x/12 + O(x^3),
//!   and appears in Hessians and Gaussian corrections.
//! - `r(x0, x1, x2)`, the weight enumerator of a single equation mod 3
//!   over overlap profiles: the coefficient of x^(k0,k1,k2) counts ordered
//!   k-tuples whose slot pattern is consistent with a fixed solution-pair
//!   difference profile, which happens exactly when k1 = k2 (mod 3).
//! - `p(z)`, the weight enumerator of a uniquely extendible constraint
//!   over a d-element domain: p(z) = sum_i binom(k,i) p_i z^i where p_i is
//!   the probability that flipping i fixed coordinates of a satisfying
//!   tuple can be completed to another satisfying tuple.
//!
//! The ratio maps `R(c1,c2) = (c1 r_1/r, c2 r_2/r)` (partials of r at
//! (1,c1,c2)) and `P(z) = z p'(z)/p(z)` turn stationarity conditions of
//! the moment functionals into root-finding problems; their inverses are
//! computed by damped Newton iterations with analytic Jacobians.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::comb;
use crate::util::solve_bracketed;
use crate::{Error, Result};

/// Below this threshold the q-family uses Taylor series.
const SMALL_X: f64 = 0.01;
/// Above this threshold the q-family uses e^{-x}-scaled forms.
const LARGE_X: f64 = 30.0;

/// q(x) = e^x - x - 1.
///
/// Series branch below |x| < 0.01 avoids the cancellation in
/// expm1(x) - x, which loses a factor 2/x of precision.
pub fn q_eval(x: f64) -> f64 {
    if x.abs() < SMALL_X {
        // x^2/2 * (1 + x/3 + ...) up to x^8; truncation < 1e-19 relative
        x * x
            * (1.0 / 2.0
                + x * (1.0 / 6.0
                    + x * (1.0 / 24.0
                        + x * (1.0 / 120.0
                            + x * (1.0 / 720.0 + x * (1.0 / 5040.0 + x / 40320.0))))))
    } else {
        x.exp_m1() - x
    }
}

/// q'(x) = e^x - 1.
pub fn q_prime(x: f64) -> f64 {
    x.exp_m1()
}

/// q''(x) = e^x.
pub fn q_dprime(x: f64) -> f64 {
    x.exp()
}

/// ln q(x) for x >= 0, accurate from subnormal arguments to x ~ 1e15.
///
/// Returns -inf at x = 0.
pub fn ln_q(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < SMALL_X {
        // ln(x^2/2) + ln1p(q(x)/(x^2/2) - 1)
        let u = x * (1.0 / 3.0
            + x * (1.0 / 12.0
                + x * (1.0 / 60.0 + x * (1.0 / 360.0 + x * (1.0 / 2520.0 + x / 20160.0)))));
        2.0 * x.ln() - std::f64::consts::LN_2 + u.ln_1p()
    } else if x <= LARGE_X {
        (x.exp_m1() - x).ln()
    } else {
        // q = e^x (1 - (x+1)e^{-x})
        x + (-(x + 1.0) * (-x).exp()).ln_1p()
    }
}

/// ln q'(x) = ln(e^x - 1) for x > 0, without overflow.
pub fn ln_q_prime(x: f64) -> f64 {
    if x > LARGE_X {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Q(x) = x q'(x)/q(x); Q(0) = 2 by continuity.
///
/// Strictly increasing, with max(2, x) < Q(x) <= x + 2 for x > 0.
pub fn q_ratio(x: f64) -> f64 {
    if x < SMALL_X {
        // 2 * (q'/x) / (q/(x^2/2)): both factors are series with unit
        // constant term, so this is exact even for subnormal x.
        let num = 1.0
            + x * (1.0 / 2.0
                + x * (1.0 / 6.0 + x * (1.0 / 24.0 + x * (1.0 / 120.0 + x / 720.0))));
        let den = 1.0
            + x * (1.0 / 3.0
                + x * (1.0 / 12.0 + x * (1.0 / 60.0 + x * (1.0 / 360.0 + x / 2520.0))));
        2.0 * num / den
    } else if x <= LARGE_X {
        x * x.exp_m1() / q_eval(x)
    } else {
        // Q = x + x^2/q, with x^2/q written in e^{-x}-scaled form
        let t = (-x).exp();
        x + x * x * t / (1.0 - (x + 1.0) * t)
    }
}

/// Inverse of [`q_ratio`]: the unique s > 0 with Q(s) = t.
///
/// Requires t > 2 + 1e-9; the residual tolerance is 1e-12 relative.
/// Newton steps use the identity Q'(x) = C(x) Q(x)^2 / x inside a
/// bisection safeguard on the bracket [t-2, t], which always contains the
/// root because x < Q(x) <= x + 2.
pub fn q_ratio_inverse(t: f64) -> Result<f64> {
    if t.is_nan() || t <= 2.0 + 1e-9 {
        return Err(Error::Domain(format!(
            "q_ratio_inverse needs t > 2 + 1e-9, got {t}"
        )));
    }
    solve_bracketed(
        |x| q_ratio(x) - t,
        |x| curvature(x) * q_ratio(x).powi(2) / x,
        t - 2.0,
        t,
        1e-12 * t.max(1.0),
    )
}

/// C(x) = q/(x q') + q'' q / q'^2 - 1.
///
/// All three branches keep relative error near 1e-13: an odd Taylor
/// series below 0.5 (the two closed-form terms cancel to O(x) there), the
/// direct form up to 30, and an e^{-x}-scaled form beyond.
pub fn curvature(x: f64) -> f64 {
    if x < 0.5 {
        let x2 = x * x;
        x * (1.0 / 12.0
            + x2 * (-1.0 / 240.0
                + x2 * (1.0 / 6048.0
                    + x2 * (-1.0 / 172_800.0
                        + x2 * (1.0 / 5_322_240.0
                            + x2 * (-691.0 / 118_879_488_000.0
                                + x2 * (1.0 / 5_748_019_200.0)))))))
    } else if x <= LARGE_X {
        let q = q_eval(x);
        let qp = x.exp_m1();
        // q''q - q'^2 simplifies to e^x(1-x) - 1
        let n = x.exp_m1() - x * x.exp();
        q / (x * qp) + n / (qp * qp)
    } else {
        let t = (-x).exp();
        (1.0 - (x + 1.0) * t) / (x * (1.0 - t)) + ((1.0 - x) * t - t * t) / ((1.0 - t) * (1.0 - t))
    }
}

/// The three occupancy ratios (L, K, M) = (q(as)/q(s), q'(as)/q'(s),
/// e^{(a-1)s}) for a in [0, 1], s > 0.
///
/// They satisfy a*K <= L <= K <= M, with equality only at a = 1, and
/// a*K <= (7/10) L for a <= 1/2, s >= 4.
pub fn ratio_lkm(a: f64, s: f64) -> (f64, f64, f64) {
    let m = ((a - 1.0) * s).exp();
    if a <= 0.0 {
        return (0.0, 0.0, m);
    }
    let l = (ln_q(a * s) - ln_q(s)).exp();
    let k = (ln_q_prime(a * s) - ln_q_prime(s)).exp();
    (l, k, m)
}

/// Primitive cube root of unity e^{2 pi i / 3}.
fn omega() -> Complex64 {
    Complex64::new(-0.5, 0.75f64.sqrt())
}

/// The complex linear form x0 + w x1 + w^2 x2.
fn r_form(x: [f64; 3]) -> Complex64 {
    let w = omega();
    Complex64::new(x[0], 0.0) + w * x[1] + w * w * x[2]
}

/// r(x0,x1,x2) = ((x0+x1+x2)^k + 2 Re((x0 + w x1 + w^2 x2)^k)) / 3.
///
/// Equals the sum over k0+k1+k2 = k with k1 = k2 (mod 3) of multinomial
/// coefficients times x0^k0 x1^k1 x2^k2; see [`r_coeff`].
pub fn r_eval(k: u32, x: [f64; 3]) -> f64 {
    let s = x[0] + x[1] + x[2];
    (s.powi(k as i32) + 2.0 * r_form(x).powu(k).re) / 3.0
}

/// Gradient of [`r_eval`] in its three arguments.
pub fn r_grad(k: u32, x: [f64; 3]) -> [f64; 3] {
    assert!(k >= 1, "r_grad needs k >= 1");
    let s = x[0] + x[1] + x[2];
    let zp = r_form(x).powu(k - 1);
    let sp = s.powi(k as i32 - 1);
    let w = omega();
    let mut g = [0.0; 3];
    let mut wj = Complex64::new(1.0, 0.0);
    for (j, gj) in g.iter_mut().enumerate() {
        *gj = k as f64 / 3.0 * (sp + 2.0 * (wj * zp).re);
        if j < 2 {
            wj *= w;
        }
    }
    g
}

/// Hessian of [`r_eval`]: entry (i, j) uses the phase w^{i+j}.
pub fn r_hess(k: u32, x: [f64; 3]) -> [[f64; 3]; 3] {
    assert!(k >= 2, "r_hess needs k >= 2");
    let s = x[0] + x[1] + x[2];
    let zp = r_form(x).powu(k - 2);
    let sp = s.powi(k as i32 - 2);
    let w = omega();
    let ws = [Complex64::new(1.0, 0.0), w, w * w];
    let kk = (k * (k - 1)) as f64 / 3.0;
    let mut h = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            h[i][j] = kk * (sp + 2.0 * (ws[(i + j) % 3] * zp).re);
        }
    }
    h
}

/// Exact coefficient of x0^k0 x1^k1 x2^k2 in r: the multinomial
/// coefficient when k1 = k2 (mod 3), zero otherwise.
pub fn r_coeff(k: u32, parts: [u32; 3]) -> BigInt {
    assert_eq!(parts.iter().sum::<u32>(), k, "r_coeff parts must sum to k");
    if parts[1] % 3 != parts[2] % 3 {
        return BigInt::zero();
    }
    comb::multinomial(
        k as u64,
        &[parts[0] as u64, parts[1] as u64, parts[2] as u64],
    )
}

/// R(c1,c2) = (c1 r_1/r, c2 r_2/r) with partials taken at (1, c1, c2).
///
/// R(1,1) = (k/3, k/3); a stationary overlap profile with constraint
/// fractions (lambda1, lambda2) solves R(c) = (k lambda1, k lambda2).
pub fn r_ratio_map(k: u32, c1: f64, c2: f64) -> (f64, f64) {
    let x = [1.0, c1, c2];
    let r = r_eval(k, x);
    let g = r_grad(k, x);
    (c1 * g[1] / r, c2 * g[2] / r)
}

/// Analytic Jacobian of [`r_ratio_map`] in (c1, c2).
pub fn r_ratio_jacobian(k: u32, c1: f64, c2: f64) -> [[f64; 2]; 2] {
    let x = [1.0, c1, c2];
    let r = r_eval(k, x);
    let g = r_grad(k, x);
    let h = r_hess(k, x);
    let c = [c1, c2];
    let mut j = [[0.0; 2]; 2];
    for i in 0..2 {
        for l in 0..2 {
            let diag = if i == l { g[i + 1] / r } else { 0.0 };
            j[i][l] = diag + c[i] * (h[i + 1][l + 1] / r - g[i + 1] * g[l + 1] / (r * r));
        }
    }
    j
}

/// Inverse of [`r_ratio_map`] by damped Newton from (1, 1).
///
/// Converges for targets in a neighborhood of the center (k/3, k/3); the
/// residual tolerance is 1e-10 (relative to max(1, |t|)). Steps are
/// halved until they stay in the positive quadrant and shrink the
/// residual.
pub fn r_ratio_inverse(k: u32, t1: f64, t2: f64) -> Result<(f64, f64)> {
    let tol = 1e-10 * t1.abs().max(t2.abs()).max(1.0);
    let residual = |c: (f64, f64)| {
        let (r1, r2) = r_ratio_map(k, c.0, c.1);
        (r1 - t1, r2 - t2)
    };
    let mut c = (1.0, 1.0);
    let mut f = residual(c);
    let mut n2 = f.0 * f.0 + f.1 * f.1;
    for _ in 0..200 {
        if n2.sqrt() <= tol {
            return Ok(c);
        }
        let j = r_ratio_jacobian(k, c.0, c.1);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NoConvergence(format!(
                "r_ratio_inverse: singular Jacobian at c = {c:?}"
            )));
        }
        let dx = (
            -(f.0 * j[1][1] - f.1 * j[0][1]) / det,
            -(j[0][0] * f.1 - j[1][0] * f.0) / det,
        );
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = (c.0 + alpha * dx.0, c.1 + alpha * dx.1);
            if cand.0 > 0.0 && cand.1 > 0.0 {
                let fc = residual(cand);
                let cn2 = fc.0 * fc.0 + fc.1 * fc.1;
                if cn2 < n2 {
                    c = cand;
                    f = fc;
                    n2 = cn2;
                    moved = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !moved {
            return Err(Error::NoConvergence(format!(
                "r_ratio_inverse: line search stalled at c = {c:?}, target ({t1}, {t2})"
            )));
        }
    }
    if n2.sqrt() <= tol {
        Ok(c)
    } else {
        Err(Error::NoConvergence(format!(
            "r_ratio_inverse: residual {} after 200 iterations",
            n2.sqrt()
        )))
    }
}

/// p(z) = ((1+z)^k + (d-1)(1 - z/(d-1))^k) / d.
///
/// Positive for all z >= 0; p(d-1) = d^{k-1}.
pub fn p_eval(k: u32, d: u32, z: f64) -> f64 {
    let dm = (d - 1) as f64;
    ((1.0 + z).powi(k as i32) + dm * (1.0 - z / dm).powi(k as i32)) / d as f64
}

/// p'(z) = (k/d)((1+z)^{k-1} - (1 - z/(d-1))^{k-1}).
pub fn p_prime(k: u32, d: u32, z: f64) -> f64 {
    assert!(k >= 1, "p_prime needs k >= 1");
    let dm = (d - 1) as f64;
    k as f64 / d as f64 * ((1.0 + z).powi(k as i32 - 1) - (1.0 - z / dm).powi(k as i32 - 1))
}

/// p''(z) = (k(k-1)/d)((1+z)^{k-2} + (1 - z/(d-1))^{k-2}/(d-1)).
pub fn p_dprime(k: u32, d: u32, z: f64) -> f64 {
    assert!(k >= 2, "p_dprime needs k >= 2");
    let dm = (d - 1) as f64;
    (k * (k - 1)) as f64 / d as f64
        * ((1.0 + z).powi(k as i32 - 2) + (1.0 - z / dm).powi(k as i32 - 2) / dm)
}

/// Exact flip-completion probability p_i = (1 + (-1)^i (d-1)^{1-i}) / d.
///
/// p_0 = 1, p_1 = 0, p_2 = 1/(d-1).
pub fn p_coeff_closed(d: u32, i: u32) -> BigRational {
    assert!(d >= 2, "p_coeff_closed needs d >= 2");
    if i == 0 {
        return BigRational::one();
    }
    let pw = BigInt::from(d - 1).pow(i - 1);
    let sign = if i.is_multiple_of(2) {
        BigInt::one()
    } else {
        -BigInt::one()
    };
    BigRational::new(&pw + sign, BigInt::from(d) * pw)
}

/// Coefficients of p(z) as exact rationals, computed by expanding the two
/// binomial terms independently of [`p_coeff_closed`].
pub fn p_poly_coeffs(k: u32, d: u32) -> Vec<BigRational> {
    assert!(d >= 2, "p_poly_coeffs needs d >= 2");
    let dm = BigInt::from(d - 1);
    (0..=k)
        .map(|i| {
            let b = comb::binomial(k as u64, i as u64);
            let t1 = BigRational::from_integer(b.clone());
            let sign = if i.is_multiple_of(2) {
                BigInt::one()
            } else {
                -BigInt::one()
            };
            // (d-1) * (-1/(d-1))^i * binom = sign * binom * (d-1)^{1-i}
            let t2 = if i == 0 {
                BigRational::from_integer(&dm * b)
            } else {
                BigRational::new(sign * b, dm.pow(i - 1))
            };
            (t1 + t2) / BigRational::from_integer(BigInt::from(d))
        })
        .collect()
}

/// P(z) = z p'(z)/p(z); strictly increasing from P(0) = 0 towards k, with
/// P(d-1) = k(1 - 1/d).
pub fn p_ratio_map(k: u32, d: u32, z: f64) -> f64 {
    z * p_prime(k, d, z) / p_eval(k, d, z)
}

/// Inverse of [`p_ratio_map`]: the z > 0 with P(z) = t, for 0 < t < k.
///
/// Residual tolerance 1e-10 relative. The bracket starts at [0, d-1] and
/// doubles its upper end until it straddles the target.
pub fn p_ratio_inverse(k: u32, d: u32, t: f64) -> Result<f64> {
    let kf = k as f64;
    if !(t > 0.0 && t < kf * (1.0 - 1e-12)) {
        return Err(Error::Domain(format!(
            "p_ratio_inverse needs 0 < t < k, got t = {t}, k = {k}"
        )));
    }
    let mut hi = (d - 1) as f64;
    let mut grow = 0;
    while p_ratio_map(k, d, hi) < t {
        hi *= 2.0;
        grow += 1;
        if grow > 100 {
            return Err(Error::NoConvergence(format!(
                "p_ratio_inverse: bracket failed to reach t = {t}"
            )));
        }
    }
    let dp = |z: f64| {
        let p = p_eval(k, d, z);
        let pp = p_prime(k, d, z);
        (pp + z * p_dprime(k, d, z)) / p - (z * pp / p) * (pp / p)
    };
    solve_bracketed(
        |z| p_ratio_map(k, d, z) - t,
        dp,
        0.0,
        hi,
        1e-10 * t.max(1.0),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::linspace;
    use num_traits::ToPrimitive;

    fn assert_rel(a: f64, b: f64, tol: f64, what: &str) {
        let scale = a.abs().max(b.abs()).max(1e-300);
        assert!(
            (a - b).abs() <= tol * scale,
            "{what}: {a} vs {b} (rel err {})",
            (a - b).abs() / scale
        );
    }

    /// Exact rational evaluation of the q-family via truncated exp series.
    mod oracle {
        use num_bigint::BigInt;
        use num_rational::BigRational;
        use num_traits::One;

        pub fn rat(x: f64) -> BigRational {
            BigRational::from_float(x).unwrap()
        }

        /// e^x truncated after `terms` series terms; for the x and term
        /// counts used here the tail is below 1e-40 relative.
        pub fn exp(x: &BigRational, terms: u32) -> BigRational {
            let mut term = BigRational::one();
            let mut sum = BigRational::one();
            for j in 1..=terms {
                term = term * x / BigRational::from_integer(BigInt::from(j));
                sum += &term;
            }
            sum
        }

        pub fn q(x: &BigRational, terms: u32) -> BigRational {
            exp(x, terms) - x - BigRational::one()
        }

        pub fn q_ratio(x: &BigRational, terms: u32) -> BigRational {
            let e = exp(x, terms);
            let qp = &e - BigRational::one();
            let qq = &e - x - BigRational::one();
            x * qp / qq
        }

        pub fn curvature(x: &BigRational, terms: u32) -> BigRational {
            let e = exp(x, terms);
            let qq = &e - x - BigRational::one();
            let qp = &e - BigRational::one();
            &qq / (x * &qp) + &e * &qq / (&qp * &qp) - BigRational::one()
        }
    }

    const ORACLE_PTS: [f64; 14] = [
        1e-8, 1e-6, 1e-4, 5e-3, 9.9e-3, 1.01e-2, 0.05, 0.3, 1.0, 2.5, 10.0, 25.0, 29.0, 31.0,
    ];

    fn terms_for(x: f64) -> u32 {
        if x <= 1.0 {
            60
        } else if x <= 31.0 {
            180
        } else {
            300
        }
    }

    #[test]
    fn q_matches_rational_oracle() {
        for &x in &ORACLE_PTS {
            let want = oracle::q(&oracle::rat(x), terms_for(x)).to_f64().unwrap();
            assert_rel(q_eval(x), want, 1e-13, &format!("q({x})"));
            assert_rel(q_prime(x), x.exp_m1(), 0.0, "q_prime is expm1");
        }
    }

    #[test]
    fn ln_q_matches_rational_oracle() {
        for &x in &ORACLE_PTS {
            let want = oracle::q(&oracle::rat(x), terms_for(x)).to_f64().unwrap().ln();
            let got = ln_q(x);
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "ln_q({x}): {got} vs {want}"
            );
        }
        // large-x branch: q(50) still fits in f64 comfortably
        let want = oracle::q(&oracle::rat(50.0), 300).to_f64().unwrap().ln();
        assert!((ln_q(50.0) - want).abs() <= 1e-12 * want);
        assert_eq!(ln_q(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn q_ratio_matches_rational_oracle() {
        for &x in &ORACLE_PTS {
            let want = oracle::q_ratio(&oracle::rat(x), terms_for(x))
                .to_f64()
                .unwrap();
            assert_rel(q_ratio(x), want, 1e-13, &format!("Q({x})"));
        }
    }

    #[test]
    fn q_ratio_monotone_and_bounded() {
        let grid = linspace(1e-6, 50.0, 2000);
        let mut prev = q_ratio(grid[0]);
        assert!(prev > 2.0);
        for &x in &grid[1..] {
            let v = q_ratio(x);
            assert!(v > prev, "Q not increasing at {x}");
            // Q > x strictly, but the excess x^2/q underflows one ulp of x
            // once x > ~37, so allow equality there.
            assert!(v >= x && v <= x + 2.0, "Q out of [x, x+2] at {x}: {v}");
            prev = v;
        }
        // continuity at 0: Q -> 2
        assert_rel(q_ratio(1e-300), 2.0, 1e-15, "Q(0+)");
    }

    #[test]
    fn q_ratio_inverse_round_trip() {
        for &t in &[
            2.000000002, 2.0001, 2.5, 2.7, 3.0, 5.0, 10.0, 13.5, 20.0, 50.0, 200.0,
        ] {
            let s = q_ratio_inverse(t).unwrap();
            assert!(
                (q_ratio(s) - t).abs() <= 1e-12 * t.max(1.0) * 1.01,
                "round trip failed at t = {t}"
            );
        }
    }

    #[test]
    fn q_ratio_inverse_rejects_subcritical() {
        assert!(q_ratio_inverse(2.0).is_err());
        assert!(q_ratio_inverse(2.0 + 1e-10).is_err());
        assert!(q_ratio_inverse(f64::NAN).is_err());
    }

    #[test]
    fn curvature_matches_rational_oracle() {
        let pts = [
            1e-6, 1e-4, 1e-3, 0.01, 0.05, 0.15, 0.49, 0.51, 1.0, 2.0, 5.0, 10.0, 25.0, 29.0, 31.0,
        ];
        for &x in &pts {
            let want = oracle::curvature(&oracle::rat(x), terms_for(x))
                .to_f64()
                .unwrap();
            assert_rel(curvature(x), want, 1e-11, &format!("C({x})"));
        }
        // leading slope is 1/12
        assert!((curvature(1e-3) / 1e-3 - 1.0 / 12.0).abs() < 1e-7);
    }

    #[test]
    fn q_ratio_derivative_identity() {
        // Q'(x) = C(x) Q(x)^2 / x against central differences
        for &x in &[0.3f64, 1.0, 3.0, 8.0, 15.0] {
            let h = 6e-6 * x.max(1.0);
            let numeric = (q_ratio(x + h) - q_ratio(x - h)) / (2.0 * h);
            let analytic = curvature(x) * q_ratio(x).powi(2) / x;
            assert_rel(numeric, analytic, 1e-8, &format!("Q'({x})"));
        }
    }

    #[test]
    fn ratio_lkm_ordering() {
        // a K <= L <= K <= M on [0,1], equality only at the right edge
        for &s in &[4.0, 6.0, 10.0, 15.0, 22.0, 30.0] {
            for a in linspace(0.0, 1.0, 401) {
                let (l, k, m) = ratio_lkm(a, s);
                let slack = 1.0 + 1e-12;
                assert!(a * k <= l * slack, "aK > L at a={a}, s={s}");
                assert!(l <= k * slack, "L > K at a={a}, s={s}");
                assert!(k <= m * slack, "K > M at a={a}, s={s}");
            }
        }
    }

    #[test]
    fn ratio_lkm_seven_tenths() {
        // a K <= 0.7 L for a <= 1/2, s >= 4
        for &s in &[4.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0] {
            for a in linspace(0.0, 0.5, 401) {
                let (l, k, _) = ratio_lkm(a, s);
                assert!(
                    a * k <= 0.7 * l * (1.0 + 1e-12),
                    "aK > 0.7L at a={a}, s={s}: {} vs {}",
                    a * k,
                    0.7 * l
                );
            }
        }
    }

    #[test]
    fn r_eval_matches_coefficient_expansion() {
        let probes: [[f64; 3]; 4] = [
            [0.7, 0.3, 1.2],
            [1.0, 1.0, 1.0],
            [2.0, 0.5, 0.25],
            [0.1, 0.9, 0.4],
        ];
        for k in 1..=8u32 {
            for &x in &probes {
                let mut sum = 0.0;
                for k0 in 0..=k {
                    for k1 in 0..=(k - k0) {
                        let k2 = k - k0 - k1;
                        let c = r_coeff(k, [k0, k1, k2]).to_f64().unwrap();
                        sum += c
                            * x[0].powi(k0 as i32)
                            * x[1].powi(k1 as i32)
                            * x[2].powi(k2 as i32);
                    }
                }
                assert_rel(r_eval(k, x), sum, 1e-12, &format!("r(k={k}, {x:?})"));
            }
        }
    }

    #[test]
    fn r_coeff_totals_and_pattern() {
        // sum of all coefficients = r(1,1,1) = 3^{k-1}, exactly
        for k in 1..=12u32 {
            let mut total = BigInt::from(0);
            for k0 in 0..=k {
                for k1 in 0..=(k - k0) {
                    total += r_coeff(k, [k0, k1, k - k0 - k1]);
                }
            }
            assert_eq!(total, BigInt::from(3).pow(k - 1), "k = {k}");
        }
        assert_eq!(r_coeff(3, [1, 1, 1]), BigInt::from(6));
        assert_eq!(r_coeff(3, [0, 3, 0]), BigInt::from(1));
        assert_eq!(r_coeff(5, [2, 2, 1]), BigInt::from(0));
        assert_eq!(r_coeff(5, [1, 2, 2]), BigInt::from(30));
    }

    #[test]
    fn r_center_derivatives() {
        for &k in &[2u32, 3, 9, 15] {
            let x = [1.0, 1.0, 1.0];
            let tk = 3f64.powi(k as i32 - 1);
            assert_rel(r_eval(k, x), tk, 1e-13, "r center");
            for g in r_grad(k, x) {
                assert_rel(g, k as f64 * tk / 3.0, 1e-13, "r grad center");
            }
            // all second partials coincide at the center only for k >= 3
            // (for k = 2 the complex form contributes z^0 = 1: r = x0^2 + 2 x1 x2)
            if k >= 3 {
                for row in r_hess(k, x) {
                    for h in row {
                        assert_rel(h, (k * (k - 1)) as f64 * tk / 9.0, 1e-12, "r hess center");
                    }
                }
            }
        }
    }

    #[test]
    fn r_ratio_center_and_jacobian() {
        for &k in &[3u32, 15] {
            let (r1, r2) = r_ratio_map(k, 1.0, 1.0);
            assert_rel(r1, k as f64 / 3.0, 1e-13, "R center");
            assert_rel(r2, k as f64 / 3.0, 1e-13, "R center");
            let j = r_ratio_jacobian(k, 1.0, 1.0);
            let kf = k as f64;
            assert_rel(j[0][0], 2.0 * kf / 9.0, 1e-12, "J00 center");
            assert_rel(j[1][1], 2.0 * kf / 9.0, 1e-12, "J11 center");
            assert_rel(j[0][1], -kf / 9.0, 1e-12, "J01 center");
            assert_rel(j[1][0], -kf / 9.0, 1e-12, "J10 center");
            // finite differences away from the center
            let (c1, c2) = (0.93, 1.08);
            let j = r_ratio_jacobian(k, c1, c2);
            let h = 1e-6;
            let num00 = (r_ratio_map(k, c1 + h, c2).0 - r_ratio_map(k, c1 - h, c2).0) / (2.0 * h);
            let num01 = (r_ratio_map(k, c1, c2 + h).0 - r_ratio_map(k, c1, c2 - h).0) / (2.0 * h);
            assert_rel(j[0][0], num00, 1e-6, "J00 fd");
            assert_rel(j[0][1], num01, 1e-6, "J01 fd");
        }
    }

    #[test]
    fn r_ratio_inverse_round_trip() {
        for &k in &[3u32, 15, 20] {
            let base = k as f64 / 3.0;
            for &(f1, f2) in &[
                (1.0, 1.0),
                (1.05, 0.95),
                (1.1, 1.1),
                (0.9, 0.85),
                (1.15, 0.9),
            ] {
                let (t1, t2) = (base * f1, base * f2);
                let (c1, c2) = r_ratio_inverse(k, t1, t2).unwrap();
                let (r1, r2) = r_ratio_map(k, c1, c2);
                let tol = 1e-10 * t1.max(t2).max(1.0) * 1.01;
                assert!(
                    (r1 - t1).abs() <= tol && (r2 - t2).abs() <= tol,
                    "round trip failed k={k} f=({f1},{f2})"
                );
            }
        }
    }

    #[test]
    fn p_identity_exact_small() {
        // binom(k,i) * p_i matches the binomial expansion of p, exactly
        for d in 2..=5u32 {
            for k in 1..=6u32 {
                let expanded = p_poly_coeffs(k, d);
                for i in 0..=k {
                    let lhs = BigRational::from_integer(comb::binomial(k as u64, i as u64))
                        * p_coeff_closed(d, i);
                    assert_eq!(lhs, expanded[i as usize], "d={d} k={k} i={i}");
                }
            }
        }
        assert_eq!(p_coeff_closed(4, 0), BigRational::one());
        assert_eq!(p_coeff_closed(4, 1), BigRational::zero());
        assert_eq!(
            p_coeff_closed(4, 2),
            BigRational::new(BigInt::one(), BigInt::from(3))
        );
    }

    #[test]
    fn p_eval_matches_rational_coefficients() {
        for &(k, d) in &[(3u32, 2u32), (3, 4), (8, 4), (8, 2)] {
            let coeffs = p_poly_coeffs(k, d);
            for &z in &[0.0, 0.5, 1.0, (d - 1) as f64, 5.0] {
                let series: f64 = coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.to_f64().unwrap() * z.powi(i as i32))
                    .sum();
                assert_rel(p_eval(k, d, z), series, 1e-13, &format!("p(k={k},d={d},z={z})"));
            }
            // p(d-1) = d^{k-1}
            assert_rel(
                p_eval(k, d, (d - 1) as f64),
                (d as f64).powi(k as i32 - 1),
                1e-13,
                "p at d-1",
            );
        }
    }

    #[test]
    fn p_derivatives_match_finite_differences() {
        let (k, d) = (8u32, 4u32);
        for &z in &[0.2, 1.0, 2.5, 3.5] {
            let h = 1e-6;
            let dp = (p_eval(k, d, z + h) - p_eval(k, d, z - h)) / (2.0 * h);
            assert_rel(p_prime(k, d, z), dp, 1e-8, &format!("p'({z})"));
            let d2p = (p_prime(k, d, z + h) - p_prime(k, d, z - h)) / (2.0 * h);
            assert_rel(p_dprime(k, d, z), d2p, 1e-8, &format!("p''({z})"));
        }
    }

    #[test]
    fn p_ratio_endpoint_and_monotone() {
        for &d in &[2u32, 3, 4, 5] {
            for &k in &[3u32, 8, 12] {
                assert_rel(
                    p_ratio_map(k, d, (d - 1) as f64),
                    k as f64 * (1.0 - 1.0 / d as f64),
                    1e-12,
                    &format!("P(d-1) for k={k}, d={d}"),
                );
            }
        }
        let grid = linspace(1e-3, 9.0, 500);
        let mut prev = p_ratio_map(8, 4, grid[0]);
        for &z in &grid[1..] {
            let v = p_ratio_map(8, 4, z);
            assert!(v > prev, "P not increasing at z = {z}");
            prev = v;
        }
    }

    #[test]
    fn p_ratio_inverse_round_trip() {
        for &k in &[3u32, 8, 12] {
            for &lam in &[0.05, 0.3, 0.75, 0.9, 0.99] {
                let t = lam * k as f64;
                let z = p_ratio_inverse(k, 4, t).unwrap();
                assert!(
                    (p_ratio_map(k, 4, z) - t).abs() <= 1e-10 * t.max(1.0) * 1.01,
                    "P inverse round trip k={k}, lambda={lam}"
                );
            }
        }
        assert!(p_ratio_inverse(3, 4, 0.0).is_err());
        assert!(p_ratio_inverse(3, 4, 3.0).is_err());
    }
}
