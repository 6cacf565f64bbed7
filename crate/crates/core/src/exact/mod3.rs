//! Exact solution-pair counts for random linear equations mod 3.
//!
//! A system is an ordered list of m constraints on n variables; each
//! constraint is an ordered k-tuple of variable slots plus a right-hand
//! side in Z3, and it is satisfied when the sum of the assignment over
//! its slots equals the right-hand side. Slot patterns are conditioned
//! on every variable appearing at least twice, so there are
//! N0 * 3^m = M(km, n) * 3^m systems.
//!
//! Pair statistics: for assignments (sigma, tau) let delta = tau - sigma;
//! class i collects the variables with delta = i, w_i counts them and
//! l_i counts the slots landing in class i. Both assignments satisfy the
//! same system iff sigma does and every constraint kills delta, i.e. has
//! per-clause class counts (j0, j1, j2) with j1 = j2 (mod 3). Summing
//! multinomial slot choices over such profiles is exactly taking
//! coefficients of r(x)^m, which gives the closed pair count
//!
//!   N(w, l) = multinom(n; w) * K(l) * prod_i M(l_i, w_i),
//!
//! with K(l) = [x^l] r(x)^m. The enumeration here verifies, bucket by
//! bucket, that 3^n * N(w, l) equals the number of (system, sigma, tau)
//! triples with those types, and that E[X^2] = 3^n * sum N / (3^m N0).

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::counts::exact_m;
use crate::{comb, Error, Result};

/// Full table of K(l) = [x0^{l0} x1^{l1} x2^{l2}] r(x)^m, indexed
/// [l1][l2] (l0 = km - l1 - l2 is implied by homogeneity).
fn k_table_mod3(k: u32, m: u32) -> Vec<Vec<BigInt>> {
    let km = (k * m) as usize;
    let mut clause: Vec<(usize, usize, BigInt)> = Vec::new();
    for j1 in 0..=k {
        for j2 in 0..=(k - j1) {
            if j1 % 3 == j2 % 3 {
                let coeff = comb::multinomial(
                    k as u64,
                    &[(k - j1 - j2) as u64, j1 as u64, j2 as u64],
                );
                clause.push((j1 as usize, j2 as usize, coeff));
            }
        }
    }
    let mut state = vec![vec![BigInt::zero(); km + 1]; km + 1];
    state[0][0] = BigInt::one();
    for step in 0..m {
        let cap = (step * k) as usize;
        let mut next = vec![vec![BigInt::zero(); km + 1]; km + 1];
        for l1 in 0..=cap {
            for l2 in 0..=(cap - l1) {
                if state[l1][l2].is_zero() {
                    continue;
                }
                for (j1, j2, c) in &clause {
                    next[l1 + j1][l2 + j2] += &state[l1][l2] * c;
                }
            }
        }
        state = next;
    }
    state
}

/// K(l): slot-class distributions of m ordered k-constraints with class
/// totals l = (l0, l1, l2) in which every constraint kills the
/// difference vector. Zero unless l sums to km.
pub fn exact_k_mod3(k: u32, m: u32, l: [u64; 3]) -> Result<BigInt> {
    let km = k as u64 * m as u64;
    if km > 200 {
        return Err(Error::SizeLimit(format!("exact_k_mod3: k*m = {km} > 200")));
    }
    if l[0] + l[1] + l[2] != km {
        return Ok(BigInt::zero());
    }
    Ok(k_table_mod3(k, m)[l[1] as usize][l[2] as usize].clone())
}

/// Pair count for one difference-class assignment:
/// K(l) * M(l0, w0) M(l1, w1) M(l2, w2).
pub fn exact_nhat_mod3(k: u32, m: u32, w: [u64; 3], l: [u64; 3]) -> Result<BigInt> {
    let kk = exact_k_mod3(k, m, l)?;
    Ok(kk * exact_m(l[0], w[0]) * exact_m(l[1], w[1]) * exact_m(l[2], w[2]))
}

/// Pair count N(w, l) = multinom(n; w) * Nhat(w, l); requires w to sum
/// to n.
pub fn exact_n_mod3(k: u32, n: u64, m: u32, w: [u64; 3], l: [u64; 3]) -> Result<BigInt> {
    if w[0] + w[1] + w[2] != n {
        return Err(Error::Domain(format!(
            "exact_n_mod3: w = {w:?} does not sum to n = {n}"
        )));
    }
    Ok(comb::multinomial(n, &w) * exact_nhat_mod3(k, m, w, l)?)
}

/// E[X^2] for the solution count X over systems with k-ary constraints,
/// n variables, m constraints: 3^n * sum_{w,l} N(w, l) / (3^m N0).
pub fn exact_ex2_mod3(k: u32, n: u64, m: u32) -> Result<BigRational> {
    let km = k as u64 * m as u64;
    if km > 64 || n > 16 {
        return Err(Error::SizeLimit(format!(
            "exact_ex2_mod3: km = {km} > 64 or n = {n} > 16"
        )));
    }
    let n0 = exact_m(km, n);
    if n0.is_zero() {
        return Err(Error::Domain(format!(
            "exact_ex2_mod3: M({km}, {n}) = 0, model needs km >= 2n"
        )));
    }
    let ktab = k_table_mod3(k, m);
    let mut sum = BigInt::zero();
    for w1 in 0..=n {
        for w2 in 0..=(n - w1) {
            let w0 = n - w1 - w2;
            let mn = comb::multinomial(n, &[w0, w1, w2]);
            for l1 in 0..=km {
                for l2 in 0..=(km - l1) {
                    let l0 = km - l1 - l2;
                    let kk = &ktab[l1 as usize][l2 as usize];
                    if kk.is_zero() {
                        continue;
                    }
                    let m0 = exact_m(l0, w0);
                    if m0.is_zero() {
                        continue;
                    }
                    let m1 = exact_m(l1, w1);
                    if m1.is_zero() {
                        continue;
                    }
                    let m2 = exact_m(l2, w2);
                    if m2.is_zero() {
                        continue;
                    }
                    sum += &mn * kk * m0 * m1 * m2;
                }
            }
        }
    }
    Ok(BigRational::new(
        BigInt::from(3).pow(n as u32) * sum,
        BigInt::from(3).pow(m) * n0,
    ))
}

/// Result of the brute-force enumeration over all systems and
/// assignment pairs.
#[derive(Debug)]
pub struct Mod3Enumeration {
    /// Slot patterns with minimum occupancy two (equals M(km, n)).
    pub pattern_count: u64,
    /// Systems: patterns times 3^m right-hand sides.
    pub formula_count: u64,
    /// Total solution count over all systems.
    pub sum_x: u64,
    /// Total squared solution count over all systems.
    pub sum_x2: u64,
    /// E[X] = sum_x / formula_count (should equal 3^{n-m}).
    pub ex: BigRational,
    /// E[X^2] = sum_x2 / formula_count.
    pub ex2: BigRational,
    /// (w, l) -> number of (system, sigma, tau) triples of that type.
    pub pair_buckets: BTreeMap<([u32; 3], [u32; 3]), u64>,
}

/// Enumerates every system (slot pattern with min occupancy 2, times
/// right-hand side) and every assignment pair, bucketing pairs by their
/// difference types. Guarded to N0 * 3^m <= 1e7 systems and n^{km}
/// <= 3e7 candidate patterns.
pub fn enumerate_ex2_mod3(k: u32, n: u32, m: u32) -> Result<Mod3Enumeration> {
    let km = (k * m) as usize;
    let candidates = (n as u64)
        .checked_pow(km as u32)
        .ok_or_else(|| Error::SizeLimit("enumerate_ex2_mod3: n^{km} overflows".into()))?;
    if candidates > 30_000_000 || n > 9 || m > 6 {
        return Err(Error::SizeLimit(format!(
            "enumerate_ex2_mod3: {candidates} candidate patterns (n = {n}, m = {m})"
        )));
    }
    let pow3m = 3u64.pow(m);
    let n0 = exact_m(km as u64, n as u64)
        .to_u64()
        .expect("pattern count fits u64 under the guards");
    if n0 == 0 {
        return Err(Error::Domain(format!(
            "enumerate_ex2_mod3: M({km}, {n}) = 0, model needs km >= 2n"
        )));
    }
    if n0 * pow3m > 10_000_000 {
        return Err(Error::SizeLimit(format!(
            "enumerate_ex2_mod3: {} systems exceeds 1e7",
            n0 * pow3m
        )));
    }
    let pow3n = 3u64.pow(n);

    // base-3 digits of every assignment
    let sigmas: Vec<Vec<u8>> = (0..pow3n)
        .map(|s| {
            let mut d = vec![0u8; n as usize];
            let mut t = s;
            for dv in d.iter_mut() {
                *dv = (t % 3) as u8;
                t /= 3;
            }
            d
        })
        .collect();

    let mut pattern = vec![0u8; km];
    let mut counts = vec![0u32; n as usize];
    let mut groups: Vec<Vec<u32>> = vec![Vec::new(); pow3m as usize];
    let mut delta = vec![0u8; n as usize];

    let mut out = Mod3Enumeration {
        pattern_count: 0,
        formula_count: 0,
        sum_x: 0,
        sum_x2: 0,
        ex: BigRational::zero(),
        ex2: BigRational::zero(),
        pair_buckets: BTreeMap::new(),
    };

    'outer: loop {
        // minimum occupancy 2 across all n variables
        counts.iter_mut().for_each(|c| *c = 0);
        for &p in &pattern {
            counts[p as usize] += 1;
        }
        if counts.iter().all(|&c| c >= 2) {
            out.pattern_count += 1;
            for g in groups.iter_mut() {
                g.clear();
            }
            for (si, sd) in sigmas.iter().enumerate() {
                let mut u = 0u64;
                for h in 0..m as usize {
                    let mut sum = 0u32;
                    for t in 0..k as usize {
                        sum += sd[pattern[h * k as usize + t] as usize] as u32;
                    }
                    u = u * 3 + (sum % 3) as u64;
                }
                groups[u as usize].push(si as u32);
            }
            for g in &groups {
                let x = g.len() as u64;
                out.sum_x += x;
                out.sum_x2 += x * x;
                for &a in g {
                    let da = &sigmas[a as usize];
                    for &b in g {
                        let db = &sigmas[b as usize];
                        let mut w = [0u32; 3];
                        for v in 0..n as usize {
                            let dv = (3 + db[v] - da[v]) % 3;
                            delta[v] = dv;
                            w[dv as usize] += 1;
                        }
                        let mut l = [0u32; 3];
                        for &p in &pattern {
                            l[delta[p as usize] as usize] += 1;
                        }
                        *out.pair_buckets.entry((w, l)).or_insert(0) += 1;
                    }
                }
            }
        }
        // odometer over patterns
        let mut pos = 0;
        loop {
            if pos == km {
                break 'outer;
            }
            pattern[pos] += 1;
            if pattern[pos] < n as u8 {
                break;
            }
            pattern[pos] = 0;
            pos += 1;
        }
    }

    assert_eq!(out.pattern_count, n0, "pattern enumeration disagrees with M(km, n)");
    out.formula_count = n0 * pow3m;
    out.ex = BigRational::new(BigInt::from(out.sum_x), BigInt::from(out.formula_count));
    out.ex2 = BigRational::new(BigInt::from(out.sum_x2), BigInt::from(out.formula_count));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_anchors_and_total() {
        assert_eq!(exact_k_mod3(3, 2, [2, 2, 2]).unwrap(), BigInt::from(36));
        assert_eq!(exact_k_mod3(3, 2, [6, 0, 0]).unwrap(), BigInt::one());
        assert_eq!(exact_k_mod3(3, 2, [5, 1, 0]).unwrap(), BigInt::zero());
        // sum over l of K(l) = r(1,1,1)^m = 3^{(k-1)m}
        for &(k, m) in &[(3u32, 2u32), (3, 3), (4, 2), (5, 2)] {
            let km = (k * m) as u64;
            let mut total = BigInt::zero();
            for l1 in 0..=km {
                for l2 in 0..=(km - l1) {
                    total += exact_k_mod3(k, m, [km - l1 - l2, l1, l2]).unwrap();
                }
            }
            assert_eq!(total, BigInt::from(3).pow((k - 1) * m), "k={k}, m={m}");
        }
    }

    #[test]
    fn pair_count_anchor() {
        assert_eq!(
            exact_nhat_mod3(3, 2, [1, 1, 1], [2, 2, 2]).unwrap(),
            BigInt::from(36)
        );
        assert_eq!(
            exact_n_mod3(3, 3, 2, [1, 1, 1], [2, 2, 2]).unwrap(),
            BigInt::from(216)
        );
        // the diagonal bucket (sigma = tau) recovers N0 itself
        assert_eq!(
            exact_n_mod3(3, 3, 2, [3, 0, 0], [6, 0, 0]).unwrap(),
            BigInt::from(90)
        );
    }

    fn check_enumeration_against_counts(k: u32, n: u32, m: u32) {
        let e = enumerate_ex2_mod3(k, n, m).unwrap();
        let km = (k * m) as u64;
        // E[X] = 3^{n-m} exactly
        let want_ex = BigRational::new(BigInt::from(3).pow(n), BigInt::from(3).pow(m));
        assert_eq!(e.ex, want_ex, "E[X] mismatch");
        // E[X^2] from the closed-form sum
        assert_eq!(e.ex2, exact_ex2_mod3(k, n as u64, m).unwrap(), "E[X^2] mismatch");
        // every bucket, including empty ones: count = 3^n * N(w, l)
        let p3n = BigInt::from(3).pow(n);
        for w1 in 0..=n as u64 {
            for w2 in 0..=(n as u64 - w1) {
                let w = [n as u64 - w1 - w2, w1, w2];
                for l1 in 0..=km {
                    for l2 in 0..=(km - l1) {
                        let l = [km - l1 - l2, l1, l2];
                        let want = &p3n * exact_n_mod3(k, n as u64, m, w, l).unwrap();
                        let key = (
                            [w[0] as u32, w[1] as u32, w[2] as u32],
                            [l[0] as u32, l[1] as u32, l[2] as u32],
                        );
                        let got = e.pair_buckets.get(&key).copied().unwrap_or(0);
                        assert_eq!(
                            BigInt::from(got),
                            want,
                            "bucket (w = {w:?}, l = {l:?})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn enumeration_3_3_2_matches_closed_counts() {
        let e = enumerate_ex2_mod3(3, 3, 2).unwrap();
        assert_eq!(e.pattern_count, 90);
        assert_eq!(e.formula_count, 810);
        assert_eq!(e.sum_x, 2430); // 3^{n-m} * formulas
        check_enumeration_against_counts(3, 3, 2);
    }

    #[test]
    fn enumeration_4_4_2_matches_closed_counts() {
        check_enumeration_against_counts(4, 4, 2);
    }

    #[test]
    fn enumeration_3_4_3_matches_closed_counts() {
        check_enumeration_against_counts(3, 4, 3);
    }

    #[test]
    fn enumeration_guards() {
        assert!(enumerate_ex2_mod3(3, 12, 2).is_err());
        assert!(enumerate_ex2_mod3(3, 3, 1).is_err()); // km < 2n
    }
}
