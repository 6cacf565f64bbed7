//! Uniquely extendible constraint tables and exact pair statistics.
//!
//! A k-ary constraint over a d-element domain is uniquely extendible
//! (UE) when any k-1 coordinates of a satisfying tuple determine the
//! remaining one. Viewing the support as a function from the first k-1
//! coordinates to the last, this is exactly the condition that the
//! function is bijective along every input axis, i.e. a (k-1)-dimensional
//! Latin hypercube of order d: for k = 2 the supports are permutations,
//! for k = 3 Latin squares.
//!
//! The pair statistics mirror the mod-3 module: for two assignments
//! sigma, tau, a constraint satisfied by both must see them differ on
//! either zero or at least two of its slots, and the exact probability
//! that a table completes a given flip pattern depends only on the
//! number i of flipped slots. Those probabilities p_i have the closed
//! form implemented in `genfn::p_coeff_closed`; [`empirical_p`] measures
//! them per table and the tests pin the two against each other. The
//! second-moment sum uses K~(l) = [z^l] p(z)^m, in which the table count
//! |Gamma| cancels.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::counts::exact_m;
use crate::{comb, genfn, Error, Result};

/// One UE constraint: output value for each input cell. Cell index
/// encodes the first k-1 coordinates in mixed radix, first coordinate
/// least significant; the full tuple index of (inputs, output) is
/// cell + output * d^{k-1}.
pub type UeTable = Vec<u8>;

/// All UE constraints of one shape.
#[derive(Debug, Clone)]
pub struct UeFamily {
    pub k: u32,
    pub d: u32,
    pub tables: Vec<UeTable>,
}

impl UeFamily {
    /// Support of one table as explicit tuples (inputs..., output).
    pub fn support(&self, table: usize) -> Vec<Vec<u8>> {
        let dims = (self.k - 1) as usize;
        self.tables[table]
            .iter()
            .enumerate()
            .map(|(cell, &out)| {
                let mut tuple = Vec::with_capacity(dims + 1);
                let mut c = cell;
                for _ in 0..dims {
                    tuple.push((c % self.d as usize) as u8);
                    c /= self.d as usize;
                }
                tuple.push(out);
                tuple
            })
            .collect()
    }
}

/// Enumerates every UE constraint of arity k over d values by
/// backtracking over cells, maintaining one used-values mask per input
/// line. Guarded to d^{k-1} <= 128 cells and 1e6 tables.
pub fn enumerate_ue_constraints(k: u32, d: u32) -> Result<UeFamily> {
    if k < 2 || d < 2 {
        return Err(Error::Domain(format!(
            "enumerate_ue_constraints needs k >= 2, d >= 2, got ({k}, {d})"
        )));
    }
    let dims = (k - 1) as usize;
    let cells = (d as u64).checked_pow(dims as u32).unwrap_or(u64::MAX);
    if cells > 128 || d > 32 {
        return Err(Error::SizeLimit(format!(
            "enumerate_ue_constraints: d^(k-1) = {cells} cells exceeds 128"
        )));
    }
    let cells = cells as usize;
    let du = d as usize;
    // line id of each cell along each axis: drop that axis' digit
    let lines = cells / du;
    let mut line_id = vec![vec![0u32; cells]; dims];
    for (a, ids) in line_id.iter_mut().enumerate() {
        for (cell, slot) in ids.iter_mut().enumerate() {
            let mut digits = vec![0usize; dims];
            let mut c = cell;
            for dg in digits.iter_mut() {
                *dg = c % du;
                c /= du;
            }
            let mut id = 0usize;
            for j in (0..dims).rev() {
                if j != a {
                    id = id * du + digits[j];
                }
            }
            *slot = id as u32;
        }
    }
    let mut used = vec![vec![0u32; lines.max(1)]; dims];
    let mut cur = vec![0u8; cells];
    let mut tables: Vec<UeTable> = Vec::new();
    // explicit-stack backtracking: value d means "not yet tried"
    let mut next_try = vec![0u8; cells + 1];
    let mut cell = 0usize;
    loop {
        if cell == cells {
            tables.push(cur.clone());
            if tables.len() > 1_000_000 {
                return Err(Error::SizeLimit(
                    "enumerate_ue_constraints: more than 1e6 tables".into(),
                ));
            }
            // backtrack to previous cell
            if cells == 0 {
                break;
            }
            cell -= 1;
            let v = cur[cell] as u32;
            for a in 0..dims {
                used[a][line_id[a][cell] as usize] &= !(1 << v);
            }
            continue;
        }
        let mut placed = false;
        let start = next_try[cell];
        for v in start..d as u8 {
            let free = (0..dims).all(|a| used[a][line_id[a][cell] as usize] & (1 << v) == 0);
            if free {
                cur[cell] = v;
                for a in 0..dims {
                    used[a][line_id[a][cell] as usize] |= 1 << v;
                }
                next_try[cell] = v + 1;
                cell += 1;
                next_try[cell] = 0;
                placed = true;
                break;
            }
        }
        if !placed {
            if cell == 0 {
                break;
            }
            next_try[cell] = 0;
            cell -= 1;
            let v = cur[cell] as u32;
            for a in 0..dims {
                used[a][line_id[a][cell] as usize] &= !(1 << v);
            }
        }
    }
    Ok(UeFamily { k, d, tables })
}

/// Fraction of ordered support pairs differing exactly on the coordinate
/// set `mask` (bit j = coordinate j; bit k-1 = output), normalized by
/// |S| (d-1)^i with i = |mask|. Equals p_i for every table and mask.
pub fn empirical_p(family: &UeFamily, table: usize, mask: u32) -> BigRational {
    let support = family.support(table);
    let i = mask.count_ones();
    let mut count = 0u64;
    for x in &support {
        for y in &support {
            let mut diff = 0u32;
            for (j, (a, b)) in x.iter().zip(y.iter()).enumerate() {
                if a != b {
                    diff |= 1 << j;
                }
            }
            if diff == mask {
                count += 1;
            }
        }
    }
    BigRational::new(
        BigInt::from(count),
        BigInt::from(support.len() as u64) * BigInt::from(family.d as u64 - 1).pow(i),
    )
}

/// Coefficients of p(z)^m as exact rationals.
fn p_poly_power(k: u32, d: u32, m: u32) -> Vec<BigRational> {
    let base = genfn::p_poly_coeffs(k, d);
    let mut acc = vec![BigRational::one()];
    for _ in 0..m {
        let mut next = vec![BigRational::zero(); acc.len() + base.len() - 1];
        for (i, a) in acc.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in base.iter().enumerate() {
                if !b.is_zero() {
                    next[i + j] += a * b;
                }
            }
        }
        acc = next;
    }
    acc
}

/// K~(l) = [z^l] p(z)^m: the per-table-normalized count of ways m
/// ordered constraints distribute l flipped slots, each constraint
/// completing its flip pattern.
pub fn exact_ktilde_ue(k: u32, d: u32, m: u32, l: u64) -> Result<BigRational> {
    let km = k as u64 * m as u64;
    if km > 200 {
        return Err(Error::SizeLimit(format!("exact_ktilde_ue: k*m = {km} > 200")));
    }
    if l > km {
        return Ok(BigRational::zero());
    }
    Ok(p_poly_power(k, d, m)[l as usize].clone())
}

/// E[X^2] for the UE solution count: d^n sum_{w,l} binom(n,w) (d-1)^w
/// M(l, w) M(km-l, n-w) K~(l) / (d^m N0). The table count cancels.
pub fn exact_ex2_ue(k: u32, d: u32, n: u64, m: u32) -> Result<BigRational> {
    let km = k as u64 * m as u64;
    if km > 64 || n > 16 {
        return Err(Error::SizeLimit(format!(
            "exact_ex2_ue: km = {km} > 64 or n = {n} > 16"
        )));
    }
    let n0 = exact_m(km, n);
    if n0.is_zero() {
        return Err(Error::Domain(format!(
            "exact_ex2_ue: M({km}, {n}) = 0, model needs km >= 2n"
        )));
    }
    let ptab = p_poly_power(k, d, m);
    let mut sum = BigRational::zero();
    for w in 0..=n {
        for l in 0..=km {
            let kt = &ptab[l as usize];
            if kt.is_zero() {
                continue;
            }
            let m1 = exact_m(l, w);
            if m1.is_zero() {
                continue;
            }
            let m2 = exact_m(km - l, n - w);
            if m2.is_zero() {
                continue;
            }
            let weight = comb::binomial(n, w) * BigInt::from(d as u64 - 1).pow(w as u32);
            sum += BigRational::from_integer(weight * m1 * m2) * kt;
        }
    }
    let dn = BigInt::from(d as u64).pow(n as u32);
    let dm = BigInt::from(d as u64).pow(m);
    Ok(sum * BigRational::new(dn, dm * n0))
}

/// Result of brute-force enumeration over all UE systems.
#[derive(Debug)]
pub struct UeEnumeration {
    pub pattern_count: u64,
    /// Systems: patterns times |Gamma|^m table choices.
    pub formula_count: u64,
    pub sum_x: u64,
    pub sum_x2: u64,
    /// E[X]; should equal d^{n-m}.
    pub ex: BigRational,
    pub ex2: BigRational,
}

/// Enumerates every UE system (slot pattern with min occupancy 2, times
/// per-constraint tables) and counts satisfying assignments exactly.
pub fn enumerate_ex2_ue(k: u32, d: u32, n: u32, m: u32) -> Result<UeEnumeration> {
    let family = enumerate_ue_constraints(k, d)?;
    let km = (k * m) as usize;
    let candidates = (n as u64)
        .checked_pow(km as u32)
        .ok_or_else(|| Error::SizeLimit("enumerate_ex2_ue: n^{km} overflows".into()))?;
    let tuple_space = (d as u64).checked_pow(k).unwrap_or(u64::MAX);
    let combos = (family.tables.len() as u64).checked_pow(m).unwrap_or(u64::MAX);
    let dn = (d as u64).checked_pow(n).unwrap_or(u64::MAX);
    if candidates > 30_000_000 || tuple_space > 64 || combos > 1_000_000 || dn > 16_384 {
        return Err(Error::SizeLimit(format!(
            "enumerate_ex2_ue: size guards tripped (k={k}, d={d}, n={n}, m={m})"
        )));
    }
    let n0 = exact_m(km as u64, n as u64)
        .to_u64()
        .expect("pattern count fits u64 under the guards");
    if n0 == 0 {
        return Err(Error::Domain(format!(
            "enumerate_ex2_ue: M({km}, {n}) = 0, model needs km >= 2n"
        )));
    }
    if n0.saturating_mul(combos) > 10_000_000 {
        return Err(Error::SizeLimit(format!(
            "enumerate_ex2_ue: {} systems exceeds 1e7",
            n0 * combos
        )));
    }

    // support masks over tuple indices
    let dkm1 = (d as u64).pow(k - 1);
    let masks: Vec<u64> = (0..family.tables.len())
        .map(|t| {
            let mut mask = 0u64;
            for (cell, &out) in family.tables[t].iter().enumerate() {
                mask |= 1 << (cell as u64 + out as u64 * dkm1);
            }
            mask
        })
        .collect();

    let sigmas: Vec<Vec<u8>> = (0..dn)
        .map(|s| {
            let mut dgs = vec![0u8; n as usize];
            let mut t = s;
            for dg in dgs.iter_mut() {
                *dg = (t % d as u64) as u8;
                t /= d as u64;
            }
            dgs
        })
        .collect();

    let mut out = UeEnumeration {
        pattern_count: 0,
        formula_count: 0,
        sum_x: 0,
        sum_x2: 0,
        ex: BigRational::zero(),
        ex2: BigRational::zero(),
    };

    let mut pattern = vec![0u8; km];
    let mut counts = vec![0u32; n as usize];
    // per-assignment, per-clause tuple index under the current pattern
    let mut tuple_idx = vec![vec![0u8; m as usize]; sigmas.len()];
    let mut combo = vec![0usize; m as usize];

    'outer: loop {
        counts.iter_mut().for_each(|c| *c = 0);
        for &p in &pattern {
            counts[p as usize] += 1;
        }
        if counts.iter().all(|&c| c >= 2) {
            out.pattern_count += 1;
            for (si, sd) in sigmas.iter().enumerate() {
                for h in 0..m as usize {
                    let mut idx = 0u64;
                    for j in (0..k as usize).rev() {
                        idx = idx * d as u64 + sd[pattern[h * k as usize + j] as usize] as u64;
                    }
                    tuple_idx[si][h] = idx as u8;
                }
            }
            combo.iter_mut().for_each(|c| *c = 0);
            loop {
                let mut x = 0u64;
                for ti in &tuple_idx {
                    let sat = (0..m as usize)
                        .all(|h| masks[combo[h]] & (1u64 << ti[h]) != 0);
                    if sat {
                        x += 1;
                    }
                }
                out.sum_x += x;
                out.sum_x2 += x * x;
                // odometer over table choices
                let mut pos = 0;
                loop {
                    if pos == m as usize {
                        break;
                    }
                    combo[pos] += 1;
                    if combo[pos] < family.tables.len() {
                        break;
                    }
                    combo[pos] = 0;
                    pos += 1;
                }
                if pos == m as usize {
                    break;
                }
            }
        }
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
    out.formula_count = n0 * combos;
    out.ex = BigRational::new(BigInt::from(out.sum_x), BigInt::from(out.formula_count));
    out.ex2 = BigRational::new(BigInt::from(out.sum_x2), BigInt::from(out.formula_count));
    Ok(out)
}
