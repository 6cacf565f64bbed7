//! Exact combinatorial primitives on arbitrary-precision integers.

use num_bigint::BigInt;
use num_traits::{One, Zero};

/// Binomial coefficient C(n, k) as a big integer; zero when k > n.
pub fn binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// Multinomial coefficient n! / (parts[0]! * parts[1]! * ...).
///
/// Panics if the parts do not sum to n.
pub fn multinomial(n: u64, parts: &[u64]) -> BigInt {
    assert_eq!(parts.iter().sum::<u64>(), n, "multinomial parts must sum to n");
    let mut acc = BigInt::one();
    let mut rem = n;
    for &p in parts {
        acc *= binomial(rem, p);
        rem -= p;
    }
    acc
}

/// Falling factorial n * (n-1) * ... * (n-k+1); 1 when k = 0, 0 when k > n.
pub fn falling(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut acc = BigInt::one();
    for i in 0..k {
        acc *= BigInt::from(n - i);
    }
    acc
}

/// n! as a big integer.
pub fn factorial(n: u64) -> BigInt {
    falling(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_matches_pascal() {
        for n in 0..=20u64 {
            for k in 0..=n {
                let lhs = binomial(n + 1, k + 1);
                let rhs = binomial(n, k) + binomial(n, k + 1);
                assert_eq!(lhs, rhs, "Pascal fails at ({n}, {k})");
            }
        }
        assert_eq!(binomial(5, 7), BigInt::zero());
    }

    #[test]
    fn multinomial_row_sums_to_power() {
        // sum over compositions of 6 into 3 parts of multinomial = 3^6
        let mut total = BigInt::zero();
        for a in 0..=6u64 {
            for b in 0..=(6 - a) {
                let c = 6 - a - b;
                total += multinomial(6, &[a, b, c]);
            }
        }
        assert_eq!(total, BigInt::from(729));
    }

    #[test]
    fn falling_and_factorial_agree() {
        assert_eq!(factorial(10), BigInt::from(3628800u64));
        assert_eq!(falling(10, 3), BigInt::from(720));
        assert_eq!(falling(3, 5), BigInt::zero());
        assert_eq!(falling(7, 0), BigInt::one());
    }
}
