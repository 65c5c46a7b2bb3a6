//! Binomial sums that produce the harmonic numbers, in exact arithmetic.

use std::fmt::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// `1 + ½ + … + 1/m` in floating point.
pub fn harmonic_number(m: usize) -> f64 {
    (1..=m).map(|k| 1.0 / k as f64).sum()
}

pub fn harmonic_exact(m: usize) -> BigRational {
    (1..=m).fold(BigRational::zero(), |acc, k| acc + BigRational::new(BigInt::one(), BigInt::from(k)))
}

fn binomial(n: usize, k: usize) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i) / BigInt::from(i + 1))
}

fn sign(e: usize) -> BigInt {
    if e.is_multiple_of(2) { BigInt::one() } else { -BigInt::one() }
}

/// `−Σ_{k=0}^{n−2} C(n−1,k) (−1)^{n−1−k} / (n−k−1)`.
pub fn sum_a(n: usize) -> BigRational {
    -(0..=n - 2).fold(BigRational::zero(), |acc, k| {
        acc + BigRational::new(binomial(n - 1, k) * sign(n - 1 - k), BigInt::from(n - k - 1))
    })
}

/// `Σ_{k=0}^{n−2} C(n−2,k) (−1)^{n−k−2} / (n−k−1)`.
pub fn sum_b(n: usize) -> BigRational {
    (0..=n - 2).fold(BigRational::zero(), |acc, k| {
        acc + BigRational::new(binomial(n - 2, k) * sign(n - 2 - k), BigInt::from(n - k - 1))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityRow {
    pub n: usize,
    pub sum_a: BigRational,
    /// `H_{n−1}`.
    pub harmonic: BigRational,
    pub sum_b: BigRational,
    /// `1/(n−1)`.
    pub reciprocal: BigRational,
}

impl IdentityRow {
    pub fn a_holds(&self) -> bool {
        self.sum_a == self.harmonic
    }

    pub fn b_holds(&self) -> bool {
        self.sum_b == self.reciprocal
    }
}

pub fn harmonic_identities(n_max: usize) -> Result<Vec<IdentityRow>> {
    if n_max < 2 {
        return Err(Error::InvalidInput(format!("n_max must be at least 2, got {n_max}")));
    }
    Ok((2..=n_max)
        .map(|n| IdentityRow {
            n,
            sum_a: sum_a(n),
            harmonic: harmonic_exact(n - 1),
            sum_b: sum_b(n),
            reciprocal: BigRational::new(BigInt::one(), BigInt::from(n - 1)),
        })
        .collect())
}

/// One line per `n` with both sums as exact fractions.
pub fn identity_report(rows: &[IdentityRow]) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = writeln!(
            out,
            "n={:<3} A: {} = H_{} = {} [{}]  B: {} = 1/{} [{}]",
            r.n,
            r.sum_a,
            r.n - 1,
            r.harmonic,
            if r.a_holds() { "exact" } else { "MISMATCH" },
            r.sum_b,
            r.n - 1,
            if r.b_holds() { "exact" } else { "MISMATCH" },
        );
    }
    let all = rows.iter().all(|r| r.a_holds() && r.b_holds());
    let _ = writeln!(out, "{}", if all { "all identities exact" } else { "identity failure" });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frac(a: i64, b: i64) -> BigRational {
        BigRational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn small_cases() {
        assert_eq!(sum_a(2), frac(1, 1));
        assert_eq!(sum_a(3), frac(3, 2));
        assert_eq!(sum_b(3), frac(1, 2));
        assert_eq!(harmonic_exact(11), frac(83711, 27720));
    }

    #[test]
    fn exact_through_twelve() {
        let rows = harmonic_identities(12).unwrap();
        assert_eq!(rows.len(), 11);
        assert!(rows.iter().all(|r| r.a_holds() && r.b_holds()));
        assert!(identity_report(&rows).ends_with("all identities exact\n"));
    }

    #[test]
    fn rejects_small_range() {
        assert!(harmonic_identities(1).is_err());
    }

    #[test]
    fn float_harmonic() {
        assert_eq!(harmonic_number(1), 1.0);
        assert!((harmonic_number(2) - 1.5).abs() < 1e-15);
    }
}
