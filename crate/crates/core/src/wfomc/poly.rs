//! Sparse multivariate polynomials with big-integer coefficients.
//!
//! The counting engine tracks, for each predicate under a cardinality
//! constraint, the number of true ground literals as the exponent of one
//! indeterminate. A count with no tracked predicates is a polynomial in
//! zero variables, i.e. a plain integer.

use num::bigint::BigInt;
use num::{One, Signed, Zero};
use smallvec::SmallVec;
use std::collections::BTreeMap;

/// Exponent vector; one entry per tracked predicate.
pub type Exps = SmallVec<[u16; 4]>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Exps, BigInt>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Poly {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn one(nvars: usize) -> Poly {
        Poly::constant(nvars, BigInt::one())
    }

    pub fn constant(nvars: usize, c: BigInt) -> Poly {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Exps::from_elem(0, nvars), c);
        }
        Poly { nvars, terms }
    }

    pub fn monomial(nvars: usize, exps: Exps, c: BigInt) -> Poly {
        debug_assert_eq!(exps.len(), nvars);
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(exps, c);
        }
        Poly { nvars, terms }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exps, &BigInt)> {
        self.terms.iter()
    }

    pub fn add_assign(&mut self, other: &Poly) {
        debug_assert_eq!(self.nvars, other.nvars);
        for (e, c) in &other.terms {
            let entry = self.terms.entry(e.clone()).or_insert_with(BigInt::zero);
            *entry += c;
            if entry.is_zero() {
                self.terms.remove(e);
            }
        }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut out: BTreeMap<Exps, BigInt> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let mut e = ea.clone();
                for (i, x) in eb.iter().enumerate() {
                    e[i] += x;
                }
                let entry = out.entry(e).or_insert_with(BigInt::zero);
                *entry += ca * cb;
            }
        }
        out.retain(|_, c| !c.is_zero());
        Poly { nvars: self.nvars, terms: out }
    }

    pub fn neg(mut self) -> Poly {
        for c in self.terms.values_mut() {
            *c = -std::mem::take(c);
        }
        self
    }

    pub fn scale(&self, c: &BigInt) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(e, v)| (e.clone(), v * c)).collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut result = Poly::one(self.nvars);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Sum of all coefficients (evaluation at all-ones).
    pub fn total(&self) -> BigInt {
        let mut s = BigInt::zero();
        for c in self.terms.values() {
            s += c;
        }
        s
    }

    /// Sum of coefficients whose exponent vector satisfies the filter.
    pub fn filter_sum(&self, accept: impl Fn(&[u16]) -> bool) -> BigInt {
        let mut s = BigInt::zero();
        for (e, c) in &self.terms {
            if accept(e) {
                s += c;
            }
        }
        s
    }

    /// True if any coefficient is negative; the assembled counts the engine
    /// returns must be non-negative coefficient-wise.
    pub fn has_negative_coeff(&self) -> bool {
        self.terms.values().any(|c| c.is_negative())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(nvars: usize, i: usize) -> Poly {
        let mut e = Exps::from_elem(0, nvars);
        e[i] = 1;
        Poly::monomial(nvars, e, BigInt::one())
    }

    #[test]
    fn arithmetic_in_two_vars() {
        // (x0 + x1)^2 = x0^2 + 2 x0 x1 + x1^2
        let mut s = x(2, 0);
        s.add_assign(&x(2, 1));
        let sq = s.pow(2);
        assert_eq!(sq.terms().count(), 3);
        assert_eq!(sq.total(), BigInt::from(4));
        let mixed: BigInt = sq.filter_sum(|e| e[0] == 1 && e[1] == 1);
        assert_eq!(mixed, BigInt::from(2));
    }

    #[test]
    fn zero_variable_polys_are_integers() {
        let a = Poly::constant(0, BigInt::from(6));
        let b = Poly::constant(0, BigInt::from(7));
        assert_eq!(a.mul(&b).total(), BigInt::from(42));
        let mut c = a.clone();
        c.add_assign(&b.neg());
        assert_eq!(c.total(), BigInt::from(-1));
    }

    #[test]
    fn cancellation_removes_terms() {
        let a = x(1, 0);
        let mut b = a.clone();
        b.add_assign(&a.clone().neg());
        assert!(b.is_zero());
        assert!(!a.has_negative_coeff());
        assert!(a.clone().neg().has_negative_coeff());
    }
}
