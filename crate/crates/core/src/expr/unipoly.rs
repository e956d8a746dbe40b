use num_rational::BigRational;
use num_traits::{One, Zero};

/// Dense univariate polynomial over ℚ in one independent variable, used for
/// denominators of expressions. Coefficients are stored low-to-high with a
/// nonzero leading coefficient; the zero polynomial has no coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UniPoly {
    pub var: usize,
    coeffs: Vec<BigRational>,
}

impl UniPoly {
    pub fn new(var: usize, mut coeffs: Vec<BigRational>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        UniPoly { var, coeffs }
    }

    pub fn zero(var: usize) -> Self {
        UniPoly {
            var,
            coeffs: Vec::new(),
        }
    }

    pub fn constant(var: usize, c: BigRational) -> Self {
        UniPoly::new(var, vec![c])
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn coeffs(&self) -> &[BigRational] {
        &self.coeffs
    }

    pub fn leading(&self) -> Option<&BigRational> {
        self.coeffs.last()
    }

    pub fn is_one(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_one()
    }

    /// Divides by the leading coefficient; returns that coefficient.
    pub fn make_monic(&mut self) -> BigRational {
        let Some(lead) = self.coeffs.last().cloned() else {
            return BigRational::one();
        };
        if !lead.is_one() {
            for c in &mut self.coeffs {
                *c /= lead.clone();
            }
        }
        lead
    }

    pub fn mul(&self, other: &UniPoly) -> UniPoly {
        debug_assert_eq!(self.var, other.var);
        if self.is_zero() || other.is_zero() {
            return UniPoly::zero(self.var);
        }
        let mut coeffs = vec![BigRational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        UniPoly::new(self.var, coeffs)
    }

    /// Euclidean division; the divisor must be nonzero.
    pub fn divrem(&self, divisor: &UniPoly) -> (UniPoly, UniPoly) {
        debug_assert_eq!(self.var, divisor.var);
        assert!(!divisor.is_zero(), "division by the zero polynomial");
        let mut rem = self.coeffs.clone();
        let dn = divisor.coeffs.len();
        if rem.len() < dn {
            return (UniPoly::zero(self.var), self.clone());
        }
        let mut quot = vec![BigRational::zero(); rem.len() - dn + 1];
        let lead = divisor.coeffs.last().unwrap();
        for k in (0..quot.len()).rev() {
            let top = rem[k + dn - 1].clone();
            if top.is_zero() {
                continue;
            }
            let q = top / lead;
            for (i, d) in divisor.coeffs.iter().enumerate() {
                let sub = d * &q;
                rem[k + i] -= sub;
            }
            quot[k] = q;
        }
        (UniPoly::new(self.var, quot), UniPoly::new(self.var, rem))
    }

    /// Exact division; panics if the remainder is nonzero.
    pub fn div_exact(&self, divisor: &UniPoly) -> UniPoly {
        let (q, r) = self.divrem(divisor);
        assert!(r.is_zero(), "inexact univariate division");
        q
    }

    /// Monic gcd via the Euclidean algorithm.
    pub fn gcd(&self, other: &UniPoly) -> UniPoly {
        debug_assert_eq!(self.var, other.var);
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let (_, r) = a.divrem(&b);
            a = b;
            b = r;
            b.make_monic();
        }
        a.make_monic();
        a
    }

    pub fn derivative(&self) -> UniPoly {
        if self.coeffs.len() <= 1 {
            return UniPoly::zero(self.var);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * BigRational::from_integer(k.into()))
            .collect();
        UniPoly::new(self.var, coeffs)
    }

    pub fn eval(&self, x: &BigRational) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn poly(coeffs: &[i64]) -> UniPoly {
        UniPoly::new(0, coeffs.iter().map(|&c| r(c)).collect())
    }

    #[test]
    fn divrem_roundtrip() {
        let a = poly(&[1, 2, 1]); // (1+x)^2
        let b = poly(&[1, 1]);
        let (q, rem) = a.divrem(&b);
        assert!(rem.is_zero());
        assert_eq!(q, b);
    }

    #[test]
    fn gcd_of_powers() {
        let a = poly(&[1, 2, 1]);
        let b = poly(&[1, 1]).mul(&poly(&[2, 1]));
        assert_eq!(a.gcd(&b), poly(&[1, 1]));
        assert_eq!(poly(&[3]).gcd(&poly(&[0])), poly(&[1]));
    }

    #[test]
    fn derivative_and_eval() {
        let a = poly(&[1, 0, 3]); // 1 + 3x^2
        assert_eq!(a.derivative(), poly(&[0, 6]));
        assert_eq!(a.eval(&r(2)), r(13));
    }
}
