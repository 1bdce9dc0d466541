use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::{binomial, compensated_alternating_sum, LogWeight, NeumaierSum};

/// Exact rational number, always in lowest terms with a positive denominator.
pub type Rational = BigRational;

/// Scalar field shared by the log-space (floating) and exact (rational)
/// evaluation modes.
pub trait Weight:
    Clone
    + Debug
    + Send
    + Sync
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(v: u64) -> Self;
    /// Exact conversion for rationals (the binary value of `v`).
    fn from_f64(v: f64) -> Self;
    /// `1 - p` for a probability given as `f64`.
    fn complement_f64(p: f64) -> Self {
        Self::one() - Self::from_f64(p)
    }
    fn binomial(n: u64, k: u64) -> Self;
    fn powi(&self, e: u64) -> Self;
    fn to_f64(&self) -> f64;
    fn is_zero(&self) -> bool;
    fn is_negative(&self) -> bool;

    /// `C(n, a, b, n-a-b) = n! / (a! b! (n-a-b)!)`.
    fn multinomial(n: u64, a: u64, b: u64) -> Self {
        if a + b > n {
            return Self::zero();
        }
        Self::binomial(n, a) * Self::binomial(n - a, b)
    }

    fn ratio(a: u64, b: u64) -> Self {
        Self::from_u64(a) / Self::from_u64(b)
    }

    fn clamp_nonneg(self) -> Self {
        if self.is_negative() {
            Self::zero()
        } else {
            self
        }
    }

    fn sum_all(terms: Vec<Self>) -> Self {
        terms.into_iter().fold(Self::zero(), |a, b| a + b)
    }
}

impl Weight for LogWeight {
    fn zero() -> Self {
        LogWeight::ZERO
    }
    fn one() -> Self {
        LogWeight::ONE
    }
    fn from_u64(v: u64) -> Self {
        LogWeight::from_f64(v as f64)
    }
    fn from_f64(v: f64) -> Self {
        LogWeight::from_f64(v)
    }
    fn complement_f64(p: f64) -> Self {
        LogWeight::from_log((-p).ln_1p(), 1)
    }
    fn binomial(n: u64, k: u64) -> Self {
        LogWeight::from_log(binomial::ln_binomial(n, k), 1)
    }
    fn powi(&self, e: u64) -> Self {
        LogWeight::powi(*self, e)
    }
    fn to_f64(&self) -> f64 {
        LogWeight::to_f64(self)
    }
    fn is_zero(&self) -> bool {
        LogWeight::is_zero(self)
    }
    fn is_negative(&self) -> bool {
        self.sign() < 0
    }
    fn sum_all(terms: Vec<Self>) -> Self {
        compensated_alternating_sum(&terms)
    }
}

impl Weight for Rational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_u64(v: u64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite coefficient")
    }
    fn binomial(n: u64, k: u64) -> Self {
        BigRational::from_integer(exact_binomial(n, k))
    }
    fn powi(&self, e: u64) -> Self {
        num_traits::pow(self.clone(), e as usize)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }
}

/// Plain floating point; fast, for moderate `n` where nothing underflows.
impl Weight for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_u64(v: u64) -> Self {
        v as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn binomial(n: u64, k: u64) -> Self {
        match binomial::binomial_u128(n, k) {
            Some(c) => c as f64,
            None => LogWeight::binomial(n, k).to_f64(),
        }
    }
    fn powi(&self, e: u64) -> Self {
        match i32::try_from(e) {
            Ok(e) => f64::powi(*self, e),
            Err(_) => f64::powf(*self, e as f64),
        }
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn is_negative(&self) -> bool {
        *self < 0.0
    }
    fn sum_all(terms: Vec<Self>) -> Self {
        terms.into_iter().collect::<NeumaierSum>().value()
    }
}

/// Exact `C(n, k)`; zero when `k > n`.
pub fn exact_binomial(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut r = BigInt::one();
    for i in 0..k {
        r = r * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    r
}

/// Reduced fraction `num / den`.
pub fn rational(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_is_reduced() {
        let r = rational(6, -8);
        assert_eq!(*r.numer(), BigInt::from(-3));
        assert_eq!(*r.denom(), BigInt::from(4));
    }

    #[test]
    fn modes_agree_on_small_formulas() {
        let exact = <Rational as Weight>::multinomial(7, 2, 3) * rational(1, 3).powi(5);
        let log = <LogWeight as Weight>::multinomial(7, 2, 3) * LogWeight::from_f64(1.0 / 3.0).powi(5);
        assert!((Weight::to_f64(&exact) - log.to_f64()).abs() < 1e-14);
        assert_eq!(exact_binomial(30, 15), BigInt::from(155_117_520u64));
        let plain = <f64 as Weight>::multinomial(7, 2, 3) * Weight::powi(&(1.0f64 / 3.0), 5);
        assert!((plain - log.to_f64()).abs() < 1e-14);
        assert_eq!(<f64 as Weight>::binomial(200, 100), LogWeight::binomial(200, 100).to_f64());
    }

    #[test]
    fn from_f64_is_exact() {
        let r = <Rational as Weight>::from_f64(0.1);
        assert_eq!(Weight::to_f64(&r), 0.1);
        assert_ne!(r, rational(1, 10));
    }
}
