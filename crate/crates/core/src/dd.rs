//! Double-double arithmetic and the [`Real`] scalar abstraction.
//!
//! A [`DoubleDouble`] is an unevaluated sum `hi + lo` of two binary64 values
//! with `|lo| <= ulp(hi) / 2`, giving roughly 32 significant decimal digits.
//! The error-free transformations follow the usual Dekker / Knuth / Bailey
//! constructions; multiplication relies on a hardware fused multiply-add.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

/// Scalar type used by the precision-generic kernels (matrix exponential,
/// LU solves, mapping matrices).
pub trait Real:
    Copy
    + fmt::Debug
    + fmt::Display
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    /// Unit roundoff of the representation.
    const EPSILON: f64;
    /// Largest 1-norm for which the degree-13 Padé approximant of `exp` is
    /// accurate to the unit roundoff.
    const PADE13_THETA: f64;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    fn one() -> Self {
        Self::from_f64(1.0)
    }
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn sin_cos(self) -> (Self, Self);
    fn powi(self, n: u32) -> Self {
        let mut base = self;
        let mut acc = Self::one();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc *= base;
            }
            base *= base;
            k >>= 1;
        }
        acc
    }
    fn is_finite(self) -> bool {
        self.to_f64().is_finite()
    }
    /// `pi` to the working precision.
    fn pi() -> Self;
}

impl Real for f64 {
    const EPSILON: f64 = f64::EPSILON;
    const PADE13_THETA: f64 = 5.371920351148152;

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
    fn pi() -> Self {
        std::f64::consts::PI
    }
}

/// Unevaluated sum of two doubles.
#[derive(Clone, Copy, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let err = b - (s - a);
    (s, err)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = a.mul_add(b, -p);
    (p, err)
}

const DD_PI: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::PI,
    lo: 1.2246467991473532e-16,
};
const DD_FRAC_PI_2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::FRAC_PI_2,
    lo: 6.123233995736766e-17,
};
const DD_LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.3190468138462996e-17,
};

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    #[inline]
    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    #[inline]
    pub fn from_sum(a: f64, b: f64) -> Self {
        let (hi, lo) = two_sum(a, b);
        Self { hi, lo }
    }

    #[inline]
    pub fn from_product(a: f64, b: f64) -> Self {
        let (hi, lo) = two_prod(a, b);
        Self { hi, lo }
    }

    #[inline]
    fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }

    #[inline]
    pub fn square(self) -> Self {
        let (p, e) = two_prod(self.hi, self.hi);
        let e = e + 2.0 * self.hi * self.lo;
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }

    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Self {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    /// Taylor series of `sin` and `cos` for `|x| <= pi/4`.
    fn sin_cos_reduced(x: Self) -> (Self, Self) {
        let x2 = x.square();
        let tiny = 1e-34;

        let mut sin = x;
        let mut term = x;
        let mut k = 1.0;
        loop {
            term = -(term * x2) / DoubleDouble::from_f64((k + 1.0) * (k + 2.0));
            k += 2.0;
            sin += term;
            if term.hi.abs() < tiny {
                break;
            }
        }

        let mut cos = Self::ONE;
        let mut term = Self::ONE;
        let mut k = 0.0;
        loop {
            term = -(term * x2) / DoubleDouble::from_f64((k + 1.0) * (k + 2.0));
            k += 2.0;
            cos += term;
            if term.hi.abs() < tiny {
                break;
            }
        }
        (sin, cos)
    }
}

impl fmt::Debug for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DoubleDouble({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.hi)
    }
}

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let e = e + t;
        let (s, e) = quick_two_sum(s, e);
        let e = e + f;
        let (hi, lo) = quick_two_sum(s, e);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    #[inline]
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Self { hi, lo } + DoubleDouble::from_f64(q3)
    }
}

macro_rules! assign_op {
    ($tr:ident, $method:ident, $op:tt) => {
        impl $tr for DoubleDouble {
            #[inline]
            fn $method(&mut self, rhs: Self) {
                *self = *self $op rhs;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);

impl Sum for DoubleDouble {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |acc, x| acc + x)
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
}

impl Real for DoubleDouble {
    const EPSILON: f64 = 4.93038065763132e-32; // 2^-104
    const PADE13_THETA: f64 = 1.0;

    #[inline]
    fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
    #[inline]
    fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 {
                Self::ZERO
            } else {
                Self::from_f64(f64::NAN)
            };
        }
        // One Newton step on the double approximation.
        let x = self.hi.sqrt();
        let x_dd = Self::from_product(x, x);
        let correction = (self - x_dd).hi / (2.0 * x);
        Self::from_sum(x, correction)
    }

    fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Self::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        // exp(x) = 2^k * exp(r / 512)^512 with |r| <= ln2 / 2.
        let k = (self.hi / DD_LN2.hi).round();
        let r = (self - DD_LN2.mul_f64(k)).ldexp(-9);

        // expm1(r) by Taylor series, then undo the scaling via
        // expm1(2y) = 2 expm1(y) + expm1(y)^2.
        let mut s = r;
        let mut term = r;
        let mut n = 1.0;
        loop {
            n += 1.0;
            term = term * r / Self::from_f64(n);
            s += term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..9 {
            s = s.mul_f64(2.0) + s.square();
        }
        (s + Self::ONE).ldexp(k as i32)
    }

    fn sin_cos(self) -> (Self, Self) {
        let q = (self.hi / DD_FRAC_PI_2.hi).round();
        let r = self - DD_FRAC_PI_2 * Self::from_f64(q);
        let (s, c) = Self::sin_cos_reduced(r);
        match (q as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }

    fn pi() -> Self {
        DD_PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(x: f64) -> DoubleDouble {
        DoubleDouble::from_f64(x)
    }

    #[test]
    fn one_third_times_three() {
        let third = dd(1.0) / dd(3.0);
        let back = third * dd(3.0);
        assert!((back - dd(1.0)).abs().to_f64() < 1e-31);
        // the residual lives in the low word
        assert!(third.lo != 0.0);
    }

    #[test]
    fn sqrt_two_squared() {
        let r = dd(2.0).sqrt();
        assert!((r * r - dd(2.0)).abs().to_f64() < 1e-31);
    }

    #[test]
    fn exp_of_one_matches_e() {
        // e = 2.718281828459045235360287471352662497757...
        let e = dd(1.0).exp();
        let reference = DoubleDouble::new(std::f64::consts::E, 1.4456468917292502e-16);
        assert!((e - reference).abs().to_f64() < 1e-31, "{:?}", e);
        let prod = dd(2.5).exp() * dd(-2.5).exp();
        assert!((prod - dd(1.0)).abs().to_f64() < 1e-30);
    }

    #[test]
    fn sin_cos_identities() {
        for &x in &[0.1, 0.7, 1.3, 2.9, 3.7, 6.0, -1.1] {
            let (s, c) = dd(x).sin_cos();
            let one = s.square() + c.square();
            assert!((one - dd(1.0)).abs().to_f64() < 1e-30, "x={x}");
            assert!((s.to_f64() - x.sin()).abs() < 1e-15);
            assert!((c.to_f64() - x.cos()).abs() < 1e-15);
        }
        // cos(pi/3) = 1/2 to full width
        let (_, c) = (DoubleDouble::pi() / dd(3.0)).sin_cos();
        assert!((c - dd(0.5)).abs().to_f64() < 1e-31);
    }

    #[test]
    fn ordering_uses_low_word() {
        let a = DoubleDouble::new(1.0, 1e-20);
        let b = DoubleDouble::new(1.0, -1e-20);
        assert!(a > b);
    }

    #[test]
    fn powi_by_squaring() {
        let x = dd(1.0) + dd(1e-20);
        let y = x.powi(1000);
        assert!((y - (dd(1.0) + dd(1e-17))).abs().to_f64() < 1e-31);
    }
}
