//! Double-double reals for the finite-difference side of gradient checks.
//!
//! A value is the unevaluated sum `hi + lo` of two doubles with
//! `|lo| ≤ ulp(hi)/2`, giving about 106 significant bits. Arithmetic uses
//! the usual error-free transformations (two-sum, fused two-product).
//! `exp`, `exp_m1`, `ln` and `tanh` are accurate to roughly 1e-31 relative;
//! the trigonometric functions, which the model never uses, are only
//! `f64`-accurate.

use core::cmp::Ordering;
use core::fmt;
use core::num::FpCategory;
use core::ops::{Add, Div, Mul, Neg, Rem, Sub};

use num_traits::{Float, Num, NumCast, One, ParseFloatError, ToPrimitive, Zero};

use crate::Real;

#[derive(Clone, Copy, Debug, Default)]
pub struct Wide {
    hi: f64,
    lo: f64,
}

const LN2_HI: f64 = 0.693_147_180_559_945_3;
const LN2_LO: f64 = 2.319_046_813_846_299_6e-17;

/// Halvings applied before the Taylor series of `exp_m1`; undone by
/// repeated doubling.
const HALVINGS: i32 = 10;
const TAYLOR_TERMS: u32 = 12;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Requires `|a| ≥ |b|` or `a == 0`.
#[inline]
fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, libm::fma(a, b, -p))
}

impl Wide {
    pub fn new(x: f64) -> Self {
        Wide { hi: x, lo: 0.0 }
    }

    /// Normalizes `hi + lo`.
    pub fn from_parts(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Wide { hi, lo }
    }

    pub fn hi(self) -> f64 {
        self.hi
    }

    pub fn lo(self) -> f64 {
        self.lo
    }

    fn scale(self, factor: f64) -> Self {
        Wide {
            hi: self.hi * factor,
            lo: self.lo * factor,
        }
    }

    /// `e^r − 1` for `|r| ≤ 0.5`, without cancellation near zero.
    fn exp_m1_reduced(r: Wide) -> Wide {
        let s = r.scale(libm::ldexp(1.0, -HALVINGS));
        let mut term = s;
        let mut sum = s;
        for n in 2..=TAYLOR_TERMS {
            term = term * s / Wide::new(n as f64);
            sum = sum + term;
        }
        // e^{2s} − 1 = (e^s − 1)(e^s − 1 + 2)
        let two = Wide::new(2.0);
        for _ in 0..HALVINGS {
            sum = sum * (sum + two);
        }
        sum
    }
}

impl Real for Wide {
    const NAME: &'static str = "f64x2";

    #[inline]
    fn of(x: f64) -> Self {
        Wide::new(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.hi
    }

    fn exp_(self) -> Self {
        Float::exp(self)
    }

    fn ln_(self) -> Self {
        Float::ln(self)
    }

    fn tanh_(self) -> Self {
        Float::tanh(self)
    }
}

impl fmt::Display for Wide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}{:+e}", self.hi, self.lo)
    }
}

impl PartialEq for Wide {
    fn eq(&self, other: &Self) -> bool {
        self.hi == other.hi && self.lo == other.lo
    }
}

impl PartialOrd for Wide {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            ord => Some(ord),
        }
    }
}

impl Add for Wide {
    type Output = Wide;

    fn add(self, rhs: Wide) -> Wide {
        let (s, e) = two_sum(self.hi, rhs.hi);
        if !s.is_finite() {
            return Wide::new(s);
        }
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = fast_two_sum(s, e + t);
        let (hi, lo) = fast_two_sum(s, e + f);
        Wide { hi, lo }
    }
}

impl Neg for Wide {
    type Output = Wide;

    fn neg(self) -> Wide {
        Wide {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Wide {
    type Output = Wide;

    fn sub(self, rhs: Wide) -> Wide {
        self + (-rhs)
    }
}

impl Mul for Wide {
    type Output = Wide;

    fn mul(self, rhs: Wide) -> Wide {
        let (p, e) = two_prod(self.hi, rhs.hi);
        if !p.is_finite() {
            return Wide::new(p);
        }
        let cross = libm::fma(self.hi, rhs.lo, self.lo * rhs.hi);
        let (hi, lo) = fast_two_sum(p, e + cross);
        Wide { hi, lo }
    }
}

impl Div for Wide {
    type Output = Wide;

    /// Long division with three partial quotients.
    fn div(self, rhs: Wide) -> Wide {
        let q1 = self.hi / rhs.hi;
        if !q1.is_finite() {
            return Wide::new(q1);
        }
        let r = self - rhs * Wide::new(q1);
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * Wide::new(q2);
        let q3 = r.hi / rhs.hi;
        let (hi, lo) = fast_two_sum(q1, q2);
        Wide { hi, lo } + Wide::new(q3)
    }
}

impl Rem for Wide {
    type Output = Wide;

    fn rem(self, rhs: Wide) -> Wide {
        self - (self / rhs).trunc() * rhs
    }
}

impl Zero for Wide {
    fn zero() -> Self {
        Wide::new(0.0)
    }

    fn is_zero(&self) -> bool {
        self.hi == 0.0
    }
}

impl One for Wide {
    fn one() -> Self {
        Wide::new(1.0)
    }
}

impl Num for Wide {
    type FromStrRadixErr = ParseFloatError;

    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        <f64 as Num>::from_str_radix(s, radix).map(Wide::new)
    }
}

impl ToPrimitive for Wide {
    fn to_i64(&self) -> Option<i64> {
        self.hi.to_i64()
    }

    fn to_u64(&self) -> Option<u64> {
        self.hi.to_u64()
    }

    fn to_f64(&self) -> Option<f64> {
        Some(self.hi)
    }
}

impl NumCast for Wide {
    fn from<N: ToPrimitive>(n: N) -> Option<Self> {
        n.to_f64().map(Wide::new)
    }
}

macro_rules! via_f64 {
    ($($method:ident),*) => {$(
        fn $method(self) -> Self {
            Wide::new(Float::$method(self.hi))
        }
    )*};
}

macro_rules! pred {
    ($($method:ident),*) => {$(
        fn $method(self) -> bool {
            Float::$method(self.hi)
        }
    )*};
}

macro_rules! constant {
    ($($method:ident),*) => {$(
        fn $method() -> Self {
            Wide::new(<f64 as Float>::$method())
        }
    )*};
}

impl Float for Wide {
    constant!(nan, infinity, neg_infinity, neg_zero, min_value, min_positive_value, max_value);
    pred!(is_nan, is_infinite, is_finite, is_normal, is_sign_positive, is_sign_negative);
    via_f64!(exp2, log2, log10, cbrt, sin, cos, tan, asin, acos, atan, sinh, cosh, asinh, acosh, atanh);

    fn classify(self) -> FpCategory {
        self.hi.classify()
    }

    fn floor(self) -> Self {
        let hi = libm::floor(self.hi);
        if hi == self.hi {
            Wide::from_parts(hi, libm::floor(self.lo))
        } else {
            Wide::new(hi)
        }
    }

    fn ceil(self) -> Self {
        -(-self).floor()
    }

    fn round(self) -> Self {
        if self.hi < 0.0 {
            -(-self).round()
        } else {
            (self + Wide::new(0.5)).floor()
        }
    }

    fn trunc(self) -> Self {
        if self.hi < 0.0 {
            self.ceil()
        } else {
            self.floor()
        }
    }

    fn fract(self) -> Self {
        self - self.trunc()
    }

    fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    fn signum(self) -> Self {
        Wide::new(Float::signum(self.hi))
    }

    fn mul_add(self, a: Self, b: Self) -> Self {
        self * a + b
    }

    fn recip(self) -> Self {
        Wide::one() / self
    }

    fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { self.recip() } else { self };
        let mut k = n.unsigned_abs();
        let mut acc = Wide::one();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            k >>= 1;
        }
        acc
    }

    fn powf(self, n: Self) -> Self {
        (n * self.ln()).exp()
    }

    fn sqrt(self) -> Self {
        if self.hi <= 0.0 || !self.hi.is_finite() {
            return Wide::new(libm::sqrt(self.hi));
        }
        // One Newton correction of the double estimate.
        let y = libm::sqrt(self.hi);
        let (p, e) = two_prod(y, y);
        let residual = (self - Wide::from_parts(p, e)).hi;
        Wide::from_parts(y, residual / (2.0 * y))
    }

    fn exp(self) -> Self {
        if !self.hi.is_finite() || self.hi > 709.0 || self.hi < -745.0 {
            return Wide::new(libm::exp(self.hi));
        }
        let k = libm::round(self.hi / LN2_HI);
        let r = self - Wide::from_parts(LN2_HI, LN2_LO) * Wide::new(k);
        let e = Self::exp_m1_reduced(r) + Wide::one();
        // Two factors keep 2^k representable near the ends of the range.
        let half = libm::trunc(k / 2.0);
        e.scale(libm::ldexp(1.0, half as i32)).scale(libm::ldexp(1.0, (k - half) as i32))
    }

    fn exp_m1(self) -> Self {
        if Float::abs(self.hi) <= 0.5 {
            Self::exp_m1_reduced(self)
        } else {
            self.exp() - Wide::one()
        }
    }

    fn ln(self) -> Self {
        if !(self.hi > 0.0) || !self.hi.is_finite() {
            return Wide::new(libm::log(self.hi));
        }
        // Newton on e^y = x; each step doubles the correct digits.
        let mut y = Wide::new(libm::log(self.hi));
        for _ in 0..2 {
            y = y + self * (-y).exp() - Wide::one();
        }
        y
    }

    fn ln_1p(self) -> Self {
        (Wide::one() + self).ln()
    }

    fn log(self, base: Self) -> Self {
        self.ln() / base.ln()
    }

    fn tanh(self) -> Self {
        let a = self.abs();
        // 1 − tanh(40) is below the double-double resolution.
        let t = if a.hi > 40.0 {
            Wide::one()
        } else {
            let em1 = (a + a).exp_m1();
            em1 / (em1 + Wide::new(2.0))
        };
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }

    fn max(self, other: Self) -> Self {
        if self >= other || other.is_nan() {
            self
        } else {
            other
        }
    }

    fn min(self, other: Self) -> Self {
        if self <= other || other.is_nan() {
            self
        } else {
            other
        }
    }

    fn abs_sub(self, other: Self) -> Self {
        if self > other {
            self - other
        } else {
            Wide::zero()
        }
    }

    fn hypot(self, other: Self) -> Self {
        (self * self + other * other).sqrt()
    }

    fn atan2(self, other: Self) -> Self {
        Wide::new(Float::atan2(self.hi, other.hi))
    }

    fn sin_cos(self) -> (Self, Self) {
        (self.sin(), self.cos())
    }

    fn integer_decode(self) -> (u64, i16, i8) {
        Float::integer_decode(self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(hi: f64, lo: f64) -> Wide {
        Wide::from_parts(hi, lo)
    }

    fn close(a: Wide, b: Wide, rel: f64) -> bool {
        let d = (a - b).abs();
        d.hi() <= rel * b.abs().hi()
    }

    // Reference values printed to 40 digits by an arbitrary precision
    // library and split into two doubles.
    #[test]
    fn exp_matches_reference_values() {
        let e = dd(2.718281828459045, 1.4456468917292502e-16);
        assert!(close(Wide::new(1.0).exp(), e, 1e-30));
        let e03 = dd(1.3498588075760032, -9.447314673432387e-17);
        assert!(close(Wide::new(0.3).exp(), e03, 1e-30), "{:?}", Wide::new(0.3).exp());
    }

    #[test]
    fn ln_inverts_exp() {
        for &x in &[1e-12, 0.01, 0.5, 0.999_999, 1.0, 1.5, 7.0, 1e8] {
            let w = Wide::new(x);
            assert!(close(w.ln().exp(), w, 1e-30), "{x}");
        }
        assert!(close(Wide::new(2.0).ln(), dd(LN2_HI, LN2_LO), 1e-30));
    }

    #[test]
    fn exp_m1_keeps_small_arguments() {
        let x = Wide::new(1e-20);
        // e^x − 1 = x + x²/2 + …; the cube term is far below resolution.
        assert!(close(x.exp_m1(), x + x * x / Wide::new(2.0), 1e-30));
        let y = Wide::new(0.25);
        assert!(close(y.exp_m1(), y.exp() - Wide::one(), 1e-30));
    }

    #[test]
    fn tanh_matches_reference_value() {
        let t3 = dd(0.9950547536867305, -1.2991892863562624e-17);
        assert!(close(Wide::new(3.0).tanh(), t3, 1e-30));
        assert!(close(Wide::new(-3.0).tanh(), -t3, 1e-30));
    }

    #[test]
    fn division_and_square_root_round_trip() {
        let a = dd(3.0, 1e-17);
        let b = dd(7.0, -3e-17);
        assert!(close((a / b) * b, a, 1e-31));
        let third = Wide::one() / Wide::new(3.0);
        let want = dd(0.3333333333333333, 1.850371707708594e-17);
        assert!(close(third, want, 1e-31));
        let r = Wide::new(2.0).sqrt();
        assert!(close(r * r, Wide::new(2.0), 1e-31));
    }

    #[test]
    fn tanh_agrees_with_the_exponential_form() {
        for &x in &[-3.0, -0.5, 0.1, 0.75, 2.0, 12.0] {
            let w = Wide::new(x);
            let (p, m) = (w.exp(), (-w).exp());
            assert!(close(w.tanh(), (p - m) / (p + m), 1e-30), "{x}");
        }
        assert_eq!(Wide::new(50.0).tanh().hi(), 1.0);
        assert_eq!(Wide::new(-50.0).tanh().hi(), -1.0);
        let tiny = Wide::new(1e-18);
        assert!(close(tiny.tanh(), tiny, 1e-30));
    }

    #[test]
    fn ordering_and_extremes() {
        assert!(Wide::new(0.3) > Wide::new(-2.0));
        assert_eq!(Wide::new(0.3).max(Wide::new(-2.0)).hi(), 0.3);
        assert_eq!(Wide::new(-800.0).exp().hi(), 0.0);
        assert!(Wide::new(-700.0).exp().hi() > 0.0);
        assert!(Wide::new(-1.0).ln().is_nan());
    }
}
