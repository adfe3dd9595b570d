//! Scalar types for orbit arithmetic: `f64`, a double-double with about 106
//! significant bits, and an arbitrary-precision float backed by `astro-float`.
//!
//! The orbit engine only needs field operations, `exp`, `sin`/`cos` on a
//! reduced argument, and reduction modulo `2 pi` with an error bound, so the
//! trait is deliberately small.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, Consts, RoundingMode, Sign};

/// Working scalar for exact-regime orbit steps.
pub trait Real: Clone + fmt::Debug + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, other: &Self) -> Self;
    fn sub(&self, other: &Self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn mul_f64(&self, c: f64) -> Self {
        self.mul(&Self::from_f64(c))
    }
    fn neg(&self) -> Self;
    fn exp(&self) -> Self;
    /// `(sin x, cos x)` for `|x| <= pi`.
    fn sin_cos(&self) -> (Self, Self);
    /// Representative of `self` modulo `2 pi` in `[-pi, pi]`, with a bound on
    /// the absolute error introduced by the reduction.
    fn rem_two_pi(&self) -> (Self, f64);
    /// Relative error bound for one arithmetic operation.
    fn unit_roundoff() -> f64;
}

const TWO_PI_0: f64 = 6.283185307179586;
const TWO_PI_1: f64 = 2.4492935982947064e-16;
const TWO_PI_2: f64 = -5.989539619436679e-33;
const HALF_PI_0: f64 = TWO_PI_0 / 4.0;
const HALF_PI_1: f64 = TWO_PI_1 / 4.0;
const HALF_PI_2: f64 = TWO_PI_2 / 4.0;
const LN2_0: f64 = 0.6931471805599453;
const LN2_1: f64 = 2.3190468138462996e-17;
const LN2_2: f64 = 5.707708438416212e-34;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn add_f64(self, b: f64) -> Self {
        let (s, e) = two_sum(self.hi, b);
        Self::renorm(s, e + self.lo)
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        Self::renorm(p, e + self.lo * b)
    }

    pub fn div_f64(self, b: f64) -> Self {
        let q1 = self.hi / b;
        let (p, e) = two_prod(q1, b);
        let (s, f) = two_sum(self.hi, -p);
        let q2 = (s + (f - e + self.lo)) / b;
        Self::renorm(q1, q2)
    }

    pub fn sqr(self) -> Self {
        self * self
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    /// Multiply by `2^k` exactly (barring overflow or underflow).
    pub fn ldexp(self, k: i32) -> Self {
        Self { hi: ldexp(self.hi, k), lo: ldexp(self.lo, k) }
    }

    /// Below about `exp(-600)` the low word falls into the subnormal range
    /// and the result degrades towards plain `f64` accuracy.
    pub fn exp(self) -> Self {
        if self.hi > 709.8 {
            return Self::new(f64::INFINITY, 0.0);
        }
        if self.hi < -745.2 {
            return Self::ZERO;
        }
        let k = (self.hi / LN2_0).round();
        let (p0, e0) = two_prod(k, LN2_0);
        let (p1, e1) = two_prod(k, LN2_1);
        let r = self.add_f64(-p0).add_f64(-e0).add_f64(-p1).add_f64(-e1).add_f64(-k * LN2_2);
        // exp(r) = (exp(r/256))^256 with |r/256| < 0.0014.
        let t = r.ldexp(-8);
        let mut term = t;
        let mut sum = t;
        for i in 2..=11 {
            term = (term * t).div_f64(i as f64);
            sum = sum + term;
        }
        for _ in 0..8 {
            sum = sum.mul_f64(2.0) + sum.sqr();
        }
        (sum + Self::ONE).ldexp(k as i32)
    }

    /// `(sin, cos)` by quadrant reduction and Taylor series.
    pub fn sin_cos(self) -> (Self, Self) {
        let q = (self.hi / HALF_PI_0).round();
        let (p0, e0) = two_prod(q, HALF_PI_0);
        let (p1, e1) = two_prod(q, HALF_PI_1);
        let t = self.add_f64(-p0).add_f64(-e0).add_f64(-p1).add_f64(-e1).add_f64(-q * HALF_PI_2);
        let t2 = t.sqr();
        let mut s_term = t;
        let mut s = t;
        let mut c_term = Self::ONE;
        let mut c = Self::ONE;
        for i in 1..=15 {
            let n = (2 * i) as f64;
            c_term = -(c_term * t2).div_f64(n * (n - 1.0));
            c = c + c_term;
            s_term = -(s_term * t2).div_f64(n * (n + 1.0));
            s = s + s_term;
        }
        match (q as i64).rem_euclid(4) {
            0 => (s, c),
            1 => (c, -s),
            2 => (-s, -c),
            _ => (-c, s),
        }
    }

    /// Reduction modulo the triple-double `2 pi`, repeated until `|y| <= pi`.
    pub fn rem_two_pi(self) -> (Self, f64) {
        let mut y = self;
        let mut err = 0.0;
        for _ in 0..64 {
            let k = (y.hi / TWO_PI_0).round();
            if k == 0.0 {
                break;
            }
            let before = y.hi.abs();
            let (p0, e0) = two_prod(k, TWO_PI_0);
            let (p1, e1) = two_prod(k, TWO_PI_1);
            y = y.add_f64(-p0).add_f64(-e0).add_f64(-p1).add_f64(-e1).add_f64(-k * TWO_PI_2);
            err += before * 2f64.powi(-103) + k.abs() * 1e-48;
        }
        (y, err)
    }
}

/// `x * 2^k` without intermediate overflow.
pub fn ldexp(mut x: f64, mut k: i32) -> f64 {
    while k > 1000 {
        x *= 2f64.powi(1000);
        k -= 1000;
    }
    while k < -1000 {
        x *= 2f64.powi(-1000);
        k += 1000;
    }
    x * 2f64.powi(k)
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Self::renorm(s, e + f)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        Self::renorm(p, e + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Self::new(q1, q2).add_f64(q3)
    }
}

impl Real for DoubleDouble {
    fn from_f64(x: f64) -> Self {
        x.into()
    }
    fn to_f64(&self) -> f64 {
        self.hi + self.lo
    }
    fn add(&self, other: &Self) -> Self {
        *self + *other
    }
    fn sub(&self, other: &Self) -> Self {
        *self - *other
    }
    fn mul(&self, other: &Self) -> Self {
        *self * *other
    }
    fn div(&self, other: &Self) -> Self {
        *self / *other
    }
    fn mul_f64(&self, c: f64) -> Self {
        DoubleDouble::mul_f64(*self, c)
    }
    fn neg(&self) -> Self {
        -*self
    }
    fn exp(&self) -> Self {
        DoubleDouble::exp(*self)
    }
    fn sin_cos(&self) -> (Self, Self) {
        DoubleDouble::sin_cos(*self)
    }
    fn rem_two_pi(&self) -> (Self, f64) {
        DoubleDouble::rem_two_pi(*self)
    }
    fn unit_roundoff() -> f64 {
        2f64.powi(-102)
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, other: &Self) -> Self {
        self + other
    }
    fn sub(&self, other: &Self) -> Self {
        self - other
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn neg(&self) -> Self {
        -self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn sin_cos(&self) -> (Self, Self) {
        f64::sin_cos(*self)
    }
    fn rem_two_pi(&self) -> (Self, f64) {
        let (y, err) = DoubleDouble::from(*self).rem_two_pi();
        let r = y.to_f64();
        (r, err + r.abs() * f64::EPSILON)
    }
    fn unit_roundoff() -> f64 {
        f64::EPSILON
    }
}

thread_local! {
    static BIG_BITS: Cell<usize> = const { Cell::new(2048) };
    static BIG_CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constants cache"));
}

const RM: RoundingMode = RoundingMode::ToEven;

/// Sets the working precision of [`BigReal`] on this thread until dropped.
pub struct PrecisionGuard {
    previous: usize,
}

impl PrecisionGuard {
    pub fn new(bits: usize) -> Self {
        let previous = BIG_BITS.with(|b| b.replace(bits.max(64)));
        Self { previous }
    }
}

impl Drop for PrecisionGuard {
    fn drop(&mut self) {
        BIG_BITS.with(|b| b.set(self.previous));
    }
}

fn big_bits() -> usize {
    BIG_BITS.with(Cell::get)
}

fn with_consts<R>(f: impl FnOnce(&mut Consts) -> R) -> R {
    BIG_CONSTS.with(|c| f(&mut c.borrow_mut()))
}

/// Arbitrary-precision scalar; precision is taken from the current thread's
/// [`PrecisionGuard`] (2048 bits by default).
#[derive(Clone, Debug)]
pub struct BigReal(pub BigFloat);

impl BigReal {
    pub fn two_pi(bits: usize) -> BigFloat {
        let pi = with_consts(|cc| cc.pi(bits, RM));
        pi.mul(&BigFloat::from_f64(2.0, 64), bits, RM)
    }

    fn exponent(&self) -> i64 {
        self.0.exponent().map(i64::from).unwrap_or(0)
    }
}

impl Real for BigReal {
    fn from_f64(x: f64) -> Self {
        BigReal(BigFloat::from_f64(x, big_bits()))
    }

    fn to_f64(&self) -> f64 {
        let Some((words, _, sign, exponent, _)) = self.0.as_raw_parts() else {
            return if self.0.is_inf_pos() {
                f64::INFINITY
            } else if self.0.is_inf_neg() {
                f64::NEG_INFINITY
            } else {
                f64::NAN
            };
        };
        let n = words.len();
        if n == 0 || words.iter().all(|&w| w == 0) {
            return 0.0;
        }
        let top = words[n - 1] as f64;
        let next = if n >= 2 { words[n - 2] as f64 } else { 0.0 };
        let mantissa = top + next * 2f64.powi(-64);
        let value = ldexp(mantissa, exponent as i32 - 64);
        if sign == Sign::Neg {
            -value
        } else {
            value
        }
    }

    fn add(&self, other: &Self) -> Self {
        BigReal(self.0.add(&other.0, big_bits(), RM))
    }
    fn sub(&self, other: &Self) -> Self {
        BigReal(self.0.sub(&other.0, big_bits(), RM))
    }
    fn mul(&self, other: &Self) -> Self {
        BigReal(self.0.mul(&other.0, big_bits(), RM))
    }
    fn div(&self, other: &Self) -> Self {
        BigReal(self.0.div(&other.0, big_bits(), RM))
    }
    fn neg(&self) -> Self {
        let mut v = self.0.clone();
        v.inv_sign();
        BigReal(v)
    }
    fn exp(&self) -> Self {
        let bits = big_bits();
        BigReal(with_consts(|cc| self.0.exp(bits, RM, cc)))
    }
    fn sin_cos(&self) -> (Self, Self) {
        let bits = big_bits();
        with_consts(|cc| (BigReal(self.0.sin(bits, RM, cc)), BigReal(self.0.cos(bits, RM, cc))))
    }
    fn rem_two_pi(&self) -> (Self, f64) {
        let bits = big_bits();
        let extra = self.exponent().max(0) as usize;
        let wp = bits + extra + 64;
        let two_pi = Self::two_pi(wp);
        let k = self.0.div(&two_pi, wp, RM).round(0, RM);
        let r = self.0.sub(&k.mul(&two_pi, wp, RM), wp, RM);
        let mut reduced = r.clone();
        reduced.set_precision(bits, RM).ok();
        let magnitude = ldexp(1.0, self.exponent().max(2) as i32);
        (BigReal(reduced), magnitude * ldexp(4.0, -(bits as i32)))
    }
    fn unit_roundoff() -> f64 {
        ldexp(4.0, -(big_bits() as i32))
    }
}
