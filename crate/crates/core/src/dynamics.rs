//! Evaluation and iteration of `f(z) = P(e^z)/e^z`.
//!
//! `f`, `f'` and `f''` are all exponential sums `sum_k c_k e^{kz}` with
//! `k` running from `-1` to `N-1`. Every evaluation factors out the dominant
//! exponential (`e^{(N-1)z}` on the right half-plane, `e^{-z}` on the left),
//! so moduli far beyond `f64` range are still available as logarithms.
//!
//! Orbits are iterated exactly (in a chosen precision) while `log|z| <= 300`
//! and as log-polar bounds beyond that. The argument of a log-polar point is
//! only known when the orbit stays on the real axis; otherwise it needs
//! `log|z|` bits of the previous imaginary part and is marked untrusted.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::magnitude::{Magnitude, ThresholdTower};
use crate::poly::Polynomial;
use crate::real::{BigReal, DoubleDouble, PrecisionGuard, Real};
use crate::{Error, Result};

/// `log|z|` above which a point is held in log-polar form.
pub const SWITCH_THRESHOLD: f64 = 300.0;
/// Argument error beyond which an argument is no longer trusted.
pub const ARG_TRUST_LIMIT: f64 = 1e-3;
/// Minimum angular uncertainty assumed when resolving `cos(arg)`.
pub const ANGLE_RESOLUTION: f64 = 1e-6;
/// Relative size under which a derivative counts as vanishing.
pub const SINGULAR_TOL: f64 = 1e-14;

/// A point of an orbit, exact or as `(log|z|, arg z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ExtendedComplex {
    Exact(Complex64),
    LogMag {
        log_modulus: f64,
        argument: f64,
        arg_trusted: bool,
    },
}

impl ExtendedComplex {
    pub fn log_modulus(&self) -> f64 {
        match self {
            Self::Exact(z) => z.norm().ln(),
            Self::LogMag { log_modulus, .. } => *log_modulus,
        }
    }

    pub fn argument(&self) -> f64 {
        match self {
            Self::Exact(z) => z.arg(),
            Self::LogMag { argument, .. } => *argument,
        }
    }
}

/// Scalar type used for exact-regime orbit steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    Double,
    /// Double-double, about 106 bits.
    #[default]
    Extended,
    Arbitrary { bits: usize },
}

impl Precision {
    pub const DEFAULT_BITS: usize = 2048;
}

fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// `sum_k c_k e^{kz}` over consecutive `k` starting at `bottom`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentialSum {
    bottom: i32,
    coeffs: Vec<Complex64>,
}

impl ExponentialSum {
    /// `f(z) = sum_i a_i e^{(i-1)z}`.
    pub fn of_map(p: &Polynomial) -> Self {
        Self { bottom: -1, coeffs: p.coeffs().to_vec() }
    }

    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * f64::from(self.bottom + i as i32))
            .collect();
        Self { bottom: self.bottom, coeffs }
    }

    pub fn top(&self) -> i32 {
        self.bottom + self.coeffs.len() as i32 - 1
    }

    fn coeff(&self, k: i32) -> Complex64 {
        self.coeffs[(k - self.bottom) as usize]
    }

    /// Exponent factored out at `z`: the top one for `Re z >= 0`.
    pub fn dominant_exponent(&self, re: f64) -> i32 {
        if re >= 0.0 {
            self.top()
        } else {
            self.bottom
        }
    }

    /// `(S, k*)` with `sum = S e^{k* z}`; every remaining exponential in `S`
    /// has modulus at most one.
    pub fn scaled(&self, z: Complex64) -> (Complex64, i32) {
        let k_star = self.dominant_exponent(z.re);
        let mut acc = Complex64::new(0.0, 0.0);
        if k_star == self.top() {
            let q = (-z).exp();
            for &c in &self.coeffs {
                acc = acc * q + c;
            }
        } else {
            let w = z.exp();
            for &c in self.coeffs.iter().rev() {
                acc = acc * w + c;
            }
        }
        (acc, k_star)
    }

    /// `sum_k |c_k| e^{(k - k*) Re z}`, the scaled modulus bound.
    pub fn scaled_abs_sum(&self, re: f64) -> f64 {
        let k_star = self.dominant_exponent(re);
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c.norm() * (f64::from(self.bottom + i as i32 - k_star) * re).exp())
            .sum()
    }

    pub fn log_abs(&self, z: Complex64) -> f64 {
        let (s, k) = self.scaled(z);
        s.norm().ln() + f64::from(k) * z.re
    }

    /// Plain value, `None` if it overflows.
    pub fn eval(&self, z: Complex64) -> Option<Complex64> {
        let (s, k) = self.scaled(z);
        let v = s * (z * f64::from(k)).exp();
        (v.re.is_finite() && v.im.is_finite()).then_some(v)
    }

    /// Log-polar value with argument reduced modulo `2 pi`.
    pub fn log_polar(&self, z: Complex64) -> ExtendedComplex {
        let (s, k) = self.scaled(z);
        let k = f64::from(k);
        let (turn, red_err) = (z.im * k).rem_two_pi();
        let arg_err = red_err + (z.im * k).abs() * f64::EPSILON + 8.0 * self.coeffs.len() as f64 * f64::EPSILON;
        ExtendedComplex::LogMag {
            log_modulus: s.norm().ln() + k * z.re,
            argument: wrap_angle(s.arg() + turn),
            arg_trusted: arg_err <= ARG_TRUST_LIMIT,
        }
    }

    /// Exact below the switch threshold, log-polar above it.
    pub fn eval_extended(&self, z: Complex64) -> ExtendedComplex {
        let log_modulus = self.log_abs(z);
        if log_modulus <= SWITCH_THRESHOLD {
            match self.eval(z) {
                Some(v) => ExtendedComplex::Exact(v),
                None => self.log_polar(z),
            }
        } else {
            self.log_polar(z)
        }
    }

    /// Bound on `|sum - c_{k*} e^{k* z}| / |c_{k*} e^{k* z}|` given
    /// `|Re z| >= x`, in the direction of `k*`.
    fn tail_ratio(&self, k_star: i32, x: f64) -> f64 {
        let lead = self.coeff(k_star).norm();
        let rest: f64 = self.coeffs.iter().map(|c| c.norm()).sum::<f64>() - lead;
        let q = (-x).exp();
        rest / lead * q / (1.0 - q)
    }
}

/// `f(z)`, switching to log-polar form above [`SWITCH_THRESHOLD`].
pub fn eval_f(p: &Polynomial, z: &ExtendedComplex) -> Result<ExtendedComplex> {
    eval_sum(p, &ExponentialSum::of_map(p), z)
}

/// `f'(z) = P'(e^z) - P(e^z)/e^z`, with the same regime rules as [`eval_f`].
pub fn eval_f_prime(p: &Polynomial, z: &ExtendedComplex) -> Result<ExtendedComplex> {
    eval_sum(p, &ExponentialSum::of_map(p).derivative(), z)
}

/// `f(z)` forced into log-polar form, valid wherever `f(z) != 0`.
pub fn eval_f_asymptotic(p: &Polynomial, z: Complex64) -> ExtendedComplex {
    ExponentialSum::of_map(p).log_polar(z)
}

fn eval_sum(p: &Polynomial, sum: &ExponentialSum, z: &ExtendedComplex) -> Result<ExtendedComplex> {
    match *z {
        ExtendedComplex::Exact(z) => {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::RegimeOverflow);
            }
            Ok(sum.eval_extended(z))
        }
        ExtendedComplex::LogMag { log_modulus, argument, arg_trusted } => {
            if !log_modulus.is_finite() {
                return Err(Error::RegimeOverflow);
            }
            if log_modulus <= SWITCH_THRESHOLD && arg_trusted {
                return Ok(sum.eval_extended(Complex64::from_polar(log_modulus.exp(), argument)));
            }
            let real = arg_trusted && p.has_real_coeffs() && (argument == 0.0 || argument == PI);
            let point = PolarPoint {
                lo: Magnitude::from_log(log_modulus),
                hi: Magnitude::from_log(log_modulus),
                arg: argument,
                arg_err: if arg_trusted { 0.0 } else { f64::INFINITY },
            };
            let (image, real) = polar_image(sum, &point, real).map_err(|_| Error::RegimeOverflow)?;
            let (lo, hi) = (image.lo.ln(), image.hi.ln());
            match (lo.to_f64(), hi.to_f64()) {
                (Some(lo), Some(hi)) if hi.is_finite() => Ok(ExtendedComplex::LogMag {
                    log_modulus: 0.5 * (lo + hi),
                    argument: image.arg,
                    arg_trusted: real || image.arg_err <= ARG_TRUST_LIMIT,
                }),
                _ => Err(Error::RegimeOverflow),
            }
        }
    }
}

/// `f''(z)/f'(z)`.
pub fn log_derivative_ratio(p: &Polynomial, z: Complex64) -> Result<Complex64> {
    let d1 = ExponentialSum::of_map(p).derivative();
    let d2 = d1.derivative();
    let (s1, _) = d1.scaled(z);
    let (s2, _) = d2.scaled(z);
    if s1.norm() <= SINGULAR_TOL * d1.scaled_abs_sum(z.re) {
        return Err(Error::SingularDerivative { re: z.re, im: z.im });
    }
    Ok(s2 / s1)
}

/// `log|f'(z)|`, finite for any `z` where `f'` does not vanish.
pub fn log_abs_derivative(p: &Polynomial, z: Complex64) -> Result<f64> {
    let d1 = ExponentialSum::of_map(p).derivative();
    let (s1, k) = d1.scaled(z);
    if s1.norm() <= SINGULAR_TOL * d1.scaled_abs_sum(z.re) {
        return Err(Error::SingularDerivative { re: z.re, im: z.im });
    }
    Ok(s1.norm().ln() + f64::from(k) * z.re)
}

/// Outcome of a depth-`k` certification run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictStatus {
    CertifiedToDepth(usize),
    FailedAtDepth(usize),
    IndeterminateAngle(usize),
}

/// Certification status with the log-scale slack of every passed level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitVerdict {
    pub status: VerdictStatus,
    pub margins: Vec<f64>,
}

impl OrbitVerdict {
    pub fn is_certified(&self) -> bool {
        matches!(self.status, VerdictStatus::CertifiedToDepth(_))
    }

    pub fn is_indeterminate(&self) -> bool {
        matches!(self.status, VerdictStatus::IndeterminateAngle(_))
    }
}

/// `|z|` in `[lo, hi]`, `arg z` within `arg_err` of `arg`.
#[derive(Clone, Copy, Debug)]
struct PolarPoint {
    lo: Magnitude,
    hi: Magnitude,
    arg: f64,
    arg_err: f64,
}

#[derive(Clone, Debug)]
enum State<T> {
    /// `re`, `im` within `err` of the true orbit point.
    Exact { re: T, im: T, err: f64, real: bool },
    Polar { point: PolarPoint, real: bool },
}

/// The orbit can no longer be followed (branch or precision lost).
#[derive(Debug)]
struct Lost;

/// Bounds of `|cos|` over `[arg - delta, arg + delta]`, `None` if the
/// interval reaches a zero of `cos`.
fn cos_bounds(arg: f64, delta: f64) -> Option<(f64, f64)> {
    if !(delta < PI / 2.0) {
        return None;
    }
    let (a, b) = (arg - delta, arg + delta);
    let first_zero = ((a - PI / 2.0) / PI).ceil();
    if PI / 2.0 + first_zero * PI <= b {
        return None;
    }
    let (ca, cb) = (a.cos().abs(), b.cos().abs());
    let first_peak = (a / PI).ceil();
    let hi = if first_peak * PI <= b { 1.0 } else { ca.max(cb) };
    Some((ca.min(cb) * (1.0 - 4.0 * f64::EPSILON), (hi * (1.0 + 4.0 * f64::EPSILON)).min(1.0)))
}

/// Image of a log-polar point under an exponential sum, from the leading
/// term and a bound on the rest.
fn polar_image(sum: &ExponentialSum, point: &PolarPoint, real: bool) -> std::result::Result<(PolarPoint, bool), Lost> {
    let delta = if real { 0.0 } else { point.arg_err.max(ANGLE_RESOLUTION) };
    let (cl, ch) = cos_bounds(point.arg, delta).ok_or(Lost)?;
    let re_lo = point.lo.mul(cl.max(f64::MIN_POSITIVE));
    let re_hi = point.hi.mul(ch);
    let right = point.arg.cos() > 0.0;
    let k_star = if right { sum.top() } else { sum.bottom };
    let x_lo = re_lo.to_f64().unwrap_or(f64::INFINITY);
    let eps = if x_lo > 745.0 { 0.0 } else { sum.tail_ratio(k_star, x_lo) };
    if !(eps < 0.5) {
        return Err(Lost);
    }
    let lead = sum.coeff(k_star);
    let k = f64::from(k_star.abs());
    let log_lo = re_lo.mul(k).add(lead.norm().ln() + (-eps).ln_1p());
    let log_hi = re_hi.mul(k).add(lead.norm().ln() + eps.ln_1p());
    let (arg, arg_err) = if real && lead.im == 0.0 {
        (if lead.re > 0.0 { 0.0 } else { PI }, 0.0)
    } else {
        (0.0, f64::INFINITY)
    };
    let real = real && arg_err == 0.0;
    Ok((PolarPoint { lo: log_lo.exp(), hi: log_hi.exp(), arg, arg_err }, real))
}

enum Check {
    Pass(f64),
    Fail,
    Undecided,
}

fn decide(lo: Magnitude, hi: Magnitude, threshold: Magnitude) -> Check {
    if lo.compare(threshold) != Ordering::Less {
        Check::Pass(lo.log_slack(threshold).max(0.0))
    } else if hi.compare(threshold) == Ordering::Less {
        Check::Fail
    } else {
        Check::Undecided
    }
}

/// Orbit stepping and level checks in scalar type `T`.
struct Engine<T: Real> {
    sum: ExponentialSum,
    coeffs: Vec<(T, T)>,
    real_coeffs: bool,
    max_exponent: f64,
    derivative_abs: Vec<f64>,
}

fn cmul<T: Real>(a: &(T, T), b: &(T, T)) -> (T, T) {
    (a.0.mul(&b.0).sub(&a.1.mul(&b.1)), a.0.mul(&b.1).add(&a.1.mul(&b.0)))
}

fn cadd<T: Real>(a: &(T, T), b: &(T, T)) -> (T, T) {
    (a.0.add(&b.0), a.1.add(&b.1))
}

impl<T: Real> Engine<T> {
    fn new(p: &Polynomial) -> Self {
        let sum = ExponentialSum::of_map(p);
        let coeffs = sum.coeffs.iter().map(|c| (T::from_f64(c.re), T::from_f64(c.im))).collect();
        let derivative_abs = sum.derivative().coeffs.iter().map(|c| c.norm()).collect();
        Self {
            max_exponent: f64::from(sum.top().max(1)),
            sum,
            coeffs,
            real_coeffs: p.has_real_coeffs(),
            derivative_abs,
        }
    }

    fn start(&self, z0: Complex64) -> State<T> {
        State::Exact {
            re: T::from_f64(z0.re),
            im: T::from_f64(z0.im),
            err: 0.0,
            real: self.real_coeffs && z0.im == 0.0,
        }
    }

    /// `e^{kz}` for reduced `y`.
    fn exp_turn(x: &T, yr: &T, k: f64) -> ((T, T), f64) {
        let (turn, red) = yr.mul_f64(k).rem_two_pi();
        let (s, c) = turn.sin_cos();
        let m = x.mul_f64(k).exp();
        ((m.mul(&c), m.mul(&s)), red)
    }

    fn step(&self, state: &State<T>) -> std::result::Result<State<T>, Lost> {
        match state {
            State::Exact { re, im, err, real } => self.step_exact(re, im, *err, *real),
            State::Polar { point, real } => {
                let (point, real) = polar_image(&self.sum, point, *real)?;
                Ok(State::Polar { point, real })
            }
        }
    }

    fn step_exact(&self, re: &T, im: &T, err: f64, real: bool) -> std::result::Result<State<T>, Lost> {
        let x = re.to_f64();
        if !x.is_finite() || !err.is_finite() {
            return Err(Lost);
        }
        let (yr, red_err) = im.rem_two_pi();
        let yr_f = yr.to_f64();
        let (s, k_star) = self.sum.scaled(Complex64::new(x, yr_f));
        let k = f64::from(k_star);
        let log_mod = s.norm().ln() + k * x;
        let n_terms = self.coeffs.len() as f64;
        let eps = f64::EPSILON;
        if !(log_mod <= SWITCH_THRESHOLD) {
            if !log_mod.is_finite() {
                return Err(Lost);
            }
            let input_err = err + red_err;
            let (arg, arg_err) = if real {
                (if s.re >= 0.0 { 0.0 } else { PI }, 0.0)
            } else {
                let (turn, red2) = im.mul_f64(k).rem_two_pi();
                let turn_f = turn.to_f64();
                let arg_err = k.abs() * err
                    + red2
                    + (k * im.to_f64()).abs() * T::unit_roundoff()
                    + n_terms * input_err
                    + 16.0 * n_terms * eps
                    + turn_f.abs() * eps;
                (wrap_angle(s.arg() + turn_f), arg_err)
            };
            let log_err = k.abs() * (err + x.abs() * eps) + 16.0 * n_terms * eps + log_mod.abs() * eps;
            let point = PolarPoint {
                lo: Magnitude::from_log(log_mod - log_err),
                hi: Magnitude::from_log(log_mod + log_err),
                arg,
                arg_err,
            };
            return Ok(State::Polar { point, real });
        }

        // Exact evaluation in T: S = sum c_k e^{(k-k*)z}, value = S e^{k* z}.
        let ((sum_re, sum_im), red2) = if k_star == self.sum.top() {
            let ((qr, qi), red_q) = Self::exp_turn(re, &yr, -1.0);
            let q = (qr, qi);
            let mut acc = (T::from_f64(0.0), T::from_f64(0.0));
            for c in &self.coeffs {
                acc = cadd(&cmul(&acc, &q), c);
            }
            let (scale, red_s) = Self::exp_turn(re, &yr, k);
            (cmul(&acc, &scale), red_q + red_s)
        } else {
            let (w, red_w) = Self::exp_turn(re, &yr, 1.0);
            let mut acc = (T::from_f64(0.0), T::from_f64(0.0));
            for c in self.coeffs.iter().rev() {
                acc = cadd(&cmul(&acc, &w), c);
            }
            let (scale, red_s) = Self::exp_turn(re, &yr, -1.0);
            (cmul(&acc, &scale), red_w + red_s)
        };
        let abs_bound = self.sum.scaled_abs_sum(x) * (k * x).exp();
        let ball = err + red_err;
        let derivative_bound: f64 = self
            .derivative_abs
            .iter()
            .enumerate()
            .map(|(i, d)| d * (f64::from(self.sum.bottom + i as i32) * x).exp())
            .sum::<f64>()
            * (self.max_exponent * ball).exp();
        let new_err = derivative_bound * ball
            + abs_bound * ((8.0 * n_terms + 40.0) * T::unit_roundoff() + red2 + (k * yr_f).abs() * T::unit_roundoff());
        if !new_err.is_finite() {
            return Err(Lost);
        }
        let out_real = real && self.real_coeffs;
        Ok(State::Exact {
            re: sum_re,
            im: if out_real { T::from_f64(0.0) } else { sum_im },
            err: new_err,
            real: out_real,
        })
    }

    fn check(&self, state: &State<T>, threshold: Magnitude) -> Check {
        match state {
            State::Exact { re, err, .. } => {
                let x = re.to_f64().abs();
                let slack = err + 2.0 * x * f64::EPSILON;
                decide(Magnitude::new((x - slack).max(0.0)), Magnitude::new(x + slack), threshold)
            }
            State::Polar { point, real } => {
                if *real {
                    return decide(point.lo, point.hi, threshold);
                }
                let bounds = (point.arg_err <= ARG_TRUST_LIMIT)
                    .then(|| cos_bounds(point.arg, point.arg_err.max(ANGLE_RESOLUTION)))
                    .flatten();
                match bounds {
                    Some((cl, ch)) => decide(point.lo.mul(cl), point.hi.mul(ch), threshold),
                    None if point.hi.compare(threshold) == Ordering::Less => Check::Fail,
                    None => Check::Undecided,
                }
            }
        }
    }

    fn classify_from(&self, mut state: State<T>, depth: usize, tower: &ThresholdTower) -> OrbitVerdict {
        let mut margins = Vec::with_capacity(depth + 1);
        let mut threshold = Magnitude::new(tower.x0());
        for j in 0..=depth {
            match self.check(&state, threshold) {
                Check::Pass(m) => margins.push(m),
                Check::Fail => return OrbitVerdict { status: VerdictStatus::FailedAtDepth(j), margins },
                Check::Undecided => {
                    return OrbitVerdict { status: VerdictStatus::IndeterminateAngle(j), margins }
                }
            }
            if j == depth {
                break;
            }
            state = match self.step(&state) {
                Ok(s) => s,
                Err(Lost) => {
                    return OrbitVerdict { status: VerdictStatus::IndeterminateAngle(j + 1), margins }
                }
            };
            threshold = threshold.mul(0.5).exp().mul(2.0);
        }
        OrbitVerdict { status: VerdictStatus::CertifiedToDepth(depth), margins }
    }

    fn escape(&self, z0: Complex64, depth: usize, tower: &ThresholdTower, max_iter: usize) -> EscapeOutcome {
        let mut state = self.start(z0);
        for m in 0..=max_iter {
            let reached = match &state {
                State::Exact { re, err, .. } => {
                    if *err > LOST_PRECISION {
                        return EscapeOutcome::Indeterminate { iterations: m };
                    }
                    re.to_f64().abs() + err >= tower.x0()
                }
                State::Polar { .. } => true,
            };
            if reached {
                let verdict = self.classify_from(state.clone(), depth, tower);
                match verdict.status {
                    VerdictStatus::CertifiedToDepth(_) => return EscapeOutcome::Certified { iterations: m },
                    VerdictStatus::IndeterminateAngle(_) => return EscapeOutcome::Indeterminate { iterations: m },
                    VerdictStatus::FailedAtDepth(_) => {}
                }
            }
            if m == max_iter {
                break;
            }
            state = match self.step(&state) {
                Ok(s) => s,
                Err(Lost) => return EscapeOutcome::Indeterminate { iterations: m + 1 },
            };
        }
        EscapeOutcome::Undecided
    }
}

/// Absolute orbit error beyond which pre-iteration gives up.
const LOST_PRECISION: f64 = 1e-2;

/// Result of iterating a point until it can be certified.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EscapeOutcome {
    /// `f^m(z0)` is certified to the requested depth.
    Certified { iterations: usize },
    /// Precision or the argument was lost at iterate `m`.
    Indeterminate { iterations: usize },
    /// Never certified within the iteration budget.
    Undecided,
}

enum AnyEngine {
    Double(Engine<f64>),
    Extended(Engine<DoubleDouble>),
    Arbitrary(Engine<BigReal>, usize),
}

/// Reusable classifier for one polynomial, tower and precision.
pub struct Classifier {
    engine: AnyEngine,
    tower: ThresholdTower,
}

impl Classifier {
    pub fn new(p: &Polynomial, tower: ThresholdTower, precision: Precision) -> Self {
        let engine = match precision {
            Precision::Double => AnyEngine::Double(Engine::new(p)),
            Precision::Extended => AnyEngine::Extended(Engine::new(p)),
            Precision::Arbitrary { bits } => {
                let _guard = PrecisionGuard::new(bits);
                AnyEngine::Arbitrary(Engine::new(p), bits)
            }
        };
        Self { engine, tower }
    }

    pub fn tower(&self) -> &ThresholdTower {
        &self.tower
    }

    pub fn classify(&self, z0: Complex64, depth: usize) -> OrbitVerdict {
        match &self.engine {
            AnyEngine::Double(e) => e.classify_from(e.start(z0), depth, &self.tower),
            AnyEngine::Extended(e) => e.classify_from(e.start(z0), depth, &self.tower),
            AnyEngine::Arbitrary(e, bits) => {
                let _guard = PrecisionGuard::new(*bits);
                e.classify_from(e.start(z0), depth, &self.tower)
            }
        }
    }

    /// Iterates `z0` until some iterate is certified to `depth`.
    pub fn escape(&self, z0: Complex64, depth: usize, max_iter: usize) -> EscapeOutcome {
        match &self.engine {
            AnyEngine::Double(e) => e.escape(z0, depth, &self.tower, max_iter),
            AnyEngine::Extended(e) => e.escape(z0, depth, &self.tower, max_iter),
            AnyEngine::Arbitrary(e, bits) => {
                let _guard = PrecisionGuard::new(*bits);
                e.escape(z0, depth, &self.tower, max_iter)
            }
        }
    }
}

/// Depth-`depth` certification of `z0` in double-double precision.
pub fn classify_orbit(p: &Polynomial, z0: Complex64, depth: usize, tower: &ThresholdTower) -> OrbitVerdict {
    classify_orbit_with(p, z0, depth, tower, Precision::Extended)
}

pub fn classify_orbit_with(
    p: &Polynomial,
    z0: Complex64,
    depth: usize,
    tower: &ThresholdTower,
    precision: Precision,
) -> OrbitVerdict {
    Classifier::new(p, *tower, precision).classify(z0, depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sine() -> Polynomial {
        Polynomial::sine_family(c(1.0, 0.0), c(0.0, 0.0)).unwrap()
    }

    fn exact(z: Complex64) -> ExtendedComplex {
        ExtendedComplex::Exact(z)
    }

    fn unwrap_exact(z: ExtendedComplex) -> Complex64 {
        match z {
            ExtendedComplex::Exact(z) => z,
            other => panic!("expected exact value, got {other:?}"),
        }
    }

    const X_STAR: f64 = 25.26405222200408;

    #[test]
    fn sinh_values() {
        let p = sine();
        assert_eq!(unwrap_exact(eval_f(&p, &exact(c(0.0, 0.0))).unwrap()), c(0.0, 0.0));
        let v = unwrap_exact(eval_f(&p, &exact(c(0.0, PI / 2.0))).unwrap());
        assert!((v - c(0.0, 1.0)).norm() < 1e-15);
        let big = unwrap_exact(eval_f(&p, &exact(c(50.0, 0.0))).unwrap());
        assert_relative_eq!(big.re, 2.592352764293536e21, max_relative = 1e-14);
    }

    #[test]
    fn asymptotic_form_at_fifty() {
        match eval_f_asymptotic(&sine(), c(50.0, 0.0)) {
            ExtendedComplex::LogMag { log_modulus, argument, arg_trusted } => {
                assert!((log_modulus - (50.0 - 2f64.ln())).abs() <= (-50.0f64).exp());
                assert_eq!(argument, 0.0);
                assert!(arg_trusted);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn switches_to_log_form_above_threshold() {
        let p = sine();
        match eval_f(&p, &exact(c(400.0, 0.5))).unwrap() {
            ExtendedComplex::LogMag { log_modulus, argument, arg_trusted } => {
                assert_relative_eq!(log_modulus, 400.0 - 2f64.ln(), max_relative = 1e-15);
                assert_relative_eq!(argument, 0.5, max_relative = 1e-14);
                assert!(arg_trusted);
            }
            other => panic!("{other:?}"),
        }
        let left = eval_f(&p, &exact(c(-400.0, 0.5))).unwrap();
        assert_relative_eq!(left.log_modulus(), 400.0 - 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(left.argument(), PI - 0.5, max_relative = 1e-14);
    }

    #[test]
    fn log_mag_input_on_real_axis_stays_trusted() {
        let p = sine();
        let z = ExtendedComplex::LogMag { log_modulus: 400.0, argument: 0.0, arg_trusted: true };
        match eval_f(&p, &z).unwrap() {
            ExtendedComplex::LogMag { log_modulus, argument, arg_trusted } => {
                assert_relative_eq!(log_modulus, 400f64.exp(), max_relative = 1e-12);
                assert_eq!(argument, 0.0);
                assert!(arg_trusted);
            }
            other => panic!("{other:?}"),
        }
        let z = ExtendedComplex::LogMag { log_modulus: 800.0, argument: 0.0, arg_trusted: true };
        assert_eq!(eval_f(&p, &z), Err(Error::RegimeOverflow));
        let z = ExtendedComplex::LogMag { log_modulus: 400.0, argument: 1.0, arg_trusted: true };
        match eval_f(&p, &z).unwrap() {
            ExtendedComplex::LogMag { arg_trusted, .. } => assert!(!arg_trusted),
            other => panic!("{other:?}"),
        }
        let z = ExtendedComplex::LogMag { log_modulus: 5.0, argument: 0.0, arg_trusted: true };
        let v = unwrap_exact(eval_f(&p, &z).unwrap());
        assert_relative_eq!(v.re, (5.0f64).exp().sinh(), max_relative = 1e-12);
    }

    #[test]
    fn derivative_values() {
        let p = sine();
        let d0 = unwrap_exact(eval_f_prime(&p, &exact(c(0.0, 0.0))).unwrap());
        assert!((d0 - c(1.0, 0.0)).norm() < 1e-15);
        let d2 = unwrap_exact(eval_f_prime(&p, &exact(c(2.0, 0.0))).unwrap());
        assert_relative_eq!(d2.re, 3.762195691083631, max_relative = 1e-14);
        assert_eq!(log_derivative_ratio(&p, c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        let ratio = log_derivative_ratio(&p, c(1.0, 0.0)).unwrap();
        assert_relative_eq!(ratio.re, 0.7615941559557649, max_relative = 1e-14);
        // cosh vanishes at i pi/2.
        assert!(log_derivative_ratio(&p, c(0.0, PI / 2.0)).is_err());
    }

    #[test]
    fn classify_examples() {
        let p = sine();
        let tower = ThresholdTower::new(X_STAR).unwrap();
        for depth in [0, 1, 3] {
            assert_eq!(classify_orbit(&p, c(0.0, 0.0), depth, &tower).status, VerdictStatus::FailedAtDepth(0));
        }
        let v = classify_orbit(&p, c(X_STAR + 1.0, 0.0), 2, &tower);
        assert_eq!(v.status, VerdictStatus::CertifiedToDepth(2));
        assert_eq!(v.margins.len(), 3);
        assert!(v.margins.iter().all(|&m| m >= 0.0));
        // Real orbits stay certified at any depth.
        let v = classify_orbit(&p, c(X_STAR + 1.0, 0.0), 6, &tower);
        assert_eq!(v.status, VerdictStatus::CertifiedToDepth(6));
        // i pi/2 has real part 0 < x0, so it fails before any step.
        let v = classify_orbit(&p, c(0.0, PI / 2.0), 1, &tower);
        assert_eq!(v.status, VerdictStatus::FailedAtDepth(0));
    }

    #[test]
    fn precision_determines_reach() {
        let p = sine();
        let tower = ThresholdTower::new(X_STAR).unwrap();
        let z0 = c(38.0, 1.0);
        let double = classify_orbit_with(&p, z0, 2, &tower, Precision::Double);
        assert_eq!(double.status, VerdictStatus::IndeterminateAngle(2));
        let extended = classify_orbit_with(&p, z0, 2, &tower, Precision::Extended);
        assert_eq!(extended.status, VerdictStatus::CertifiedToDepth(2));
        let big = classify_orbit_with(&p, z0, 2, &tower, Precision::Arbitrary { bits: 256 });
        assert_eq!(big.status, VerdictStatus::CertifiedToDepth(2));
        assert_relative_eq!(extended.margins[2], big.margins[2], max_relative = 1e-9);
        // Depth 3 needs Im z_2 modulo 2 pi, i.e. about |z_1| bits.
        let deep = classify_orbit_with(&p, z0, 3, &tower, Precision::Arbitrary { bits: 256 });
        assert_eq!(deep.status, VerdictStatus::IndeterminateAngle(3));
    }

    #[test]
    fn arbitrary_precision_reaches_beyond_double_double() {
        // |Im z_1| ~ e^80 needs more than 106 bits for the argument of z_2.
        let p = sine();
        let tower = ThresholdTower::new(X_STAR).unwrap();
        let z0 = c(80.0, 0.7);
        assert_eq!(
            classify_orbit_with(&p, z0, 2, &tower, Precision::Extended).status,
            VerdictStatus::IndeterminateAngle(2)
        );
        assert_eq!(
            classify_orbit_with(&p, z0, 2, &tower, Precision::Arbitrary { bits: 512 }).status,
            VerdictStatus::CertifiedToDepth(2)
        );
    }

    #[test]
    fn escape_outcomes() {
        let p = sine();
        let tower = ThresholdTower::new(6.0 * 2f64.ln()).unwrap();
        let classifier = Classifier::new(&p, tower, Precision::Extended);
        assert_eq!(classifier.escape(c(0.0, 0.0), 2, 30), EscapeOutcome::Undecided);
        assert_eq!(classifier.escape(c(30.0, 0.0), 2, 30), EscapeOutcome::Certified { iterations: 0 });
        assert_eq!(classifier.escape(c(2.0, 0.0), 2, 30), EscapeOutcome::Certified { iterations: 2 });
    }

    proptest! {
        #[test]
        fn regime_consistency(x in 20.0f64..300.0, y in -10.0f64..10.0, sign in prop::bool::ANY) {
            let p = Polynomial::new(vec![c(-0.5, 0.2), c(0.3, -1.0), c(0.5, 0.0), c(0.1, 0.1)]).unwrap();
            let z = c(if sign { x } else { -x }, y);
            let direct = ExponentialSum::of_map(&p).eval(z).unwrap();
            let log_form = eval_f_asymptotic(&p, z);
            let rebuilt = Complex64::from_polar(log_form.log_modulus().exp(), log_form.argument());
            prop_assert!((rebuilt - direct).norm() <= 1e-8 * direct.norm());
        }

        #[test]
        fn periodicity(x in -30.0f64..30.0, y in -6.0f64..6.0) {
            let p = Polynomial::new(vec![c(1.0, 0.5), c(0.0, 2.0), c(-0.5, 0.0)]).unwrap();
            let a = unwrap_exact(eval_f(&p, &exact(c(x, y))).unwrap());
            let b = unwrap_exact(eval_f(&p, &exact(c(x, y + TAU))).unwrap());
            prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1e-300) + 1e-300);
        }

        #[test]
        fn certification_is_monotone_in_depth(x in 25.3f64..60.0, y in 0.0f64..TAU) {
            let p = sine();
            let tower = ThresholdTower::new(X_STAR).unwrap();
            let deep = classify_orbit(&p, c(x, y), 3, &tower);
            for d in 0..3 {
                let shallow = classify_orbit(&p, c(x, y), d, &tower);
                if let VerdictStatus::CertifiedToDepth(_) = deep.status {
                    prop_assert_eq!(shallow.status, VerdictStatus::CertifiedToDepth(d));
                }
                if shallow.is_certified() {
                    prop_assert_eq!(&shallow.margins[..], &deep.margins[..=d]);
                }
            }
        }

        #[test]
        fn derivative_bounds_in_far_half_planes(x in 2.49f64..40.0, y in -PI..PI, sign in prop::bool::ANY) {
            let p = sine();
            let z = c(if sign { x } else { -x }, y);
            prop_assert!(log_abs_derivative(&p, z).unwrap() > 2f64.ln());
            prop_assert!(log_derivative_ratio(&p, z).unwrap().norm() < 2.0);
        }
    }
}
