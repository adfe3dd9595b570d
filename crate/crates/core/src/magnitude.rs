//! Overflow-free positive magnitudes stored as iterated logarithms, and the
//! threshold tower `x_{k+1} = 2 exp(x_k / 2)` compared one log at a time.

use std::cmp::Ordering;
use std::f64::consts::LN_2;

use serde::Serialize;

use crate::{Error, Result};

/// Largest `value` kept at a given level before promoting; `exp(709)` is finite.
const EXP_LIMIT: f64 = 709.0;

/// Relative tolerance under which two magnitudes compare equal.
pub const COMPARE_TOL: f64 = 1e-12;

/// The number `exp^level(value)`.
///
/// Normalised so that `level > 0` implies `value > 709`, i.e. the number is
/// not representable one level down. Multiplying or adding a moderate
/// constant is exact at levels 0 and 1 and below `f64` resolution at level 2
/// and above.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Magnitude {
    pub level: u32,
    pub value: f64,
}

impl Magnitude {
    pub const fn new(value: f64) -> Self {
        Self { level: 0, value }
    }

    /// `exp(log_value)`.
    pub fn from_log(log_value: f64) -> Self {
        Self { level: 1, value: log_value }.normalized()
    }

    pub fn normalized(mut self) -> Self {
        while self.level > 0 && self.value <= EXP_LIMIT {
            self.value = self.value.exp();
            self.level -= 1;
        }
        if self.level == 0 && self.value.is_infinite() && self.value > 0.0 {
            // Only reachable from overflowing arithmetic at level 0.
            return Self { level: 0, value: f64::INFINITY };
        }
        self
    }

    /// Finite `f64` value, if the number is representable.
    pub fn to_f64(self) -> Option<f64> {
        (self.level == 0).then_some(self.value)
    }

    pub fn is_finite(self) -> bool {
        self.value.is_finite()
    }

    pub fn exp(self) -> Self {
        Self { level: self.level + 1, value: self.value }.normalized()
    }

    /// Natural logarithm; `-inf` for non-positive level-0 values.
    pub fn ln(self) -> Self {
        if self.level > 0 {
            Self { level: self.level - 1, value: self.value }
        } else if self.value > 0.0 {
            Self::new(self.value.ln())
        } else {
            Self::new(f64::NEG_INFINITY)
        }
    }

    /// `self * c` for `c > 0`.
    pub fn mul(self, c: f64) -> Self {
        debug_assert!(c > 0.0);
        match self.level {
            0 => {
                let p = self.value * c;
                if p.is_finite() {
                    Self::new(p)
                } else {
                    Self::from_log(self.value.ln() + c.ln())
                }
            }
            1 => Self { level: 1, value: self.value + c.ln() }.normalized(),
            _ => self,
        }
    }

    /// `self + c` for a moderate constant `c`.
    pub fn add(self, c: f64) -> Self {
        match self.level {
            0 => Self::new(self.value + c),
            // c e^{-value} < 1e-300 once normalised.
            _ => self,
        }
    }

    /// Value at a level at least the current one, taking logs as needed.
    /// Non-positive intermediate values map to `-inf`.
    pub fn value_at_level(self, level: u32) -> f64 {
        let mut v = self.value;
        for _ in self.level..level {
            v = if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
        }
        v
    }

    /// Comparison with relative tolerance [`COMPARE_TOL`] at the common level.
    pub fn compare(self, other: Self) -> Ordering {
        let level = self.level.max(other.level);
        let a = self.value_at_level(level);
        let b = other.value_at_level(level);
        if a == b || (a - b).abs() <= COMPARE_TOL * a.abs().max(b.abs()) {
            Ordering::Equal
        } else if a > b {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }

    /// `log(self) - log(other)` at the deepest level where both are finite,
    /// i.e. a plain log difference unless either number needs iterated logs.
    pub fn log_slack(self, other: Self) -> f64 {
        let level = self.level.max(other.level).max(1);
        self.value_at_level(level) - other.value_at_level(level)
    }

    pub fn max(self, other: Self) -> Self {
        if self.compare(other) == Ordering::Less {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if self.compare(other) == Ordering::Greater {
            other
        } else {
            self
        }
    }
}

/// The sequence `x_0 = x0`, `x_{k+1} = 2 exp(x_k / 2)`, never materialised
/// beyond what a [`Magnitude`] can hold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdTower {
    x0: f64,
}

impl ThresholdTower {
    pub fn new(x0: f64) -> Result<Self> {
        if !(x0 >= 6.0 * LN_2 * (1.0 - 1e-15)) || !x0.is_finite() {
            return Err(Error::InvalidParameter {
                name: "x0",
                value: x0,
                range: format!(">= 6 log 2 = {}", 6.0 * LN_2),
            });
        }
        Ok(Self { x0 })
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// `x_k`.
    pub fn threshold(&self, k: usize) -> Magnitude {
        let mut x = Magnitude::new(self.x0);
        for _ in 0..k {
            x = x.mul(0.5).exp().mul(2.0);
        }
        x
    }

    /// `x_k` as an `f64` when it fits.
    pub fn materialize(&self, k: usize) -> Option<f64> {
        self.threshold(k).to_f64().filter(|x| x.is_finite())
    }

    /// `log x_k`, via `log x_{k+1} = log 2 + x_k / 2`.
    pub fn log_threshold(&self, k: usize) -> Magnitude {
        if k == 0 {
            return Magnitude::new(self.x0.ln());
        }
        self.threshold(k - 1).mul(0.5).add(LN_2)
    }
}

/// Orders `value` against `x_k`.
pub fn threshold_compare(value: Magnitude, tower: &ThresholdTower, k: usize) -> Ordering {
    value.compare(tower.threshold(k))
}

/// The sequences `u_n = R e^{R u_{n-1}}` (`u_0 = R`) and `v_n = e^{v_{n-1}}`
/// with the shift `l` making `v_{n+l} >= 2 R u_n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftSequences {
    pub u: Vec<Magnitude>,
    pub v: Vec<Magnitude>,
    pub shift: usize,
    /// `v_{n+shift} >= 2 R u_n` held for every `n <= n_max`.
    pub verified: bool,
}

const MAX_SHIFT: usize = 1_000_000;

pub fn max_modulus_sequences(radius: f64, v0: f64, n_max: usize) -> Result<ShiftSequences> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter {
            name: "R",
            value: radius,
            range: "R > 0".into(),
        });
    }
    if !v0.is_finite() {
        return Err(Error::ShiftNotFound);
    }
    let target = Magnitude::new(2.0 * radius * radius);
    let mut v = vec![Magnitude::new(v0)];
    while v.last().unwrap().compare(target) == Ordering::Less {
        if v.len() > MAX_SHIFT {
            return Err(Error::ShiftNotFound);
        }
        let next = v.last().unwrap().exp();
        v.push(next);
    }
    let shift = v.len() - 1;
    let mut u = vec![Magnitude::new(radius)];
    for _ in 0..n_max {
        let next = u.last().unwrap().mul(radius).exp().mul(radius);
        u.push(next);
    }
    while v.len() < shift + n_max + 1 {
        let next = v.last().unwrap().exp();
        v.push(next);
    }
    let verified = (0..=n_max).all(|n| v[n + shift].compare(u[n].mul(2.0 * radius)) != Ordering::Less);
    Ok(ShiftSequences { u, v, shift, verified })
}
