//! The generating polynomial `P` of `f(z) = P(e^z)/e^z` and every constant
//! derived from its coefficients: coefficient bounds, the radii where the
//! asymptotic forms of `P` take over, the distortion constant `c0`, the
//! certification base `x*`, the nesting densities `rho_k`, and the closed-form
//! bound on the area of the non fast-escaping set in a period strip.

use std::f64::consts::{LN_2, PI, SQRT_2};

use num_complex::Complex64;
use serde::Serialize;

use crate::{Error, Result};

/// `P(w) = a_0 + a_1 w + ... + a_N w^N` with `N >= 2` and `a_0 a_N != 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<Complex64>,
}

impl Polynomial {
    /// Coefficients in ascending order, `a_0` first.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() < 3 {
            return Err(Error::InvalidPolynomial(format!(
                "degree must be at least 2, got {}",
                coeffs.len().saturating_sub(1)
            )));
        }
        if coeffs.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidPolynomial("coefficients must be finite".into()));
        }
        if coeffs[0] == Complex64::new(0.0, 0.0) {
            return Err(Error::InvalidPolynomial("constant term a_0 must be nonzero".into()));
        }
        if coeffs[coeffs.len() - 1] == Complex64::new(0.0, 0.0) {
            return Err(Error::InvalidPolynomial("leading coefficient a_N must be nonzero".into()));
        }
        Ok(Self { coeffs })
    }

    /// `P(w) = (alpha/2) w^2 + i beta w - alpha/2`, the polynomial for which
    /// `f` is conjugate to `alpha sin(z + beta)`.
    pub fn sine_family(alpha: Complex64, beta: Complex64) -> Result<Self> {
        if alpha == Complex64::new(0.0, 0.0) {
            return Err(Error::InvalidParameter {
                name: "alpha",
                value: 0.0,
                range: "alpha != 0".into(),
            });
        }
        Self::new(vec![-alpha / 2.0, Complex64::i() * beta, alpha / 2.0])
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> Complex64 {
        self.coeffs[self.degree()]
    }

    pub fn constant(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn has_real_coeffs(&self) -> bool {
        self.coeffs.iter().all(|a| a.im == 0.0)
    }

    /// Horner evaluation.
    pub fn eval(&self, w: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * w + a)
    }

    pub fn eval_derivative(&self, w: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (k, &a)| acc * w + a * k as f64)
    }

    pub fn eval_second_derivative(&self, w: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (k, &a)| acc * w + a * (k * (k - 1)) as f64)
    }

    /// `sin(z+beta)` parameter recovered from the linear coefficient,
    /// meaningful for [`Polynomial::sine_family`] polynomials.
    pub fn sine_beta(&self) -> Complex64 {
        if self.degree() >= 1 {
            -Complex64::i() * self.coeffs[1]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }
}

/// `(K, K0)` with `K = max |a_i|` and `K0 = min(|a_0|, |a_N|)`.
pub fn coefficient_bounds(p: &Polynomial) -> (f64, f64) {
    let k = p.coeffs().iter().map(|a| a.norm()).fold(0.0, f64::max);
    let k0 = p.constant().norm().min(p.leading().norm());
    (k, k0)
}

/// Radii from the univalence, conformality and derivative lemmas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Radii {
    pub r0: f64,
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "R3")]
    pub r3: f64,
    #[serde(rename = "R4")]
    pub r4: f64,
    #[serde(rename = "R5")]
    pub r5: f64,
    #[serde(rename = "R6")]
    pub r6: f64,
}

/// Minimal admissible radii (the lemmas state inequalities; equality is taken).
pub fn radii(p: &Polynomial) -> Radii {
    let (k, k0) = coefficient_bounds(p);
    let n = p.degree() as f64;
    let an = p.leading().norm();
    let a0 = p.constant().norm();
    let r4 = 1.0 + f64::max((2.0 * k + 4.0) / an, k / an * (2.0 * n * n / (n - 1.0) + 1.0));
    let r5 = f64::min(a0 / (2.0 * (k * n + 2.0)), (a0 / k).sqrt() / (2.0 * n));
    Radii {
        r0: PI / (n - 1.0),
        r1: 1.0 + 4.0 * k / an,
        r2: a0 / (4.0 * k + a0),
        r3: (2.0 + 8.0 * k / k0).ln(),
        r4,
        r5,
        r6: f64::max(r4.ln(), -r5.ln()),
    }
}

/// Largest admissible grid side, `1/(4N)`.
pub fn max_grid_side(p: &Polynomial) -> f64 {
    1.0 / (4.0 * p.degree() as f64)
}

/// `min(1/8, 1/(4N))`.
pub fn default_grid_side(p: &Polynomial) -> f64 {
    f64::min(0.125, max_grid_side(p))
}

fn check_grid_side(p: &Polynomial, r: f64) -> Result<()> {
    let max = max_grid_side(p);
    if !(r > 0.0 && r <= max * (1.0 + 1e-15)) {
        return Err(Error::InvalidParameter {
            name: "r",
            value: r,
            range: format!("0 < r <= 1/(4N) = {max}"),
        });
    }
    Ok(())
}

/// `c0 = 32 sqrt2/(K0 r) + 1/(4 K0^2) + 12 sqrt2/K0`.
pub fn distortion_constant_c0(p: &Polynomial, r: f64) -> Result<f64> {
    check_grid_side(p, r)?;
    let (_, k0) = coefficient_bounds(p);
    Ok(32.0 * SQRT_2 / (k0 * r) + 1.0 / (4.0 * k0 * k0) + 12.0 * SQRT_2 / k0)
}

/// `max{R3, R6, 6 log 2, 12 + 2 log c1}`.
pub fn x_star_from(r3: f64, r6: f64, c1: f64) -> f64 {
    [r3, r6, 6.0 * LN_2, 12.0 + 2.0 * c1.ln()].into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Minimal admissible certification base for the given `c1`.
pub fn x_star(p: &Polynomial, c1: f64) -> f64 {
    let radii = radii(p);
    x_star_from(radii.r3, radii.r6, c1)
}

/// Nesting density `rho_k = 1 - c1 e^4 x_{k+1} / e^{x_k}`, held as
/// `log(1 - rho_k)` so that the doubly exponential decay survives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rho {
    pub log_one_minus: f64,
}

impl Rho {
    /// Saturates at 1 once `1 - rho` drops below machine epsilon.
    pub fn value(self) -> f64 {
        let deficit = self.log_one_minus.exp();
        if deficit < f64::EPSILON {
            1.0
        } else {
            1.0 - deficit
        }
    }

    /// `log rho`, accurate even when `rho` rounds to 1.
    pub fn ln(self) -> f64 {
        (-self.log_one_minus.exp()).ln_1p()
    }
}

/// `rho_k` for the threshold tower started at `x0`.
///
/// Uses `x_{k+1}/e^{x_k} = 2 e^{-x_k/2}`, so `log(1-rho_k) = log(2 c1 e^4) - x_k/2`.
pub fn rho_k(c1: f64, x0: f64, k: usize) -> Result<Rho> {
    if !(x0 >= 6.0 * LN_2) {
        return Err(Error::InvalidParameter {
            name: "x0",
            value: x0,
            range: format!(">= 6 log 2 = {}", 6.0 * LN_2),
        });
    }
    let mut xk = x0;
    for _ in 0..k {
        xk = 2.0 * (xk / 2.0).exp();
    }
    let log_one_minus = (2.0 * c1).ln() + 4.0 - xk / 2.0;
    if log_one_minus >= 0.0 {
        return Err(Error::InvalidParameter {
            name: "x0",
            value: x0,
            range: format!("rho_{k} must be positive; raise x0 towards x*"),
        });
    }
    Ok(Rho { log_one_minus })
}

/// `prod_{j<depth} rho_j`.
pub fn rho_product(c1: f64, x0: f64, depth: usize) -> Result<f64> {
    let mut log_sum = 0.0;
    for j in 0..depth {
        log_sum += rho_k(c1, x0, j)?.ln();
    }
    Ok(log_sum.exp())
}

/// Lower bound `exp(-8 c1 e^4 / e^{x/2})` on the fast-escaping density of a
/// square in `Lambda(x)`.
pub fn density_bound_exp(c1: f64, x: f64) -> f64 {
    (-8.0 * c1 * (4.0 - x / 2.0).exp()).exp()
}

/// `(4 pi + 4 r)(x* + r + 8 c1 e^{4 - x*/2} r / (1 - e^{-r/2}))`.
pub fn area_bound(p: &Polynomial, r: f64, c1: f64, x_star: f64) -> Result<f64> {
    check_grid_side(p, r)?;
    let tail = 8.0 * c1 * (4.0 - x_star / 2.0).exp() * r / -(-r / 2.0).exp_m1();
    Ok((4.0 * PI + 4.0 * r) * (x_star + r + tail))
}

/// Every constant the area estimate depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantSet {
    #[serde(rename = "N")]
    pub degree: usize,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    #[serde(flatten)]
    pub radii: Radii,
    pub r: f64,
    pub c0: f64,
    pub c1: f64,
    #[serde(rename = "xStar")]
    pub x_star: f64,
    #[serde(rename = "areaBound")]
    pub area_bound: f64,
}

impl ConstantSet {
    /// Constants for a general `P`. `c1` defaults to `c0` and `x*` to its
    /// minimal admissible value; overrides are validated against both floors.
    pub fn compute(
        p: &Polynomial,
        r: f64,
        c1: Option<f64>,
        x_star_override: Option<f64>,
    ) -> Result<Self> {
        let (k, k0) = coefficient_bounds(p);
        let radii = radii(p);
        let c0 = distortion_constant_c0(p, r)?;
        let c1 = match c1 {
            Some(c) if !(c >= c0) => {
                return Err(Error::InvalidParameter {
                    name: "c1",
                    value: c,
                    range: format!(">= c0 = {c0}"),
                })
            }
            Some(c) => c,
            None => c0,
        };
        let floor = x_star_from(radii.r3, radii.r6, c1);
        let x_star = match x_star_override {
            Some(x) if !(x >= floor) => {
                return Err(Error::InvalidParameter {
                    name: "xStar",
                    value: x,
                    range: format!(">= {floor}"),
                })
            }
            Some(x) => x,
            None => floor,
        };
        Ok(Self {
            degree: p.degree(),
            k,
            k0,
            radii,
            r,
            c0,
            c1,
            x_star,
            area_bound: area_bound(p, r, c1, x_star)?,
        })
    }

    /// `rho_0, ..., rho_{count-1}` for the tower started at `x0`.
    pub fn rhos(&self, x0: f64, count: usize) -> Result<Vec<f64>> {
        (0..count).map(|k| rho_k(self.c1, x0, k).map(Rho::value)).collect()
    }
}

/// Constants for `alpha sin(z + beta)` with `r = 1/8` and the closed forms
/// for `c1` and `x*` specialised to the quadratic `P`.
pub fn sine_family_constants(alpha: Complex64, beta: Complex64) -> Result<ConstantSet> {
    let p = Polynomial::sine_family(alpha, beta)?;
    let a = alpha.norm();
    let k = f64::max(a / 2.0, beta.norm());
    let r = 0.125;
    let c1 = 536.0 * SQRT_2 / a + 1.0 / (a * a);
    let x_star = [
        (1.0 + 18.0 * k / a).ln(),
        (8.0 * (k + 1.0) / a).ln(),
        6.0 * LN_2,
        12.0 + 2.0 * c1.ln(),
    ]
    .into_iter()
    .fold(f64::NEG_INFINITY, f64::max);
    let (k_poly, k0) = coefficient_bounds(&p);
    Ok(ConstantSet {
        degree: 2,
        k: k_poly,
        k0,
        radii: radii(&p),
        r,
        c0: distortion_constant_c0(&p, r)?,
        c1,
        x_star,
        area_bound: area_bound(&p, r, c1, x_star)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sine() -> Polynomial {
        Polynomial::sine_family(c(1.0, 0.0), c(0.0, 0.0)).unwrap()
    }

    #[test]
    fn horner_values() {
        let p = sine();
        assert_eq!(p.eval(c(1.0, 0.0)), c(0.0, 0.0));
        assert_eq!(p.eval(c(0.0, 0.0)), c(-0.5, 0.0));
        assert_eq!(p.eval(c(0.0, 2.0)), c(-2.5, 0.0));
    }

    #[test]
    fn rejects_degenerate_polynomials() {
        assert!(Polynomial::new(vec![c(1.0, 0.0), c(1.0, 0.0)]).is_err());
        assert!(Polynomial::new(vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]).is_err());
        assert!(Polynomial::new(vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).is_err());
        assert!(Polynomial::sine_family(c(0.0, 0.0), c(1.0, 0.0)).is_err());
    }

    #[test]
    fn coefficient_bounds_examples() {
        assert_eq!(coefficient_bounds(&sine()), (0.5, 0.5));
        let cosine = Polynomial::sine_family(c(1.0, 0.0), c(PI / 2.0, 0.0)).unwrap();
        assert_eq!(coefficient_bounds(&cosine), (PI / 2.0, 0.5));
        let p = Polynomial::new(vec![c(4.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_eq!(coefficient_bounds(&p), (4.0, 1.0));
    }

    #[test]
    fn sine_radii() {
        let radii = radii(&sine());
        assert_relative_eq!(radii.r0, PI);
        assert_relative_eq!(radii.r3, 10f64.ln(), max_relative = 1e-15);
        // R4 = 1 + max(5/0.5, 1 * 9) = 11 and R5 = min(1/12, 1/4).
        assert_relative_eq!(radii.r4, 11.0, max_relative = 1e-15);
        assert_relative_eq!(radii.r5, 1.0 / 12.0, max_relative = 1e-15);
        assert_relative_eq!(radii.r6, 12f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(radii.r1, 5.0);
        assert_relative_eq!(radii.r2, 0.2);
    }

    #[test]
    fn sine_radii_match_quadratic_closed_forms() {
        for (alpha, beta) in [(1.0, 0.0), (2.0, 0.3), (0.7, 1.9), (1.0, PI / 2.0)] {
            let p = Polynomial::sine_family(c(alpha, 0.0), c(beta, 0.0)).unwrap();
            let k = f64::max(alpha / 2.0, beta);
            let radii = radii(&p);
            let r4 = f64::max(1.0 + 4.0 * (k + 2.0) / alpha, 1.0 + 18.0 * k / alpha);
            let r5 = f64::min(alpha / (8.0 * (k + 1.0)), 0.25 * (alpha / (2.0 * k)).sqrt());
            assert_relative_eq!(radii.r4, r4, max_relative = 1e-14);
            assert_relative_eq!(radii.r5, r5, max_relative = 1e-14);
            assert_relative_eq!(radii.r3, (2.0 + 16.0 * k / alpha).ln(), max_relative = 1e-14);
        }
    }

    #[test]
    fn c0_examples() {
        let p = sine();
        assert_relative_eq!(
            distortion_constant_c0(&p, 0.125).unwrap(),
            536.0 * SQRT_2 + 1.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            distortion_constant_c0(&p, 0.0625).unwrap(),
            1048.0 * SQRT_2 + 1.0,
            max_relative = 1e-14
        );
        let unit = Polynomial::new(vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert_relative_eq!(
            distortion_constant_c0(&unit, 0.125).unwrap(),
            256.0 * SQRT_2 + 0.25 + 12.0 * SQRT_2,
            max_relative = 1e-14
        );
        assert!(distortion_constant_c0(&p, 0.0).is_err());
        assert!(distortion_constant_c0(&p, 0.2).is_err());
    }

    #[test]
    fn x_star_branches() {
        let c1 = 536.0 * SQRT_2 + 1.0;
        assert_relative_eq!(x_star(&sine(), c1), 25.264052222004082, max_relative = 1e-14);
        assert_eq!(x_star_from(1.0, 1.0, 1.0), 12.0);
        // 12 + 2 log e^-3 = 6 beats 6 log 2 ~ 4.16.
        assert_relative_eq!(x_star_from(1.0, 1.0, (-3.0f64).exp()), 6.0, max_relative = 1e-14);
        assert_relative_eq!(x_star_from(1.0, 1.0, (-5.0f64).exp()), 6.0 * LN_2);
    }

    #[test]
    fn rho_at_binding_base() {
        let c1 = 536.0 * SQRT_2 + 1.0;
        let x0 = 12.0 + 2.0 * c1.ln();
        let rho0 = rho_k(c1, x0, 0).unwrap();
        assert_relative_eq!(rho0.value(), 1.0 - 2.0 / std::f64::consts::E.powi(2), max_relative = 1e-12);
        for k in 2..10 {
            let rho = rho_k(c1, x0, k).unwrap();
            assert_eq!(rho.value(), 1.0);
            assert!(rho.log_one_minus < -100.0 * std::f64::consts::LN_10);
        }
        assert_relative_eq!(rho_product(c1, x0, 10).unwrap(), 0.7293294335267746, max_relative = 1e-12);
        assert!(rho_k(c1, 4.0, 0).is_err());
    }

    #[test]
    fn area_bounds_for_sine_and_cosine() {
        let sin = sine_family_constants(c(1.0, 0.0), c(0.0, 0.0)).unwrap();
        assert_relative_eq!(sin.c1, 536.0 * SQRT_2 + 1.0, max_relative = 1e-15);
        assert_relative_eq!(sin.area_bound, 360.9296013611581, max_relative = 1e-12);
        assert!(sin.area_bound < 361.0);
        let cos = sine_family_constants(c(1.0, 0.0), c(PI / 2.0, 0.0)).unwrap();
        assert_relative_eq!(cos.k, PI / 2.0);
        assert_eq!(cos.x_star, sin.x_star);
        assert!(cos.area_bound < 361.0);
        let two = sine_family_constants(c(2.0, 0.0), c(0.0, 0.0)).unwrap();
        assert_relative_eq!(two.c1, 268.0 * SQRT_2 + 0.25, max_relative = 1e-15);
    }

    #[test]
    fn sine_constants_agree_with_general_route() {
        let general = ConstantSet::compute(&sine(), 0.125, None, None).unwrap();
        let special = sine_family_constants(c(1.0, 0.0), c(0.0, 0.0)).unwrap();
        assert_relative_eq!(general.c1, special.c1, max_relative = 1e-14);
        assert_relative_eq!(general.x_star, special.x_star, max_relative = 1e-14);
        assert_relative_eq!(general.area_bound, special.area_bound, max_relative = 1e-14);
    }

    #[test]
    fn area_bound_grows_as_grid_shrinks() {
        let p = sine();
        let values: Vec<f64> = [0.125, 0.0625, 0.03125]
            .iter()
            .map(|&r| {
                let c1 = distortion_constant_c0(&p, r).unwrap();
                area_bound(&p, r, c1, x_star(&p, c1)).unwrap()
            })
            .collect();
        assert_relative_eq!(values[1], 369.9528487287546, max_relative = 1e-12);
        assert_relative_eq!(values[2], 383.0248582681855, max_relative = 1e-12);
        assert!(values.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn overrides_are_validated() {
        let p = sine();
        assert!(ConstantSet::compute(&p, 0.125, Some(1.0), None).is_err());
        assert!(ConstantSet::compute(&p, 0.125, None, Some(10.0)).is_err());
        let set = ConstantSet::compute(&p, 0.125, Some(1000.0), Some(40.0)).unwrap();
        assert_eq!(set.x_star, 40.0);
    }
}
