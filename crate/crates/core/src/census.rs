//! Monte Carlo density of certified points in a square, the census of the
//! non-certified area of a period strip, and the explicit first nesting
//! level used as an oracle for the sampled density.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{Classifier, ExponentialSum, Precision, VerdictStatus};
use crate::exec::Execution;
use crate::grid::{GridSquare, Square};
use crate::magnitude::ThresholdTower;
use crate::poly::{density_bound_exp, rho_product, ConstantSet, Polynomial};
use crate::{Error, Result};

/// Samples per independently seeded chunk.
const CHUNK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DensityReport {
    pub square: Square,
    pub depth: usize,
    pub samples: usize,
    pub seed: u64,
    pub certified_fraction: f64,
    pub indeterminate_fraction: f64,
    /// `prod_{j<depth} rho_j` for the tower started at `min |Re|` of the square.
    pub bound_product: f64,
    /// `exp(-8 c1 e^4 e^{-x/2})` at `x = min |Re|`.
    pub bound_exp: f64,
    /// Binomial standard error at the larger bound.
    pub sigma: f64,
    pub pass: bool,
}

impl DensityReport {
    /// `certifiedFraction + indeterminateFraction`.
    pub fn undecided_upper(&self) -> f64 {
        self.certified_fraction + self.indeterminate_fraction
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stream seed for one square, independent of scheduling.
pub fn square_seed(seed: u64, q: &Square) -> u64 {
    [q.re0.to_bits(), q.im0.to_bits(), q.side.to_bits()]
        .into_iter()
        .fold(splitmix(seed), |h, v| splitmix(h ^ v))
}

fn check_admissible(consts: &ConstantSet, q: &Square) -> Result<()> {
    if !q.inside_lambda(consts.x_star) {
        return Err(Error::InadmissibleSquare(q.to_string()));
    }
    Ok(())
}

/// Certified and indeterminate counts over `samples` uniform points.
fn count_verdicts(classifier: &Classifier, q: &Square, depth: usize, samples: usize, seed: u64) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut certified, mut indeterminate) = (0, 0);
    for _ in 0..samples {
        let z = q.point(rng.random(), rng.random());
        match classifier.classify(z, depth).status {
            VerdictStatus::CertifiedToDepth(_) => certified += 1,
            VerdictStatus::IndeterminateAngle(_) => indeterminate += 1,
            VerdictStatus::FailedAtDepth(_) => {}
        }
    }
    (certified, indeterminate)
}

/// Fraction of uniform samples of `q` certified to `depth`, with the tower
/// started at `min |Re|` over `q`, against the nesting bounds.
pub fn sample_square_density(
    p: &Polynomial,
    consts: &ConstantSet,
    q: impl Into<Square>,
    depth: usize,
    samples: usize,
    seed: u64,
    precision: Precision,
    exec: Execution,
) -> Result<DensityReport> {
    let q = q.into();
    check_admissible(consts, &q)?;
    if samples == 0 {
        return Err(Error::InvalidParameter { name: "samples", value: 0.0, range: ">= 1".into() });
    }
    let x = q.min_abs_re();
    let classifier = Classifier::new(p, ThresholdTower::new(x)?, precision);
    let base = square_seed(seed, &q);
    let chunks: Vec<(usize, usize)> =
        (0..samples.div_ceil(CHUNK)).map(|c| (c, CHUNK.min(samples - c * CHUNK))).collect();
    let counts = exec.map(&chunks, |&(c, len)| count_verdicts(&classifier, &q, depth, len, splitmix(base ^ c as u64)));
    let (certified, indeterminate) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    report(consts, q, depth, samples, seed, certified, indeterminate)
}

fn report(
    consts: &ConstantSet,
    q: Square,
    depth: usize,
    samples: usize,
    seed: u64,
    certified: usize,
    indeterminate: usize,
) -> Result<DensityReport> {
    let x = q.min_abs_re();
    let bound_product = rho_product(consts.c1, x, depth)?;
    let bound_exp = density_bound_exp(consts.c1, x);
    let b = bound_product.max(bound_exp);
    let sigma = (b * (1.0 - b) / samples as f64).sqrt();
    let n = samples as f64;
    let (cf, inf) = (certified as f64 / n, indeterminate as f64 / n);
    Ok(DensityReport {
        square: q,
        depth,
        samples,
        seed,
        certified_fraction: cf,
        indeterminate_fraction: inf,
        bound_product,
        bound_exp,
        sigma,
        pass: cf + inf >= b - 3.0 * sigma,
    })
}

/// Parameters of a strip census.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CensusParams {
    /// The strip is `offset <= Im z <= offset + 2 pi`.
    pub offset: f64,
    pub r: f64,
    pub x_max: f64,
    pub depth: usize,
    pub samples: usize,
    pub seed: u64,
    pub precision: Precision,
}

/// One grid square of the census.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SquareRow {
    pub m: i64,
    pub n: i64,
    pub certified_fraction: f64,
    pub indeterminate_fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StripCensus {
    pub strip_im_offset: f64,
    pub r: f64,
    pub x_max: f64,
    pub depth: usize,
    pub samples_per_square: usize,
    pub seed: u64,
    pub squares: usize,
    /// Squares inside `Lambda(x*)`, the only ones sampled.
    pub sampled_squares: usize,
    /// Area of non-certified points with `|Re z| <= xMax`.
    pub truncated_area: f64,
    /// Part of `truncatedArea` coming from indeterminate samples.
    pub indeterminate_area: f64,
    pub tail_bound: f64,
    pub total_upper: f64,
    pub paper_bound: f64,
}

/// `n0 = [2 pi / r] + 1`; the strip uses rows `0..=n0`.
pub fn strip_rows(r: f64) -> i64 {
    (TAU / r).floor() as i64 + 1
}

/// `2 (n0 + 1) r^2 sum_{m >= m1} min(1, 8 c1 e^4 e^{-m r/2})`, closed form.
pub fn tail_bound(c1: f64, r: f64, m1: i64) -> f64 {
    let log_a = (8.0 * c1).ln() + 4.0;
    let q = (-r / 2.0).exp();
    // Terms are clipped to 1 while m <= log_a / (r/2).
    let m_clip = (log_a / (r / 2.0)).floor() as i64;
    let clipped = (m_clip - m1 + 1).max(0) as f64;
    let m2 = m1.max(m_clip + 1);
    let geometric = (log_a - m2 as f64 * r / 2.0).exp() / (1.0 - q);
    2.0 * (strip_rows(r) + 1) as f64 * r * r * (clipped + geometric)
}

/// [`tail_bound`] by direct summation, for cross-checking.
pub fn tail_bound_direct(c1: f64, r: f64, m1: i64) -> f64 {
    let a = 8.0 * c1 * 4f64.exp();
    let mut sum = 0.0;
    let mut m = m1;
    loop {
        let t = f64::min(1.0, a * (-(m as f64) * r / 2.0).exp());
        sum += t;
        if t < 1e-18 * sum {
            break;
        }
        m += 1;
    }
    2.0 * (strip_rows(r) + 1) as f64 * r * r * sum
}

/// Census of the non-certified area of the strip `offset <= Im z <= offset + 2 pi`
/// up to `|Re z| <= xMax`, plus the analytic tail beyond.
///
/// Squares not inside `Lambda(x*)` count as wholly non-certified.
pub fn strip_census(
    p: &Polynomial,
    consts: &ConstantSet,
    params: &CensusParams,
    exec: Execution,
) -> Result<(StripCensus, Vec<SquareRow>)> {
    let r = params.r;
    if !(params.x_max >= consts.x_star) {
        return Err(Error::InvalidParameter {
            name: "xMax",
            value: params.x_max,
            range: format!(">= x* = {}", consts.x_star),
        });
    }
    if params.samples == 0 {
        return Err(Error::InvalidParameter { name: "samples", value: 0.0, range: ">= 1".into() });
    }
    let m_max = (params.x_max / r).ceil() as i64;
    let n_start = (params.offset / r).floor() as i64;
    let n0 = strip_rows(r);
    let cells: Vec<GridSquare> = (-m_max..m_max)
        .flat_map(|m| (n_start..=n_start + n0).map(move |n| GridSquare::new(m, n, r)))
        .collect();
    let rows = exec.map(&cells, |g| -> Result<SquareRow> {
        let q = g.square();
        let (cf, inf) = if q.inside_lambda(consts.x_star) {
            let classifier = Classifier::new(p, ThresholdTower::new(q.min_abs_re())?, params.precision);
            let (c, i) = count_verdicts(&classifier, &q, params.depth, params.samples, square_seed(params.seed, &q));
            let n = params.samples as f64;
            (c as f64 / n, i as f64 / n)
        } else {
            (0.0, 0.0)
        };
        Ok(SquareRow { m: g.m, n: g.n, certified_fraction: cf, indeterminate_fraction: inf })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let area = r * r;
    let truncated_area: f64 = rows.iter().map(|row| (1.0 - row.certified_fraction) * area).sum();
    let indeterminate_area: f64 = rows.iter().map(|row| row.indeterminate_fraction * area).sum();
    let tail = tail_bound(consts.c1, r, m_max);
    let census = StripCensus {
        strip_im_offset: params.offset,
        r,
        x_max: params.x_max,
        depth: params.depth,
        samples_per_square: params.samples,
        seed: params.seed,
        squares: rows.len(),
        sampled_squares: cells.iter().filter(|g| g.square().inside_lambda(consts.x_star)).count(),
        truncated_area,
        indeterminate_area,
        tail_bound: tail,
        total_upper: truncated_area + tail,
        paper_bound: consts.area_bound,
    };
    Ok((census, rows))
}

/// Writes `m,n,certifiedFraction,indeterminateFraction` rows.
pub fn write_rows_csv(rows: &[SquareRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// Maximum Newton steps when pulling a corner back into the square.
const NEWTON_STEPS: usize = 100;
const NEWTON_TOL: f64 = 1e-12;

/// Solves `f(z) = target` by Newton's method from `start`.
pub fn invert_near(p: &Polynomial, target: Complex64, start: Complex64) -> Result<Complex64> {
    let sum = ExponentialSum::of_map(p);
    let deriv = sum.derivative();
    let mut z = start;
    for _ in 0..NEWTON_STEPS {
        let (Some(fz), Some(dz)) = (sum.eval(z), deriv.eval(z)) else { break };
        if dz.norm() == 0.0 {
            break;
        }
        let step = (fz - target) / dz;
        z -= step;
        if !(z.re.is_finite() && z.im.is_finite()) {
            break;
        }
        if step.norm() <= NEWTON_TOL * z.norm().max(1.0) {
            return Ok(z);
        }
    }
    Err(Error::InversionFailure { re: target.re, im: target.im })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NestingReport {
    pub level: usize,
    pub square: Square,
    /// Quadrature points used (excluding failed inversions).
    pub points: usize,
    pub inversion_failures: usize,
    /// `density(E_level, Q0)`.
    pub density: f64,
    /// Fraction of points whose image square straddles `|Re| = x_1` or
    /// whose pull-back leaves `Q0`: the only places where the packing and
    /// the pointwise depth-1 test can disagree.
    pub boundary_fraction: f64,
}

/// Density in `Q0` of the pull-back of the grid squares packed into
/// `f(Q0) cap Lambda(x_1)`, by midpoint quadrature on `s x s` points.
///
/// A point counts when the grid square holding its image lies in
/// `Lambda(x_1)` and its four corners pull back into `Q0` along the inverse
/// branch through the point. Level 0 is `Q0` itself; level 2 is not
/// representable in `f64`.
pub fn build_nesting_level(
    p: &Polynomial,
    consts: &ConstantSet,
    q: impl Into<Square>,
    level: usize,
    s: usize,
) -> Result<NestingReport> {
    let q = q.into();
    check_admissible(consts, &q)?;
    match level {
        0 => Ok(NestingReport { level, square: q, points: 1, inversion_failures: 0, density: 1.0, boundary_fraction: 0.0 }),
        1 => {
            let tower = ThresholdTower::new(q.min_abs_re())?;
            let x1 = tower.materialize(1).ok_or(Error::Unrepresentable(1))?;
            let sum = ExponentialSum::of_map(p);
            let tol = 1e-12 * q.max_abs_re().max(1.0);
            let grown = Square::new(q.re0 - tol, q.im0 - tol, q.side + 2.0 * tol);
            let (mut inside, mut used, mut failures, mut boundary) = (0usize, 0usize, 0usize, 0usize);
            for z in q.midpoints(s) {
                let w = sum.eval(z).ok_or(Error::Unrepresentable(1))?;
                let g = GridSquare::containing(w, q.side).square();
                if !g.inside_lambda(x1) {
                    used += 1;
                    if g.max_abs_re() > x1 {
                        boundary += 1;
                    }
                    continue;
                }
                let pulled: Result<Vec<Complex64>> = g.corners().iter().map(|&c| invert_near(p, c, z)).collect();
                match pulled {
                    Ok(pre) => {
                        used += 1;
                        if pre.iter().all(|&zc| grown.contains(zc)) {
                            inside += 1;
                        } else {
                            boundary += 1;
                        }
                    }
                    Err(_) => failures += 1,
                }
            }
            let frac = |k: usize| if used == 0 { 0.0 } else { k as f64 / used as f64 };
            Ok(NestingReport {
                level,
                square: q,
                points: used,
                inversion_failures: failures,
                density: frac(inside),
                boundary_fraction: frac(boundary),
            })
        }
        k => Err(Error::Unrepresentable(k)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::sine_family_constants;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sine() -> (Polynomial, ConstantSet) {
        let (a, b) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        (Polynomial::sine_family(a, b).unwrap(), sine_family_constants(a, b).unwrap())
    }

    fn density(q: Square, depth: usize, samples: usize, seed: u64) -> DensityReport {
        let (p, k) = sine();
        sample_square_density(&p, &k, q, depth, samples, seed, Precision::Extended, Execution::Parallel).unwrap()
    }

    #[test]
    fn depth_zero_certifies_everything() {
        let (_, k) = sine();
        let r = density(Square::new(k.x_star, 0.0, 0.125), 0, 500, 1);
        assert_eq!(r.certified_fraction, 1.0);
        assert_eq!(r.bound_product, 1.0);
    }

    #[test]
    fn inadmissible_square_is_rejected() {
        let (p, k) = sine();
        let q = Square::new(k.x_star - 0.01, 0.0, 0.125);
        let err = sample_square_density(&p, &k, q, 1, 10, 1, Precision::Double, Execution::Sequential);
        assert!(matches!(err, Err(Error::InadmissibleSquare(_))));
    }

    #[test]
    fn bound_exp_four_units_right_of_base() {
        let (_, k) = sine();
        let r = density(Square::new(k.x_star + 4.0, 1.0, 0.125), 1, 64, 1);
        assert_relative_eq!(r.bound_exp, 0.8637040434953137, max_relative = 1e-12);
    }

    #[test]
    fn depth_two_density_beats_bounds() {
        let (_, k) = sine();
        let r = density(Square::new(k.x_star, 0.0, 0.125), 2, 4000, 5);
        assert_relative_eq!(r.bound_product, 1.0 - 2.0 / std::f64::consts::E.powi(2), max_relative = 1e-9);
        assert!(r.pass);
        assert!(r.indeterminate_fraction < 1e-2);
    }

    #[test]
    fn density_independent_of_execution() {
        let (p, k) = sine();
        let q = Square::new(k.x_star + 1.0, 2.0, 0.125);
        let a = sample_square_density(&p, &k, q, 2, 3000, 9, Precision::Extended, Execution::Sequential).unwrap();
        let b = sample_square_density(&p, &k, q, 2, 3000, 9, Precision::Extended, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tail_matches_closed_form_term_at_base() {
        let (_, k) = sine();
        let r = 0.125;
        let m0 = (k.x_star / r).floor() as i64 + 1;
        let tail = tail_bound(k.c1, r, m0);
        assert_relative_eq!(tail, tail_bound_direct(k.c1, r, m0), max_relative = 1e-10);
        // Unclipped continuous-row tail term at x*, rescaled for the integer row count and for m0 r > x*.
        let reference = 29.18683548113350;
        let rows = 2.0 * (strip_rows(r) + 1) as f64 * r / (4.0 * std::f64::consts::PI + 4.0 * r);
        let shift = (-(m0 as f64 * r - k.x_star) / 2.0).exp();
        // The reference series is unclipped; here the first term is clipped to 1.
        let unclipped = reference * rows * shift;
        assert!(tail <= unclipped && tail > 0.99 * unclipped);
        assert!((tail - reference).abs() / reference < 0.1);
    }

    #[test]
    fn tail_clipping_region() {
        let (_, k) = sine();
        for m1 in [0, 50, 150, 200, 210, 400] {
            assert_relative_eq!(tail_bound(k.c1, 0.125, m1), tail_bound_direct(k.c1, 0.125, m1), max_relative = 1e-10);
        }
    }

    #[test]
    fn small_census_is_consistent() {
        let (p, k) = sine();
        let params = CensusParams {
            offset: 0.0,
            r: 0.125,
            x_max: k.x_star + 0.5,
            depth: 0,
            samples: 4,
            seed: 1,
            precision: Precision::Double,
        };
        let (c, rows) = strip_census(&p, &k, &params, Execution::Parallel).unwrap();
        assert_eq!(rows.len(), c.squares);
        // At depth 0 only the band |Re| < x* is uncertified.
        let m0 = (k.x_star / 0.125).ceil();
        let band = 2.0 * m0 * 0.125 * (strip_rows(0.125) + 1) as f64 * 0.125;
        assert_relative_eq!(c.truncated_area, band, max_relative = 1e-12);
        assert!(c.total_upper >= c.truncated_area);
        assert_eq!(c.paper_bound, k.area_bound);
        let mut buf = Vec::new();
        write_rows_csv(&rows[..2], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("m,n,certifiedFraction,indeterminateFraction\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn nesting_levels() {
        let (p, k) = sine();
        let q = Square::new(k.x_star, 0.0, 0.125);
        assert_eq!(build_nesting_level(&p, &k, q, 0, 8).unwrap().density, 1.0);
        assert_eq!(build_nesting_level(&p, &k, q, 2, 8), Err(Error::Unrepresentable(2)));
        let e1 = build_nesting_level(&p, &k, q, 1, 32).unwrap();
        assert!(e1.density >= 1.0 - 2.0 / std::f64::consts::E.powi(2));
        assert_eq!(e1.inversion_failures, 0);
    }

    #[test]
    fn newton_inverts_f() {
        let (p, _) = sine();
        let z = Complex64::new(26.0, 0.7);
        let w = ExponentialSum::of_map(&p).eval(z).unwrap();
        let back = invert_near(&p, w + Complex64::new(0.1, -0.05), z + 1e-9).unwrap();
        assert!((back - z).norm() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn certified_fraction_nonincreasing_in_depth(dm in 0i64..40, n in 0i64..50, seed in 0u64..1000) {
            let (_, k) = sine();
            let m = (k.x_star / 0.125).ceil() as i64 + dm;
            let q = GridSquare::new(m, n, 0.125).square();
            let d1 = density(q, 1, 200, seed);
            let d2 = density(q, 2, 200, seed);
            prop_assert!(d2.certified_fraction <= d1.certified_fraction);
            prop_assert!(d1.certified_fraction + d1.indeterminate_fraction <= 1.0);
        }

        #[test]
        fn tail_closed_form_equals_sum(c1 in 1.0f64..5000.0, r in 0.01f64..0.25, m1 in 0i64..2000) {
            let a = tail_bound(c1, r, m1);
            let b = tail_bound_direct(c1, r, m1);
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300));
        }
    }
}
