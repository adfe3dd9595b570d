//! Sampled distortion and nonlinearity of `f` on squares, and numerical
//! checks of the lemmas the area bound rests on: distortion from
//! nonlinearity, distortion along chains, boundary-square counts, the
//! asymptotic forms of `P`, the derivative bounds, and univalence of `P(w)/w`.

use std::collections::HashSet;
use std::f64::consts::{E, PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{log_abs_derivative, log_derivative_ratio, ExponentialSum};
use crate::exec::Execution;
use crate::grid::{GridSquare, Square};
use crate::magnitude::ThresholdTower;
use crate::poly::{coefficient_bounds, default_grid_side, max_grid_side, radii, Polynomial};
use crate::{Error, Result};

/// Lattice subdivisions per side used by the estimators.
pub const DEFAULT_SUBDIVISIONS: usize = 64;

/// Relative sampling slack allowed in the distortion-from-nonlinearity check.
pub const LN_TOLERANCE: f64 = 0.02;

/// Separation ratio below which two points count as a collision.
pub const COLLISION_RATIO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistortionEstimate {
    /// `max |f'| / min |f'|` over the lattice.
    pub distortion: f64,
    /// `max |f''/f'|` over the lattice times the diameter.
    pub nonlinearity: f64,
    pub samples: usize,
    pub square: Square,
}

/// `max |f''/f'| * diam(Q)` over the lattice with `s` subdivisions.
pub fn nonlinearity(p: &Polynomial, q: impl Into<Square>, s: usize) -> Result<f64> {
    let q = q.into();
    let mut worst = 0.0f64;
    for z in q.lattice(s) {
        worst = worst.max(log_derivative_ratio(p, z)?.norm());
    }
    Ok(worst * q.diameter())
}

/// `max |f'| / min |f'|` over the lattice with `s` subdivisions.
pub fn distortion(p: &Polynomial, q: impl Into<Square>, s: usize) -> Result<f64> {
    let (lo, hi) = log_derivative_range(p, &q.into(), s)?;
    Ok((hi - lo).exp())
}

fn log_derivative_range(p: &Polynomial, q: &Square, s: usize) -> Result<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for z in q.lattice(s) {
        let l = log_abs_derivative(p, z)?;
        lo = lo.min(l);
        hi = hi.max(l);
    }
    Ok((lo, hi))
}

pub fn estimate(p: &Polynomial, q: impl Into<Square>, s: usize) -> Result<DistortionEstimate> {
    let q = q.into();
    Ok(DistortionEstimate {
        distortion: distortion(p, q, s)?,
        nonlinearity: nonlinearity(p, q, s)?,
        samples: q.lattice(s).len(),
        square: q,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LnReport {
    pub nonlinearity: f64,
    pub distortion: f64,
    /// `1 + 2 N(f|Q)`.
    pub bound: f64,
    pub pass: bool,
}

/// Checks `L(f|Q) <= 1 + 2 N(f|Q)` up to [`LN_TOLERANCE`].
pub fn check_ln(p: &Polynomial, q: impl Into<Square>, s: usize) -> Result<LnReport> {
    let est = estimate(p, q, s)?;
    if !(est.nonlinearity < 1.0) {
        return Err(Error::PreconditionViolated(format!(
            "nonlinearity {} >= 1 on {}",
            est.nonlinearity, est.square
        )));
    }
    let bound = 1.0 + 2.0 * est.nonlinearity;
    Ok(LnReport {
        nonlinearity: est.nonlinearity,
        distortion: est.distortion,
        bound,
        pass: est.distortion <= bound * (1.0 + LN_TOLERANCE),
    })
}

fn eval_point(sum: &ExponentialSum, z: Complex64) -> Result<Complex64> {
    sum.eval(z).ok_or(Error::RegimeOverflow)
}

/// Winding number of `f(boundary of q)` around `target`.
///
/// The boundary is walked with domain step `side/64`; segments are bisected
/// until their image is short compared with its distance to `target`.
pub fn image_winding(p: &Polynomial, q: &Square, target: Complex64) -> Result<i64> {
    let sum = ExponentialSum::of_map(p);
    let pts = q.boundary(q.side / 64.0);
    let mut total = 0.0;
    let mut prev = eval_point(&sum, pts[0])? - target;
    for pair in pts.windows(2) {
        let end = eval_point(&sum, pair[1])? - target;
        total += winding_segment(&sum, pair[0], pair[1], prev, end, target, 0)?;
        prev = end;
    }
    Ok((total / TAU).round() as i64)
}

fn winding_segment(
    sum: &ExponentialSum,
    a: Complex64,
    b: Complex64,
    fa: Complex64,
    fb: Complex64,
    target: Complex64,
    depth: u32,
) -> Result<f64> {
    if fa.norm() == 0.0 || fb.norm() == 0.0 {
        return Err(Error::PreconditionViolated(format!("image boundary passes through {target}")));
    }
    if (fb - fa).norm() <= 0.25 * fa.norm().min(fb.norm()) || depth >= 48 {
        return Ok((fb / fa).arg());
    }
    let mid = 0.5 * (a + b);
    let fm = eval_point(sum, mid)? - target;
    Ok(winding_segment(sum, a, mid, fa, fm, target, depth + 1)?
        + winding_segment(sum, mid, b, fm, fb, target, depth + 1)?)
}

/// Whether every corner of `inner` is enclosed by `f(boundary of outer)`.
pub fn image_contains(p: &Polynomial, outer: &Square, inner: &Square) -> Result<bool> {
    for corner in inner.corners() {
        if image_winding(p, outer, corner)? == 0 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainReport {
    pub links: usize,
    /// Product of the per-square distortions.
    pub distortion: f64,
    pub per_square: Vec<f64>,
    /// `e^2`.
    pub bound: f64,
    pub pass: bool,
}

/// Distortion of `f^n` along `Q_0, ..., Q_n` estimated as the product of the
/// per-square distortions, after checking `Q_{i+1}` lies in `f(Q_i)`.
pub fn chain_distortion(p: &Polynomial, chain: &[Square], s: usize) -> Result<ChainReport> {
    let r6 = radii(p).r6;
    let max_side = max_grid_side(p);
    for q in chain {
        if !q.inside_lambda(r6) {
            return Err(Error::PreconditionViolated(format!("{q} is not inside Lambda(R6 = {r6})")));
        }
        if q.side > max_side * (1.0 + 1e-15) {
            return Err(Error::PreconditionViolated(format!("side of {q} exceeds 1/(4N) = {max_side}")));
        }
    }
    for (i, pair) in chain.windows(2).enumerate() {
        if !image_contains(p, &pair[0], &pair[1])? {
            return Err(Error::ChainBroken { link: i + 1, square: pair[1].to_string() });
        }
    }
    let per_square = chain.iter().map(|q| distortion(p, *q, s)).collect::<Result<Vec<_>>>()?;
    let product: f64 = per_square.iter().product();
    let bound = E * E;
    Ok(ChainReport { links: chain.len(), distortion: product, per_square, bound, pass: product <= bound })
}

/// Builds `Q_0 = q0, Q_1, ..., Q_k` with `Q_{i+1}` a grid square inside
/// `f(Q_i)` and `Lambda(thresholds[i])`. Intermediate squares keep
/// `|Re| <= cap` so the next image stays representable. `None` if no
/// candidate is found.
pub fn build_chain(p: &Polynomial, q0: Square, thresholds: &[f64], cap: f64) -> Result<Option<Vec<Square>>> {
    let mut chain = vec![q0];
    Ok(extend_chain(p, &ExponentialSum::of_map(p), &mut chain, thresholds, cap)?.then_some(chain))
}

/// Depth-first search over the candidate squares of each link.
fn extend_chain(
    p: &Polynomial,
    sum: &ExponentialSum,
    chain: &mut Vec<Square>,
    thresholds: &[f64],
    cap: f64,
) -> Result<bool> {
    let i = chain.len() - 1;
    let Some(&x_next) = thresholds.get(i) else {
        return Ok(true);
    };
    let last = i + 1 == thresholds.len();
    let current = chain[i];
    let mut tried = Vec::new();
    let side = current.side;
    let candidates = current.midpoints(8).into_iter().filter_map(|z| sum.eval(z)).flat_map(|w| {
        // Also try the point pulled horizontally into the admissible band.
        let lo = x_next + side;
        let hi = if last { f64::INFINITY } else { cap - side };
        let pulled = Complex64::new(w.re.signum() * w.re.abs().clamp(lo, hi.max(lo)), w.im);
        [w, pulled]
    });
    for w in candidates {
        let g = GridSquare::containing(w, side).square();
        if tried.contains(&g) || !g.inside_lambda(x_next) || (!last && g.max_abs_re() > cap) {
            continue;
        }
        tried.push(g);
        if image_contains(p, &current, &g)? {
            chain.push(g);
            if extend_chain(p, sum, chain, thresholds, cap)? {
                return Ok(true);
            }
            chain.pop();
        }
    }
    Ok(false)
}

/// Grid cells of side `r` meeting the closed segment `[a, b]`.
fn segment_cells(a: Complex64, b: Complex64, r: f64, cells: &mut HashSet<(i64, i64)>) {
    let cell = |z: Complex64| ((z.re / r).floor() as i64, (z.im / r).floor() as i64);
    let add_point = |z: Complex64, cells: &mut HashSet<(i64, i64)>| {
        let (m, n) = cell(z);
        let on_v = (z.re / r).fract() == 0.0;
        let on_h = (z.im / r).fract() == 0.0;
        cells.insert((m, n));
        if on_v {
            cells.insert((m - 1, n));
        }
        if on_h {
            cells.insert((m, n - 1));
        }
        if on_v && on_h {
            cells.insert((m - 1, n - 1));
        }
    };
    add_point(a, cells);
    add_point(b, cells);
    let d = b - a;
    let lines = |from: f64, delta: f64| {
        let mut ts = Vec::new();
        if delta != 0.0 {
            let (lo, hi) = if delta > 0.0 { (from, from + delta) } else { (from + delta, from) };
            let k0 = (lo / r).floor() as i64 + 1;
            let k1 = (hi / r).ceil() as i64 - 1;
            for k in k0..=k1 {
                let t = (k as f64 * r - from) / delta;
                if t > 0.0 && t < 1.0 {
                    ts.push(t);
                }
            }
        }
        ts
    };
    let mut ts: Vec<f64> = lines(a.re, d.re).into_iter().chain(lines(a.im, d.im)).collect();
    for &t in &ts {
        add_point(a + d * t, cells);
    }
    // Interior of each piece between crossings lies in a single cell.
    ts.push(0.0);
    ts.push(1.0);
    ts.sort_by(f64::total_cmp);
    for w in ts.windows(2) {
        let mid = a + d * (0.5 * (w[0] + w[1]));
        cells.insert(cell(mid));
    }
}

/// Number of grid squares of side `r` meeting the segment `[a, b]`.
pub fn count_segment_squares(a: Complex64, b: Complex64, r: f64) -> usize {
    let mut cells = HashSet::new();
    segment_cells(a, b, r, &mut cells);
    cells.len()
}

/// `f(boundary of q)` as a closed polyline whose consecutive points are at
/// most `max_gap` apart.
pub fn image_boundary(p: &Polynomial, q: &Square, max_gap: f64) -> Result<Vec<Complex64>> {
    let sum = ExponentialSum::of_map(p);
    let pts = q.boundary(q.side / 16.0);
    let mut out = vec![eval_point(&sum, pts[0])?];
    for pair in pts.windows(2) {
        let fa = *out.last().unwrap();
        let fb = eval_point(&sum, pair[1])?;
        refine(&sum, pair[0], pair[1], fa, fb, max_gap, 0, &mut out)?;
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    sum: &ExponentialSum,
    a: Complex64,
    b: Complex64,
    fa: Complex64,
    fb: Complex64,
    max_gap: f64,
    depth: u32,
    out: &mut Vec<Complex64>,
) -> Result<()> {
    if (fb - fa).norm() <= max_gap || depth >= 40 {
        out.push(fb);
        return Ok(());
    }
    let mid = 0.5 * (a + b);
    let fm = eval_point(sum, mid)?;
    refine(sum, a, mid, fa, fm, max_gap, depth + 1, out)?;
    refine(sum, mid, b, fm, fb, max_gap, depth + 1, out)
}

/// Winding number of a closed polyline around `t`.
fn polyline_winding(curve: &[Complex64], t: Complex64) -> i64 {
    let total: f64 = curve.windows(2).map(|w| ((w[1] - t) / (w[0] - t)).arg()).sum();
    (total / TAU).round() as i64
}

/// Intervals of `Im` along the vertical line `Re = x` that lie inside the
/// closed polyline.
fn vertical_sections(curve: &[Complex64], x: f64) -> Vec<(f64, f64)> {
    let mut ys: Vec<f64> = curve
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0], w[1]);
            if (a.re - x) * (b.re - x) > 0.0 || a.re == b.re {
                return None;
            }
            let t = (x - a.re) / (b.re - a.re);
            Some(a.im + t * (b.im - a.im))
        })
        .collect();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    ys.windows(2)
        .filter(|w| polyline_winding(curve, Complex64::new(x, 0.5 * (w[0] + w[1]))) != 0)
        .map(|w| (w[0], w[1]))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryCount {
    pub count: usize,
    /// `16 + 12 sqrt2 L(f|Q) |f'(z0)|` with `z0` the centre.
    pub c: f64,
    pub distortion: f64,
    pub derivative: f64,
    pub pass: bool,
}

/// Grid squares of side `q.side` meeting `f(boundary of Q)` or the part of
/// `boundary of Lambda(x)` inside `f(Q)`, compared with the constant `c`.
pub fn count_boundary_squares(p: &Polynomial, q: impl Into<Square>, x: f64) -> Result<BoundaryCount> {
    let q = q.into();
    let r = q.side;
    let curve = image_boundary(p, &q, r / 4.0)?;
    let mut cells = HashSet::new();
    for w in curve.windows(2) {
        segment_cells(w[0], w[1], r, &mut cells);
    }
    for line in [x, -x] {
        for (y0, y1) in vertical_sections(&curve, line) {
            segment_cells(Complex64::new(line, y0), Complex64::new(line, y1), r, &mut cells);
        }
    }
    let distortion = distortion(p, q, DEFAULT_SUBDIVISIONS)?;
    let derivative = log_abs_derivative(p, q.center())?.exp();
    let c = 16.0 + 12.0 * std::f64::consts::SQRT_2 * distortion * derivative;
    let count = cells.len();
    Ok(BoundaryCount { count, c, distortion, derivative, pass: (count as f64) <= c })
}

/// Outcome of a batch of checks of one lemma.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LemmaReport {
    pub lemma: String,
    pub trials: usize,
    pub failures: usize,
    /// Smallest relative slack seen; negative on failure.
    pub worst_slack: f64,
}

impl LemmaReport {
    fn new(lemma: Lemma) -> Self {
        Self { lemma: lemma.to_string(), trials: 0, failures: 0, worst_slack: f64::INFINITY }
    }

    /// Records one trial; `slack > 0` is a pass.
    fn record(&mut self, slack: f64) {
        self.trials += 1;
        if !(slack > 0.0) {
            self.failures += 1;
        }
        self.worst_slack = self.worst_slack.min(if slack.is_nan() { f64::NEG_INFINITY } else { slack });
    }

    fn fail(&mut self) {
        self.trials += 1;
        self.failures += 1;
        self.worst_slack = f64::NEG_INFINITY;
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn horner(coeffs: &[Complex64], z: Complex64) -> Complex64 {
    coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Checks `|P(z) - a_N z^N| <= eps |a_N| |z|^N` for `|z| >= 1 + K/(eps |a_N|)`
/// and `|P(z) - a_0| <= eps |a_0|` for `|z| <= eps |a_0| / (K + eps |a_0|)`,
/// on circles at and beyond the thresholds plus the origin.
pub fn check_poly_asymptotics(p: &Polynomial, eps: f64, samples: usize) -> LemmaReport {
    let mut report = LemmaReport::new(Lemma::Pp);
    let (k, _) = coefficient_bounds(p);
    let a = p.coeffs();
    let n = p.degree();
    let (a0, an) = (p.constant().norm(), p.leading().norm());
    let outer = 1.0 + k / (eps * an);
    let inner = eps * a0 / (k + eps * a0);
    for radius in [outer, 2.0 * outer, 10.0 * outer] {
        for z in circle(radius, samples) {
            let lhs = horner(&a[..n], z).norm();
            let rhs = eps * an * z.norm().powi(n as i32);
            report.record(1.0 - lhs / rhs);
        }
    }
    let rhs = eps * a0;
    report.record(1.0 - 0.0 / rhs);
    for radius in [inner, 0.5 * inner] {
        for z in circle(radius, samples) {
            let lhs = (z * horner(&a[1..], z)).norm();
            report.record(1.0 - lhs / rhs);
        }
    }
    report
}

fn circle(radius: f64, samples: usize) -> impl Iterator<Item = Complex64> {
    let samples = samples.max(1);
    (0..samples).map(move |j| Complex64::from_polar(radius, TAU * j as f64 / samples as f64))
}

/// Checks `|P'(w) - P(w)/w| > 2` and `|w^2 P''/(w P' - P) - 1| < N` on the
/// circles `|w|` in `{R4, 2 R4, R5, R5/2}`, and `|f'| > 2`, `|f''/f'| < N` on
/// the lines `Re z = +-R6`.
pub fn check_derivative_bounds(p: &Polynomial, samples: usize) -> LemmaReport {
    let mut report = LemmaReport::new(Lemma::Estp1);
    let rd = radii(p);
    let n = p.degree() as f64;
    for radius in [rd.r4, 2.0 * rd.r4, rd.r5, 0.5 * rd.r5] {
        for w in circle(radius, samples) {
            let (pv, d1, d2) = (p.eval(w), p.eval_derivative(w), p.eval_second_derivative(w));
            let first = (d1 - pv / w).norm();
            let second = (w * w * d2 / (w * d1 - pv) - 1.0).norm();
            report.record(f64::min((first - 2.0) / 2.0, (n - second) / n));
        }
    }
    let samples = samples.max(1);
    for side in [rd.r6, -rd.r6] {
        for j in 0..samples {
            let z = Complex64::new(side, TAU * j as f64 / samples as f64);
            match (log_abs_derivative(p, z), log_derivative_ratio(p, z)) {
                (Ok(l), Ok(ratio)) => {
                    let first = l.exp();
                    report.record(f64::min((first - 2.0) / 2.0, (n - ratio.norm()) / n));
                }
                _ => report.fail(),
            }
        }
    }
    report
}

/// Region of the univalence probe for `P(w)/w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Region {
    /// `2 R1 <= |w| <= 10 R1`, `|arg w - theta| <= pi/(2(N-1))`.
    Sector(f64),
    /// `|w| <= R2/2`.
    SmallDisk,
}

/// `|g(z) - g(z')| / |z - z'|` for `g(w) = P(w)/w`.
pub fn separation_ratio(p: &Polynomial, z: Complex64, z2: Complex64) -> Result<f64> {
    if z == z2 {
        return Err(Error::DegeneratePair);
    }
    let g = |w: Complex64| p.eval(w) / w;
    Ok((g(z) - g(z2)).norm() / (z - z2).norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct UnivalenceReport {
    pub region: Region,
    pub pairs: usize,
    pub collisions: usize,
    pub min_separation_ratio: f64,
}

/// Samples distinct pairs in `region` and looks for near-collisions of
/// `P(w)/w`.
pub fn univalence_probe(p: &Polynomial, region: Region, pairs: usize, rng: &mut impl Rng) -> Result<UnivalenceReport> {
    if pairs == 0 {
        return Err(Error::InvalidParameter { name: "pairs", value: 0.0, range: ">= 1".into() });
    }
    let rd = radii(p);
    let half_width = PI / (2.0 * (p.degree() as f64 - 1.0));
    let draw = |rng: &mut dyn rand::RngCore| loop {
        let w = match region {
            Region::Sector(theta) => Complex64::from_polar(
                rng.random_range(2.0 * rd.r1..=10.0 * rd.r1),
                theta + rng.random_range(-half_width..=half_width),
            ),
            Region::SmallDisk => Complex64::from_polar(
                0.5 * rd.r2 * rng.random::<f64>().sqrt(),
                rng.random_range(0.0..TAU),
            ),
        };
        if w.norm() > 0.0 {
            break w;
        }
    };
    let mut report = UnivalenceReport { region, pairs, collisions: 0, min_separation_ratio: f64::INFINITY };
    let mut done = 0;
    while done < pairs {
        let (z, z2) = (draw(rng), draw(rng));
        let Ok(ratio) = separation_ratio(p, z, z2) else { continue };
        done += 1;
        if !(ratio > COLLISION_RATIO) {
            report.collisions += 1;
        }
        report.min_separation_ratio = report.min_separation_ratio.min(ratio);
    }
    Ok(report)
}

/// The lemma batches run by [`run_lemmas`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Lemma {
    Ln,
    Chain,
    Mq,
    Pp,
    Estp1,
    Univalent,
}

impl Lemma {
    pub const ALL: [Lemma; 6] = [Lemma::Ln, Lemma::Chain, Lemma::Mq, Lemma::Pp, Lemma::Estp1, Lemma::Univalent];
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lemma::Ln => "ln",
            Lemma::Chain => "chain",
            Lemma::Mq => "mq",
            Lemma::Pp => "pp",
            Lemma::Estp1 => "estp1",
            Lemma::Univalent => "univalent",
        })
    }
}

/// Parses `ln|chain|mq|pp|estp1|univalent|all`.
pub fn parse_lemmas(s: &str) -> Result<Vec<Lemma>> {
    if s.trim() == "all" {
        return Ok(Lemma::ALL.to_vec());
    }
    s.split(',').map(|t| t.trim().parse()).collect()
}

impl FromStr for Lemma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Lemma::ALL
            .into_iter()
            .find(|l| l.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown lemma '{s}', expected ln|chain|mq|pp|estp1|univalent|all")))
    }
}

/// Parameters of a lemma batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LemmaParams {
    /// Random squares for the square-based lemmas.
    pub trials: usize,
    /// Points per circle for the pointwise lemmas.
    pub circle_samples: usize,
    /// Chains for the chain lemma.
    pub chains: usize,
    pub seed: u64,
    pub subdivisions: usize,
}

impl Default for LemmaParams {
    fn default() -> Self {
        Self { trials: 200, circle_samples: 1000, chains: 50, seed: 1, subdivisions: DEFAULT_SUBDIVISIONS }
    }
}

/// Random grid squares in the band `R6 < |Re z| < R6 + 4/(N-1)` of one
/// period strip, where `|f'| r` stays small enough to trace `f(Q)`.
pub fn random_band_squares(p: &Polynomial, r: f64, count: usize, rng: &mut impl Rng) -> Vec<Square> {
    let r6 = radii(p).r6;
    let width = 4.0 / (p.degree() as f64 - 1.0);
    let m_lo = (r6 / r).floor() as i64 + 1;
    let m_hi = ((r6 + width) / r).ceil() as i64 - 2;
    let n_rows = (TAU / r).floor() as i64 + 1;
    (0..count)
        .map(|_| {
            let m = rng.random_range(m_lo..=m_hi.max(m_lo));
            let m = if rng.random::<bool>() { m } else { -m - 1 };
            GridSquare::new(m, rng.random_range(0..=n_rows), r).square()
        })
        .collect()
}

/// Largest `log|f|` allowed on intermediate chain squares, keeping grid
/// squares of the next link representable in `f64`.
const CHAIN_LOG_CAP: f64 = 26.0;
const CHAIN_LEN: usize = 3;
const CHAIN_ATTEMPTS: usize = 256;

/// Runs the requested lemma batches with grid side `r`.
pub fn run_lemmas(
    p: &Polynomial,
    r: f64,
    which: &[Lemma],
    params: &LemmaParams,
    exec: Execution,
) -> Result<Vec<LemmaReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let squares = random_band_squares(p, r, params.trials, &mut rng);
    let s = params.subdivisions;
    let mut reports = Vec::new();
    for &lemma in which {
        let mut report = LemmaReport::new(lemma);
        match lemma {
            Lemma::Ln => {
                for outcome in exec.map(&squares, |q| check_ln(p, *q, s)) {
                    match outcome {
                        Ok(ln) => report.record(1.0 - ln.distortion / (ln.bound * (1.0 + LN_TOLERANCE))),
                        Err(_) => report.fail(),
                    }
                }
            }
            Lemma::Mq => {
                let outcomes = exec.map(&squares, |q| {
                    let w = ExponentialSum::of_map(p).eval(q.center()).ok_or(Error::RegimeOverflow)?;
                    count_boundary_squares(p, *q, w.re.abs())
                });
                for outcome in outcomes {
                    match outcome {
                        Ok(b) => report.record(1.0 - b.count as f64 / b.c),
                        Err(_) => report.fail(),
                    }
                }
            }
            Lemma::Chain => {
                let seeds: Vec<u64> = (0..params.chains).map(|_| rng.random()).collect();
                for outcome in exec.map(&seeds, |&seed| random_chain_report(p, r, s, seed)) {
                    match outcome {
                        Ok(c) => report.record(1.0 - c.distortion / c.bound),
                        Err(_) => report.fail(),
                    }
                }
            }
            Lemma::Pp => {
                for eps in [0.5, 0.25, 0.125] {
                    let sub = check_poly_asymptotics(p, eps, params.circle_samples);
                    report.trials += sub.trials;
                    report.failures += sub.failures;
                    report.worst_slack = report.worst_slack.min(sub.worst_slack);
                }
            }
            Lemma::Estp1 => report = check_derivative_bounds(p, params.circle_samples),
            Lemma::Univalent => {
                let n = p.degree() as f64;
                let mut regions = vec![Region::SmallDisk];
                regions.extend((0..4).map(|j| Region::Sector(j as f64 * PI / (2.0 * (n - 1.0)))));
                for region in regions {
                    let u = univalence_probe(p, region, params.circle_samples, &mut rng)?;
                    report.trials += u.pairs;
                    report.failures += u.collisions;
                    report.worst_slack = report.worst_slack.min(1.0 - COLLISION_RATIO / u.min_separation_ratio);
                }
            }
        }
        reports.push(report);
    }
    Ok(reports)
}

/// Builds a length-3 chain from a random square just inside `Lambda(x_0)`,
/// `x_0 = max(R6, 6 log 2)`, and reports its distortion.
///
/// Links follow the threshold tower `Lambda(x_1), Lambda(x_2)` when `x_1`
/// fits below the representability cap; otherwise (higher degree) every
/// link only has to stay in `Lambda(R6)`, which is all the lemma requires.
pub fn random_chain_report(p: &Polynomial, r: f64, s: usize, seed: u64) -> Result<ChainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r6 = radii(p).r6;
    let x0 = r6.max(6.0 * std::f64::consts::LN_2);
    let tower = ThresholdTower::new(x0)?;
    let cap = CHAIN_LOG_CAP / (p.degree() as f64 - 1.0);
    let thresholds: Vec<f64> = match (tower.materialize(1), tower.materialize(2)) {
        (Some(x1), Some(x2)) if x1 + 2.0 < cap => vec![x1, x2],
        _ => vec![r6; CHAIN_LEN - 1],
    };
    let n_rows = (TAU / r).floor() as i64 + 1;
    let m_lo = (x0 / r).ceil() as i64;
    let m_hi = m_lo + ((0.25 / r).ceil() as i64).max(1);
    for _ in 0..CHAIN_ATTEMPTS {
        let m = rng.random_range(m_lo..=m_hi);
        let m = if rng.random::<bool>() { m } else { -m - 1 };
        let q0 = GridSquare::new(m, rng.random_range(0..=n_rows), r).square();
        if let Some(chain) = build_chain(p, q0, &thresholds, cap)? {
            return chain_distortion(p, &chain, s);
        }
    }
    Err(Error::ChainBroken { link: 0, square: format!("no chain found after {CHAIN_ATTEMPTS} attempts") })
}

/// Default grid side for lemma batches.
pub fn lemma_grid_side(p: &Polynomial) -> f64 {
    default_grid_side(p)
}
