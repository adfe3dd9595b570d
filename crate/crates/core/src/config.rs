//! `key=value` run configuration shared by every subcommand.
//!
//! Pairs are separated by newlines or commas; a comma-separated piece
//! without `=` continues the previous value, so `coeffs=-0.5,0,0.5` is one
//! pair. Later keys override earlier ones. `#` starts a comment.

use std::f64::consts::LN_2;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::Precision;
use crate::poly::{max_grid_side, sine_family_constants, ConstantSet, Polynomial};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum PolySpec {
    /// `a_0, ..., a_N`.
    Coeffs(Vec<Complex64>),
    /// `alpha sin(z + beta)`.
    SineFamily { alpha: Complex64, beta: Complex64 },
}

impl PolySpec {
    pub fn polynomial(&self) -> Result<Polynomial> {
        match self {
            PolySpec::Coeffs(c) => Polynomial::new(c.clone()),
            PolySpec::SineFamily { alpha, beta } => Polynomial::sine_family(*alpha, *beta),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub poly: PolySpec,
    pub r: f64,
    /// Start of the threshold tower for `classify`.
    pub x0: Option<f64>,
    pub c1: Option<f64>,
    pub xstar: Option<f64>,
    pub depth: usize,
    pub samples: usize,
    pub seed: u64,
    pub precision: Precision,
    pub xmax: f64,
    pub csv: Option<String>,
    pub out: Option<String>,
}

pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_SAMPLES: usize = 4096;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_XMAX: f64 = 40.0;
/// Deepest certification the orbit engine is asked for.
pub const MAX_DEPTH: usize = 8;

impl RunConfig {
    /// Config with defaults for everything but the polynomial.
    pub fn new(poly: PolySpec) -> Result<Self> {
        let p = poly.polynomial()?;
        Ok(Self {
            poly,
            r: max_grid_side(&p).min(0.125),
            x0: None,
            c1: None,
            xstar: None,
            depth: DEFAULT_DEPTH,
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            precision: Precision::default(),
            xmax: DEFAULT_XMAX,
            csv: None,
            out: None,
        })
    }

    pub fn polynomial(&self) -> Result<Polynomial> {
        self.poly.polynomial()
    }

    /// Constants at this config's `r`, honouring the `c1` and `x*` overrides.
    /// The sine family defaults `c1` to its closed form.
    pub fn constants(&self) -> Result<ConstantSet> {
        let p = self.polynomial()?;
        let mut c1 = self.c1;
        if let PolySpec::SineFamily { alpha, beta } = self.poly {
            let base = sine_family_constants(alpha, beta)?;
            if self.r == base.r && self.c1.is_none() && self.xstar.is_none() {
                return Ok(base);
            }
            c1 = c1.or(Some(base.c1));
        }
        ConstantSet::compute(&p, self.r, c1, self.xstar)
    }

    /// Checks every field against its admissible range.
    pub fn validate(&self) -> Result<()> {
        let p = self.polynomial()?;
        let r_max = max_grid_side(&p);
        if !(self.r > 0.0 && self.r <= r_max) {
            return Err(invalid("r", self.r, format!("(0, 1/(4N)] = (0, {r_max}]")));
        }
        if let Some(x0) = self.x0 {
            if !(x0 >= 6.0 * LN_2) || !x0.is_finite() {
                return Err(invalid("x0", x0, format!(">= 6 log 2 = {}", 6.0 * LN_2)));
            }
        }
        if self.depth > MAX_DEPTH {
            return Err(invalid("depth", self.depth as f64, format!("0..={MAX_DEPTH}")));
        }
        if self.samples == 0 {
            return Err(invalid("samples", 0.0, ">= 1".into()));
        }
        if !(self.xmax.is_finite() && self.xmax > 0.0) {
            return Err(invalid("xmax", self.xmax, "> 0".into()));
        }
        if let Precision::Arbitrary { bits } = self.precision {
            if bits < 64 {
                return Err(invalid("precision", bits as f64, "arbitrary:BITS with BITS >= 64".into()));
            }
        }
        self.constants().map(|_| ())
    }

    /// Serializes to text that [`parse_config`] maps back to `self`.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        match &self.poly {
            PolySpec::Coeffs(c) => {
                let list: Vec<String> = c.iter().map(|&z| format_complex(z)).collect();
                writeln!(s, "coeffs={}", list.join(",")).unwrap();
            }
            PolySpec::SineFamily { alpha, beta } => {
                writeln!(s, "alpha={}", format_complex(*alpha)).unwrap();
                writeln!(s, "beta={}", format_complex(*beta)).unwrap();
            }
        }
        writeln!(s, "r={:?}", self.r).unwrap();
        for (key, v) in [("x0", self.x0), ("c1", self.c1), ("xstar", self.xstar)] {
            if let Some(v) = v {
                writeln!(s, "{key}={v:?}").unwrap();
            }
        }
        writeln!(s, "depth={}", self.depth).unwrap();
        writeln!(s, "samples={}", self.samples).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        writeln!(s, "precision={}", format_precision(self.precision)).unwrap();
        writeln!(s, "xmax={:?}", self.xmax).unwrap();
        for (key, v) in [("csv", &self.csv), ("out", &self.out)] {
            if let Some(v) = v {
                writeln!(s, "{key}={v}").unwrap();
            }
        }
        s
    }
}

fn invalid(name: &'static str, value: f64, range: String) -> Error {
    Error::InvalidParameter { name, value, range }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Splits text into `(key, value)` pairs in order of appearance.
fn pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        let mut continues = false;
        for piece in line.split(',') {
            match piece.split_once('=') {
                Some((k, v)) => {
                    out.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
                    continues = true;
                }
                None if continues => {
                    let last = &mut out.last_mut().expect("continuation follows a pair").1;
                    last.push(',');
                    last.push_str(piece.trim());
                }
                None if piece.trim().is_empty() => {}
                None => return Err(config_err(format!("expected key=value, found {:?}", piece.trim()))),
            }
        }
    }
    Ok(out)
}

/// Parses `a`, `bi`, `a+bi` or `a-bi`.
pub fn parse_complex(text: &str) -> Result<Complex64> {
    let t: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || config_err(format!("invalid complex number {text:?}"));
    let num = |s: &str| -> Result<f64> {
        let v = match s {
            "" | "+" => 1.0,
            "-" => -1.0,
            _ => s.parse::<f64>().map_err(|_| bad())?,
        };
        if v.is_finite() { Ok(v) } else { Err(bad()) }
    };
    let Some(body) = t.strip_suffix('i') else {
        let re = t.parse::<f64>().map_err(|_| bad())?;
        return if re.is_finite() { Ok(Complex64::new(re, 0.0)) } else { Err(bad()) };
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| matches!(bytes[k], b'+' | b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    match split {
        Some(k) => Ok(Complex64::new(parse_complex(&body[..k])?.re, num(&body[k..])?)),
        None => Ok(Complex64::new(0.0, num(body)?)),
    }
}

pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 && z.im.is_sign_positive() {
        format!("{:?}", z.re)
    } else if z.im.is_sign_negative() {
        format!("{:?}-{:?}i", z.re, -z.im)
    } else {
        format!("{:?}+{:?}i", z.re, z.im)
    }
}

pub fn parse_precision(text: &str) -> Result<Precision> {
    match text.trim().to_ascii_lowercase().as_str() {
        "double" => Ok(Precision::Double),
        "extended" | "dd" => Ok(Precision::Extended),
        "arbitrary" => Ok(Precision::Arbitrary { bits: Precision::DEFAULT_BITS }),
        other => match other.strip_prefix("arbitrary:").map(str::parse::<usize>) {
            Some(Ok(bits)) => Ok(Precision::Arbitrary { bits }),
            _ => Err(config_err(format!("precision must be double, extended or arbitrary[:BITS], found {text:?}"))),
        },
    }
}

pub fn format_precision(p: Precision) -> String {
    match p {
        Precision::Double => "double".into(),
        Precision::Extended => "extended".into(),
        Precision::Arbitrary { bits } => format!("arbitrary:{bits}"),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| config_err(format!("{key}: cannot parse {v:?}")))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_num(key, v)?;
    if x.is_finite() { Ok(x) } else { Err(config_err(format!("{key}: {v:?} is not finite"))) }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    from_pairs(pairs(text)?)
}

const POLY_KEYS: [&str; 3] = ["coeffs", "alpha", "beta"];

/// Parses `text`, then applies `overrides` on top. A polynomial given in
/// the overrides replaces the one in `text` wholesale.
pub fn parse_config_with(text: &str, overrides: &[(&str, String)]) -> Result<RunConfig> {
    let mut all = pairs(text)?;
    if overrides.iter().any(|(k, _)| POLY_KEYS.contains(k)) {
        all.retain(|(k, _)| !POLY_KEYS.contains(&k.as_str()));
    }
    all.extend(overrides.iter().map(|(k, v)| (k.to_string(), v.clone())));
    from_pairs(all)
}

fn from_pairs(all: Vec<(String, String)>) -> Result<RunConfig> {
    let mut coeffs = None;
    let mut alpha = None;
    let mut beta = None;
    let mut r = None;
    let mut rest: Vec<(String, String)> = Vec::new();
    for (key, v) in all {
        match key.as_str() {
            "coeffs" => {
                coeffs = Some(v.split(',').map(parse_complex).collect::<Result<Vec<_>>>()?);
            }
            "alpha" => alpha = Some(parse_complex(&v)?),
            "beta" => beta = Some(parse_complex(&v)?),
            "r" => r = Some(parse_f64("r", &v)?),
            _ => rest.push((key, v)),
        }
    }
    let poly = match (coeffs, alpha) {
        (Some(c), None) if beta.is_none() => PolySpec::Coeffs(c),
        (None, Some(alpha)) => PolySpec::SineFamily { alpha, beta: beta.unwrap_or_default() },
        (None, None) if beta.is_some() => return Err(config_err("beta given without alpha")),
        (None, None) => return Err(config_err("one of coeffs or alpha is required")),
        _ => return Err(config_err("coeffs and alpha/beta are mutually exclusive")),
    };
    let mut cfg = RunConfig::new(poly)?;
    if let Some(r) = r {
        cfg.r = r;
    }
    for (key, v) in rest {
        match key.as_str() {
            "x0" => cfg.x0 = Some(parse_f64("x0", &v)?),
            "c1" => cfg.c1 = Some(parse_f64("c1", &v)?),
            "xstar" | "x_star" => cfg.xstar = Some(parse_f64("xstar", &v)?),
            "depth" => cfg.depth = parse_num("depth", &v)?,
            "samples" => cfg.samples = parse_num("samples", &v)?,
            "seed" => cfg.seed = parse_num("seed", &v)?,
            "precision" => cfg.precision = parse_precision(&v)?,
            "xmax" => cfg.xmax = parse_f64("xmax", &v)?,
            "csv" => cfg.csv = Some(v),
            "out" => cfg.out = Some(v),
            other => return Err(config_err(format!("unknown key {other:?}"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sine_and_coefficient_spellings_agree() {
        let a = parse_config("alpha=1\nbeta=0").unwrap();
        let b = parse_config("coeffs=-0.5,0,0.5").unwrap();
        assert_eq!(a.polynomial().unwrap(), b.polynomial().unwrap());
        assert_eq!(a.r, 0.125);
        assert_eq!(b.r, 0.125);
        assert_eq!((a.depth, a.samples, a.seed), (3, 4096, 1));
        assert_eq!(a.constants().unwrap().c1, 536.0 * 2f64.sqrt() + 1.0);
    }

    #[test]
    fn r_above_quarter_degree_is_rejected() {
        let err = parse_config("r=0.5, coeffs=-0.5,0,0.5").unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "r", value, .. } if value == 0.5), "{err}");
    }

    #[test]
    fn default_r_for_higher_degree() {
        let cfg = parse_config("coeffs=4,2,0,1").unwrap();
        assert_eq!(cfg.r, 1.0 / 12.0);
    }

    #[test]
    fn exactly_one_polynomial_spelling() {
        assert!(parse_config("depth=2").is_err());
        assert!(parse_config("alpha=1\ncoeffs=1,0,1").is_err());
        assert!(parse_config("beta=1").is_err());
        assert!(parse_config("alpha=1\nbogus=3").is_err());
    }

    #[test]
    fn overrides_replace_the_polynomial() {
        let cfg = parse_config_with("alpha=2\nbeta=1\nseed=5", &[("coeffs", "-0.5,0,0.5".into())]).unwrap();
        assert_eq!(cfg.poly, PolySpec::Coeffs(vec![c(-0.5, 0.0), c(0.0, 0.0), c(0.5, 0.0)]));
        assert_eq!(cfg.seed, 5);
        let cfg = parse_config_with("coeffs=1,0,1\nseed=5", &[("seed", "6".into())]).unwrap();
        assert_eq!(cfg.seed, 6);
    }

    #[test]
    fn later_keys_win() {
        let cfg = parse_config("alpha=1, depth=1\ndepth=2 # comment").unwrap();
        assert_eq!(cfg.depth, 2);
    }

    #[test]
    fn complex_literals() {
        assert_eq!(parse_complex("1").unwrap(), c(1.0, 0.0));
        assert_eq!(parse_complex("2i").unwrap(), c(0.0, 2.0));
        assert_eq!(parse_complex("-i").unwrap(), c(0.0, -1.0));
        assert_eq!(parse_complex("1.5-2e-3i").unwrap(), c(1.5, -2e-3));
        assert_eq!(parse_complex("-1e+2+3i").unwrap(), c(-100.0, 3.0));
        assert!(parse_complex("").is_err());
        assert!(parse_complex("-").is_err());
        assert!(parse_complex("++2i").is_err());
        assert!(parse_complex("1+2j").is_err());
        assert!(parse_complex("inf").is_err());
    }

    #[test]
    fn precision_spellings() {
        assert_eq!(parse_precision("arbitrary").unwrap(), Precision::Arbitrary { bits: 2048 });
        assert_eq!(parse_precision("arbitrary:512").unwrap(), Precision::Arbitrary { bits: 512 });
        assert_eq!(parse_precision("Double").unwrap(), Precision::Double);
        assert!(parse_precision("quad").is_err());
    }

    #[test]
    fn overrides_are_checked() {
        assert!(parse_config("alpha=1\nc1=1").is_err());
        assert!(parse_config("alpha=1\nxstar=20").is_err());
        assert!(parse_config("alpha=1\nx0=1").is_err());
        let cfg = parse_config("alpha=1\nxstar=30").unwrap();
        assert_eq!(cfg.constants().unwrap().x_star, 30.0);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e3f64..1e3, Just(0.0), Just(-0.0), (-300i32..300).prop_map(|e| 1.7 * 10f64.powi(e))]
    }

    proptest! {
        #[test]
        fn complex_format_round_trips(re in finite(), im in finite()) {
            let z = c(re, im);
            let back = parse_complex(&format_complex(z)).unwrap();
            prop_assert_eq!(back.re.to_bits(), z.re.to_bits());
            prop_assert_eq!(back.im.to_bits(), z.im.to_bits());
        }

        #[test]
        fn emit_round_trips(
            sine in any::<bool>(),
            re in 0.5f64..3.0,
            im in -1.0f64..1.0,
            depth in 0usize..=4,
            samples in 1usize..100_000,
            seed in any::<u64>(),
            bits in prop_oneof![Just(None), (64usize..4096).prop_map(Some)],
            xstar in prop_oneof![Just(None), (30.0f64..60.0).prop_map(Some)],
            x0 in prop_oneof![Just(None), (4.2f64..50.0).prop_map(Some)],
            csv in prop_oneof![Just(None), Just(Some("out/table.csv".to_string()))],
        ) {
            let poly = if sine {
                PolySpec::SineFamily { alpha: c(re, im), beta: c(im, 0.25) }
            } else {
                PolySpec::Coeffs(vec![c(-re, 0.0), c(0.0, im), c(re, 0.0)])
            };
            let mut cfg = RunConfig::new(poly).unwrap();
            cfg.depth = depth;
            cfg.samples = samples;
            cfg.seed = seed;
            cfg.precision = bits.map_or(Precision::Extended, |bits| Precision::Arbitrary { bits });
            cfg.xstar = xstar;
            cfg.x0 = x0;
            cfg.csv = csv;
            prop_assume!(cfg.validate().is_ok());
            prop_assert_eq!(parse_config(&cfg.emit()).unwrap(), cfg);
        }
    }
}
