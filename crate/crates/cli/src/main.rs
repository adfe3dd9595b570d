//! `fastescape`: constants, orbit certification, lemma checks, area census
//! and strip rendering for `f(z) = P(e^z)/e^z`, with JSON on stdout.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fastescape::census::{sample_square_density, strip_census, write_rows_csv, CensusParams};
use fastescape::config::{parse_config_with, RunConfig};
use fastescape::distortion::{parse_lemmas, run_lemmas, LemmaParams};
use fastescape::render::{render_strip, Palette, RenderSpec, Window};
use fastescape::{classify_orbit_with, Execution, GridSquare, ThresholdTower, VerdictStatus};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "fastescape", version, about = "Fast escaping set tools for f(z) = P(e^z)/e^z")]
struct Cli {
    /// key=value configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run on one thread, in input order.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct PolyArgs {
    /// Coefficients a0,...,aN of P, each as re+imi.
    #[arg(long, allow_hyphen_values = true)]
    poly: Option<String>,
    /// Sine family alpha sin(z + beta).
    #[arg(long, allow_hyphen_values = true, conflicts_with = "poly")]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true, requires = "alpha")]
    beta: Option<String>,
    /// Grid side.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long = "x-star")]
    x_star: Option<f64>,
    /// double, extended or arbitrary[:BITS].
    #[arg(long)]
    precision: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Every constant behind the area bound.
    Constants {
        #[command(flatten)]
        poly: PolyArgs,
    },
    /// Depth-k certification of one orbit.
    Classify {
        #[command(flatten)]
        poly: PolyArgs,
        /// Starting point as RE,IM.
        #[arg(long, allow_hyphen_values = true)]
        z0: String,
        #[arg(long)]
        depth: Option<usize>,
        /// Start of the threshold tower (default x*).
        #[arg(long)]
        x0: Option<f64>,
    },
    /// Sampled density of certified points in one grid square.
    Density {
        #[command(flatten)]
        poly: PolyArgs,
        /// Grid indices m,n of the square [m r, (m+1) r] x [n r, (n+1) r].
        #[arg(long, allow_hyphen_values = true)]
        square: String,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Non-certified area of the period strip plus the analytic tail.
    Census {
        #[command(flatten)]
        poly: PolyArgs,
        #[arg(long)]
        xmax: Option<f64>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Per-square table.
        #[arg(long)]
        csv: Option<String>,
        /// Lower edge of the strip.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        offset: f64,
    },
    /// Randomized checks of the distortion lemmas.
    Lemmas {
        #[command(flatten)]
        poly: PolyArgs,
        /// ln, chain, mq, pp, estp1, univalent (comma separated) or all.
        #[arg(long, default_value = "all")]
        which: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long = "circle-samples")]
        circle_samples: Option<usize>,
    },
    /// Escape-depth image of a strip as PPM.
    Render {
        #[command(flatten)]
        poly: PolyArgs,
        /// re0,re1,im0,im1.
        #[arg(long, allow_hyphen_values = true, default_value = "-8,8,0,6.283185307179586")]
        window: String,
        /// WIDTHxHEIGHT.
        #[arg(long, default_value = "800x314")]
        size: String,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        out: Option<String>,
        #[arg(long = "max-iter", default_value_t = fastescape::render::DEFAULT_MAX_ITER)]
        max_iter: usize,
        #[arg(long = "conjugate-view")]
        conjugate_view: bool,
        #[arg(long = "fail-depth-palette")]
        fail_depth_palette: bool,
    },
}

/// Collects flag values as config overrides.
#[derive(Default)]
struct Overrides(Vec<(&'static str, String)>);

impl Overrides {
    fn set(&mut self, key: &'static str, v: Option<impl ToString>) {
        if let Some(v) = v {
            self.0.push((key, v.to_string()));
        }
    }

    fn poly(&mut self, a: &PolyArgs) {
        self.set("coeffs", a.poly.as_ref());
        self.set("alpha", a.alpha.as_ref());
        if a.alpha.is_some() {
            self.set("beta", Some(a.beta.as_deref().unwrap_or("0")));
        }
        self.set("r", a.r);
        self.set("c1", a.c1);
        self.set("xstar", a.x_star);
        self.set("precision", a.precision.as_ref());
    }
}

fn resolve(path: Option<&PathBuf>, overrides: &Overrides) -> Result<RunConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    Ok(parse_config_with(&text, &overrides.0)?)
}

fn pair<T: std::str::FromStr>(text: &str, sep: char, what: &str) -> Result<(T, T)> {
    let parts: Vec<&str> = text.split(sep).map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => bail!("{what}: cannot parse {text:?}"),
        },
        _ => bail!("{what}: expected two values separated by {sep:?}, found {text:?}"),
    }
}

/// Serializes `body` as an object with the resolved config attached.
fn with_config(body: impl Serialize, cfg: &RunConfig) -> Result<Value> {
    let mut v = serde_json::to_value(body)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("config".into(), serde_json::to_value(cfg)?);
            Ok(v)
        }
        None => Ok(json!({ "config": cfg, "result": v })),
    }
}

fn verdict_json(status: VerdictStatus, margins: &[f64]) -> Value {
    let (name, depth) = match status {
        VerdictStatus::CertifiedToDepth(k) => ("CertifiedToDepth", k),
        VerdictStatus::FailedAtDepth(j) => ("FailedAtDepth", j),
        VerdictStatus::IndeterminateAngle(j) => ("IndeterminateAngle", j),
    };
    let mut v = json!({ "status": name, "depth": depth, "margins": margins });
    if let VerdictStatus::FailedAtDepth(j) = status {
        v["failDepth"] = json!(j);
    }
    v
}

/// Runs one subcommand; returns its JSON and whether its checks passed.
fn run(cli: Cli) -> Result<(Value, bool)> {
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let cfg_path = cli.config.as_ref();
    let mut o = Overrides::default();
    match cli.command {
        Command::Constants { poly } => {
            o.poly(&poly);
            let cfg = resolve(cfg_path, &o)?;
            let k = cfg.constants()?;
            let mut v = with_config(k, &cfg)?;
            v["rho"] = json!(k.rhos(k.x_star, 10)?);
            Ok((v, true))
        }
        Command::Classify { poly, z0, depth, x0 } => {
            o.poly(&poly);
            o.set("depth", depth);
            o.set("x0", x0);
            let cfg = resolve(cfg_path, &o)?;
            let p = cfg.polynomial()?;
            let x0 = match cfg.x0 {
                Some(x) => x,
                None => cfg.constants()?.x_star,
            };
            let (re, im): (f64, f64) = pair(&z0, ',', "z0")?;
            let verdict =
                classify_orbit_with(&p, Complex64::new(re, im), cfg.depth, &ThresholdTower::new(x0)?, cfg.precision);
            let mut v = verdict_json(verdict.status, &verdict.margins);
            v["x0"] = json!(x0);
            v["config"] = serde_json::to_value(&cfg)?;
            Ok((v, true))
        }
        Command::Density { poly, square, depth, samples, seed } => {
            o.poly(&poly);
            o.set("depth", depth);
            o.set("samples", samples);
            o.set("seed", seed);
            let cfg = resolve(cfg_path, &o)?;
            let (m, n): (i64, i64) = pair(&square, ',', "square")?;
            let k = cfg.constants()?;
            let report = sample_square_density(
                &cfg.polynomial()?,
                &k,
                GridSquare::new(m, n, cfg.r),
                cfg.depth,
                cfg.samples,
                cfg.seed,
                cfg.precision,
                exec,
            )?;
            Ok((with_config(report, &cfg)?, report.pass))
        }
        Command::Census { poly, xmax, depth, samples, seed, csv, offset } => {
            o.poly(&poly);
            o.set("xmax", xmax);
            o.set("depth", depth);
            o.set("samples", samples);
            o.set("seed", seed);
            o.set("csv", csv);
            let cfg = resolve(cfg_path, &o)?;
            let params = CensusParams {
                offset,
                r: cfg.r,
                x_max: cfg.xmax,
                depth: cfg.depth,
                samples: cfg.samples,
                seed: cfg.seed,
                precision: cfg.precision,
            };
            let (census, rows) = strip_census(&cfg.polynomial()?, &cfg.constants()?, &params, exec)?;
            if let Some(path) = &cfg.csv {
                let file = File::create(path).with_context(|| format!("creating {path}"))?;
                write_rows_csv(&rows, BufWriter::new(file))?;
            }
            Ok((with_config(census, &cfg)?, census.total_upper < census.paper_bound))
        }
        Command::Lemmas { poly, which, seed, trials, chains, circle_samples } => {
            o.poly(&poly);
            o.set("seed", seed);
            let cfg = resolve(cfg_path, &o)?;
            let p = cfg.polynomial()?;
            let defaults = LemmaParams::default();
            let params = LemmaParams {
                trials: trials.unwrap_or(defaults.trials),
                chains: chains.unwrap_or(defaults.chains),
                circle_samples: circle_samples.unwrap_or(defaults.circle_samples),
                seed: cfg.seed,
                ..defaults
            };
            let reports = run_lemmas(&p, cfg.r, &parse_lemmas(&which)?, &params, exec)?;
            let pass = reports.iter().all(|r| r.passed());
            Ok((json!({ "config": cfg, "params": params, "reports": reports }), pass))
        }
        Command::Render { poly, window, size, depth, out, max_iter, conjugate_view, fail_depth_palette } => {
            o.poly(&poly);
            o.set("depth", depth);
            o.set("out", out);
            let cfg = resolve(cfg_path, &o)?;
            let p = cfg.polynomial()?;
            let w: Vec<f64> = window
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .with_context(|| format!("window: cannot parse {window:?}"))?;
            let [re0, re1, im0, im1] = w[..] else { bail!("window: expected re0,re1,im0,im1") };
            let (width, height): (usize, usize) = pair(&size.to_ascii_lowercase(), 'x', "size")?;
            let mut spec = RenderSpec::new(Window::new(re0, re1, im0, im1)?, width, height, cfg.depth);
            spec.max_iter = max_iter;
            spec.conjugate_view = conjugate_view;
            spec.shift = p.sine_beta();
            if fail_depth_palette {
                spec.palette = Palette::FailDepth;
            }
            let img = render_strip(&p, &spec, exec)?;
            let path = cfg.out.clone().unwrap_or_else(|| "strip.ppm".into());
            let file = File::create(&path).with_context(|| format!("creating {path}"))?;
            img.write_ppm(BufWriter::new(file))?;
            let white = img.white_pixels();
            let v = json!({
                "config": cfg,
                "spec": spec,
                "out": path,
                "whitePixels": white,
                "whiteArea": white as f64 * spec.pixel_area(),
            });
            Ok((v, true))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((v, pass)) => {
            let text = serde_json::to_string_pretty(&v).expect("JSON values serialize");
            // A closed pipe downstream is not an error of this program.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
