//! Escape-depth images of period strips, written as binary PPM.

use std::f64::consts::{LN_2, TAU};
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Classifier, EscapeOutcome, Precision};
use crate::exec::Execution;
use crate::magnitude::ThresholdTower;
use crate::poly::Polynomial;
use crate::{Error, Result};

/// Axis-parallel viewing rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub re0: f64,
    pub re1: f64,
    pub im0: f64,
    pub im1: f64,
}

impl Window {
    pub fn new(re0: f64, re1: f64, im0: f64, im1: f64) -> Result<Self> {
        for (name, lo, hi) in [("re1", re0, re1), ("im1", im0, im1)] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidParameter { name, value: hi, range: format!("> {lo}") });
            }
        }
        Ok(Self { re0, re1, im0, im1 })
    }

    pub fn area(&self) -> f64 {
        (self.re1 - self.re0) * (self.im1 - self.im0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Palette {
    #[default]
    Grayscale,
    /// Certified pixels coloured by the iterate at which certification happened.
    FailDepth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RenderSpec {
    pub window: Window,
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    /// Iterations allowed before a pixel is left undecided.
    pub max_iter: usize,
    pub palette: Palette,
    /// Display coordinates `zeta = i (z + shift)`, so the sine family shows
    /// its period along the real axis.
    pub conjugate_view: bool,
    pub shift: Complex64,
}

impl RenderSpec {
    pub fn new(window: Window, width: usize, height: usize, depth: usize) -> Self {
        Self {
            window,
            width,
            height,
            depth,
            max_iter: DEFAULT_MAX_ITER,
            palette: Palette::Grayscale,
            conjugate_view: false,
            shift: Complex64::new(0.0, 0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        Window::new(self.window.re0, self.window.re1, self.window.im0, self.window.im1)?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter { name: "size", value: 0.0, range: ">= 1x1".into() });
        }
        Ok(())
    }

    /// Dynamical-plane point at the centre of pixel `(col, row)`, row 0 on top.
    ///
    /// The coordinate along the period is measured from the window origin
    /// reduced mod `2 pi`, so windows a period apart see identical points.
    pub fn pixel_point(&self, col: usize, row: usize) -> Complex64 {
        let w = &self.window;
        let hx = (w.re1 - w.re0) / self.width as f64;
        let hy = (w.im1 - w.im0) / self.height as f64;
        let u = (col as f64 + 0.5) * hx;
        let v = (self.height - 1 - row) as f64 * hy + 0.5 * hy;
        if self.conjugate_view {
            // z = -i zeta - shift; Re zeta runs along Im z.
            let zeta = Complex64::new(w.re0.rem_euclid(TAU) + u, w.im0 + v);
            Complex64::new(zeta.im, -zeta.re) - self.shift
        } else {
            Complex64::new(w.re0 + u, w.im0.rem_euclid(TAU) + v)
        }
    }

    pub fn pixel_area(&self) -> f64 {
        self.window.area() / (self.width * self.height) as f64
    }
}

pub const DEFAULT_MAX_ITER: usize = 64;

const WHITE: [u8; 3] = [255; 3];
const GRAY: [u8; 3] = [160; 3];

/// Row-major RGB buffer, row 0 on top.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn pixel(&self, col: usize, row: usize) -> [u8; 3] {
        self.pixels[row * self.width + col]
    }

    pub fn white_pixels(&self) -> usize {
        self.pixels.iter().filter(|&&px| px == WHITE).count()
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for px in &self.pixels {
            out.extend_from_slice(px);
        }
        out
    }

    pub fn write_ppm(&self, mut out: impl Write) -> Result<()> {
        out.write_all(&self.to_ppm()).map_err(|e| Error::Io(e.to_string()))
    }
}

fn colour(outcome: EscapeOutcome, palette: Palette) -> [u8; 3] {
    match outcome {
        EscapeOutcome::Undecided => WHITE,
        EscapeOutcome::Indeterminate { .. } => GRAY,
        EscapeOutcome::Certified { iterations } => match palette {
            Palette::Grayscale => [(12 * iterations).min(110) as u8; 3],
            Palette::FailDepth => {
                const RAMP: [[u8; 3]; 6] =
                    [[20, 20, 60], [30, 60, 130], [20, 110, 110], [60, 130, 40], [150, 110, 20], [140, 40, 40]];
                RAMP[iterations.min(RAMP.len() - 1)]
            }
        },
    }
}

/// Renders the escape depth of each pixel centre.
///
/// Pixels whose orbit is certified to `depth` are dark, graded by the
/// iterate at which that happens; lost angles are mid-gray; pixels never
/// certified within `max_iter` iterations are white.
pub fn render_strip(p: &Polynomial, spec: &RenderSpec, exec: Execution) -> Result<Image> {
    spec.validate()?;
    let classifier = Classifier::new(p, ThresholdTower::new(6.0 * LN_2)?, Precision::Double);
    let rows: Vec<usize> = (0..spec.height).collect();
    let lines = exec.map(&rows, |&row| {
        (0..spec.width)
            .map(|col| colour(classifier.escape(spec.pixel_point(col, row), spec.depth, spec.max_iter), spec.palette))
            .collect::<Vec<_>>()
    });
    Ok(Image { width: spec.width, height: spec.height, pixels: lines.concat() })
}
