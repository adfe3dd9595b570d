//! Axis-parallel squares: the grid `Q_r^{m,n} = [mr,(m+1)r] x [nr,(n+1)r]`
//! and free-floating squares used as sampling domains.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// The grid square with lower-left corner `(m r, n r)` and side `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSquare {
    pub m: i64,
    pub n: i64,
    pub r: f64,
}

impl GridSquare {
    pub fn new(m: i64, n: i64, r: f64) -> Self {
        Self { m, n, r }
    }

    /// The grid square whose half-open cell `[mr,(m+1)r) x [nr,(n+1)r)` holds `z`.
    pub fn containing(z: Complex64, r: f64) -> Self {
        Self { m: (z.re / r).floor() as i64, n: (z.im / r).floor() as i64, r }
    }

    pub fn square(&self) -> Square {
        Square { re0: self.m as f64 * self.r, im0: self.n as f64 * self.r, side: self.r }
    }
}

impl fmt::Display for GridSquare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q[{},{}; r={}]", self.m, self.n, self.r)
    }
}

/// `[re0, re0+side] x [im0, im0+side]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub re0: f64,
    pub im0: f64,
    pub side: f64,
}

impl From<GridSquare> for Square {
    fn from(q: GridSquare) -> Self {
        q.square()
    }
}

impl fmt::Display for Square {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}] x [{}, {}]", self.re0, self.re0 + self.side, self.im0, self.im0 + self.side)
    }
}

impl Square {
    pub fn new(re0: f64, im0: f64, side: f64) -> Self {
        Self { re0, im0, side }
    }

    pub fn re1(&self) -> f64 {
        self.re0 + self.side
    }

    pub fn im1(&self) -> f64 {
        self.im0 + self.side
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(self.re0 + 0.5 * self.side, self.im0 + 0.5 * self.side)
    }

    pub fn diameter(&self) -> f64 {
        self.side * std::f64::consts::SQRT_2
    }

    pub fn area(&self) -> f64 {
        self.side * self.side
    }

    /// Counter-clockwise from the lower-left corner.
    pub fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re0, self.im0),
            Complex64::new(self.re1(), self.im0),
            Complex64::new(self.re1(), self.im1()),
            Complex64::new(self.re0, self.im1()),
        ]
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.re >= self.re0 && z.re <= self.re1() && z.im >= self.im0 && z.im <= self.im1()
    }

    /// `min |Re z|` over the square.
    pub fn min_abs_re(&self) -> f64 {
        if self.re0 >= 0.0 {
            self.re0
        } else if self.re1() <= 0.0 {
            -self.re1()
        } else {
            0.0
        }
    }

    /// `max |Re z|` over the square.
    pub fn max_abs_re(&self) -> f64 {
        self.re0.abs().max(self.re1().abs())
    }

    /// Whether the closed square lies in `Lambda(x) = {|Re z| > x}` up to a
    /// relative tolerance on the boundary.
    pub fn inside_lambda(&self, x: f64) -> bool {
        self.min_abs_re() >= x - 1e-12 * x.abs().max(1.0)
    }

    /// Lattice with `s` subdivisions per side, corners included, so that
    /// `lattice(s)` is a subset of `lattice(2s)`. `s = 0` gives the centre.
    pub fn lattice(&self, s: usize) -> Vec<Complex64> {
        if s == 0 {
            return vec![self.center()];
        }
        let h = self.side / s as f64;
        let mut pts = Vec::with_capacity((s + 1) * (s + 1));
        for j in 0..=s {
            for i in 0..=s {
                pts.push(Complex64::new(self.re0 + i as f64 * h, self.im0 + j as f64 * h));
            }
        }
        pts
    }

    /// Point at fractional position `(u, v) in [0,1]^2`.
    pub fn point(&self, u: f64, v: f64) -> Complex64 {
        Complex64::new(self.re0 + u * self.side, self.im0 + v * self.side)
    }

    /// `s x s` cell-centred points, the midpoint rule for area fractions.
    pub fn midpoints(&self, s: usize) -> Vec<Complex64> {
        let s = s.max(1);
        let h = 1.0 / s as f64;
        (0..s)
            .flat_map(|j| (0..s).map(move |i| ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h)))
            .map(|(u, v)| self.point(u, v))
            .collect()
    }

    /// Closed boundary as a polyline with spacing at most `step`.
    pub fn boundary(&self, step: f64) -> Vec<Complex64> {
        let per_side = ((self.side / step).ceil() as usize).max(1);
        let c = self.corners();
        let mut pts = Vec::with_capacity(4 * per_side + 1);
        for k in 0..4 {
            let (a, b) = (c[k], c[(k + 1) % 4]);
            for i in 0..per_side {
                pts.push(a + (b - a) * (i as f64 / per_side as f64));
            }
        }
        pts.push(c[0]);
        pts
    }
}
