//! Quantitative tools for the fast escaping set of `f(z) = P(e^z)/e^z`:
//! the constants behind the area bound, finite-depth certification of fast
//! escape, numerical checks of the distortion lemmas, a per-strip area
//! census, and escape-depth rendering.

pub mod census;
pub mod config;
pub mod distortion;
pub mod dynamics;
pub mod exec;
pub mod grid;
pub mod magnitude;
pub mod poly;
pub mod real;
pub mod render;

pub use census::{build_nesting_level, sample_square_density, strip_census, CensusParams, DensityReport, StripCensus};
pub use config::{parse_config, parse_config_with, PolySpec, RunConfig};
pub use dynamics::{
    classify_orbit, classify_orbit_with, eval_f, eval_f_prime, log_derivative_ratio, Classifier, ExtendedComplex,
    OrbitVerdict, Precision, VerdictStatus,
};
pub use exec::Execution;
pub use grid::{GridSquare, Square};
pub use magnitude::{max_modulus_sequences, threshold_compare, Magnitude, ThresholdTower};
pub use poly::{sine_family_constants, ConstantSet, Polynomial};
pub use render::{render_strip, Image, Palette, RenderSpec, Window};

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid polynomial: {0}")]
    InvalidPolynomial(String),
    #[error("{name} = {value} is out of range: {range}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        range: String,
    },
    #[error("value exceeds the log-magnitude regime")]
    RegimeOverflow,
    #[error("derivative vanishes at {re}{im:+}i")]
    SingularDerivative { re: f64, im: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("chain broken at link {link}: square {square} is not inside the previous image")]
    ChainBroken { link: usize, square: String },
    #[error("square {0} is not contained in Lambda(x*)")]
    InadmissibleSquare(String),
    #[error("Newton inversion failed at {re}{im:+}i")]
    InversionFailure { re: f64, im: f64 },
    #[error("no shift found within 10^6 steps")]
    ShiftNotFound,
    #[error("degenerate pair: z and z' coincide")]
    DegeneratePair,
    #[error("nesting level {0} is not representable")]
    Unrepresentable(usize),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
