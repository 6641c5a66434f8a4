use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// A violated geometry or magnet invariant, reported by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryViolation {
    NonPositive(&'static str),
    StubExceedsOuterRadius,
    StubExceedsOuterHeight,
    MagnetExceedsStubRadius,
}

impl fmt::Display for GeometryViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NonPositive(name) => write!(f, "{name} must be > 0"),
            Self::StubExceedsOuterRadius => f.write_str("stub exceeds outer radius"),
            Self::StubExceedsOuterHeight => f.write_str("stub exceeds outer height"),
            Self::MagnetExceedsStubRadius => f.write_str("magnet exceeds stub radius"),
        }
    }
}

struct Violations<'a>(&'a [GeometryViolation]);

impl fmt::Display for Violations<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid geometry: {}", Violations(.0))]
    Geometry(Vec<GeometryViolation>),

    #[error("normal state: penetration depth undefined")]
    NormalState,

    #[error("lossless wall: Q undefined")]
    LosslessWall,

    #[error("mode propagates; no evanescent decay")]
    Propagating,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("eigensolver did not converge (residual {residual:.3e})")]
    NoConvergence { residual: f64 },

    #[error("frequency outside calibrated band")]
    OutOfBand,

    #[error("ambiguous inversion: {} candidate intervals", .intervals.len())]
    AmbiguousInversion { intervals: Vec<(f64, f64)> },

    #[error("bistable operating point (iterates {first:.6e} and {second:.6e})")]
    Bistable { first: f64, second: f64 },

    #[error("no transition found")]
    NoTransition,

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }
}
