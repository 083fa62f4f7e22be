//! Error types shared across the library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// The covariant tangent vectors degenerate below the chart's `delta` bound.
    #[error("chart singular at ({x1}, {x2}): |a1 ^ a2| = {det} < delta = {delta}")]
    ChartSingular {
        x1: f64,
        x2: f64,
        det: f64,
        delta: f64,
    },

    /// The fattening map loses orientation somewhere on the evaluation grid.
    #[error("thickness h = {h} too large: min det grad(Psi) = {min_det} <= 0 on the grid")]
    ThicknessTooLarge { h: f64, min_det: f64 },

    /// A per-chart specialized formula was requested for a chart it does not cover.
    #[error("unsupported chart for {operation}: {chart}")]
    UnsupportedChart {
        operation: &'static str,
        chart: String,
    },

    /// The line search could not find an admissible step above machine precision.
    #[error("line search stalled at iteration {iteration}: no admissible step above {step_floor}")]
    LineSearchStalled { iteration: usize, step_floor: f64 },

    /// The objective evaluated to NaN or infinity during minimization.
    #[error("non-finite energy encountered at iteration {iteration}")]
    NonFiniteEnergy { iteration: usize },

    /// All fit residuals sit below the resolution floor: the two routes agree
    /// exactly and a slope is meaningless.
    #[error("degenerate fit: all residuals <= {max_residual:e} (exact agreement)")]
    DegenerateFit { max_residual: f64 },

    /// A validated value failed its construction invariant.
    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    /// A configuration document failed to parse or validate.
    #[error("invalid configuration key '{key}': {message}")]
    ConfigInvalid { key: String, message: String },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
