use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {0} lies outside [0, 1]")]
    Domain(f64),

    #[error("slope must be greater than 1, got {0}")]
    Slope(f64),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid step density: {0}")]
    InvalidDensity(String),

    #[error("density has non-positive integral {0}")]
    DegenerateDensity(f64),

    #[error("density expectation {0} is below the admissible minimum")]
    DegenerateExpectation(f64),

    #[error("self-consistent slope {0} is not greater than 1")]
    SlopeOutOfRange(f64),

    #[error("ergodic estimate undefined: orbit sum is {0}")]
    Estimation(f64),

    #[error("threshold undefined: F(1/E - 2) = {0} at beta = {1}")]
    ThresholdUndefined(f64, f64),

    #[error("window [{t0}, {t1}] is not inside the available time range 0..={last}")]
    Window { t0: usize, t1: usize, last: usize },

    #[error("trajectory {index} failed at step {step}: {source}")]
    Trajectory {
        index: usize,
        step: usize,
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_slope(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 1.0 {
        Ok(())
    } else {
        Err(Error::Slope(beta))
    }
}
