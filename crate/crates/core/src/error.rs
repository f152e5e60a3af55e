use thiserror::Error;

/// Errors raised by the numerical library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violates a structural invariant (negative density, mass mismatch, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// An adaptive quadrature ran out of refinements before meeting its tolerance.
    #[error("tolerance not met: estimate {estimate:e} with error {error:e} (requested {requested:e})")]
    ToleranceNotMet {
        estimate: f64,
        error: f64,
        requested: f64,
    },

    /// The shooting integration did not reach a zero of the density.
    #[error("no compact support: density still positive at r = {r_max} (central value {central})")]
    NoCompactSupport { central: f64, r_max: f64 },

    /// The ODE integrator could not make progress.
    #[error("integrator failure at r = {r}: {reason}")]
    Integrator { r: f64, reason: String },

    /// A root-finding bracket does not straddle the target.
    #[error(
        "bracket [{lo:e}, {hi:e}] gives masses [{mass_lo:e}, {mass_hi:e}], which do not straddle {target:e}; widen the bracket"
    )]
    NeedsWiderBracket {
        lo: f64,
        hi: f64,
        mass_lo: f64,
        mass_hi: f64,
        target: f64,
    },

    /// Sampling from a distribution function accepted too few proposals.
    #[error("sampler failure: acceptance rate {rate:e} below {floor:e}")]
    Sampler { rate: f64, floor: f64 },

    /// A solver error annotated with the central density that triggered it.
    #[error("solve failed at s = {s:e}: {source}")]
    AtCentralValue {
        s: f64,
        #[source]
        source: Box<Error>,
    },

    /// Malformed snapshot or configuration text.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Domain(_) | Error::Validation(_) | Error::Parse(_) => true,
            Error::AtCentralValue { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
