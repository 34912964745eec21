use thiserror::Error;

/// Errors raised across the synthesis, analysis and simulation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("singular matrix (pivot {pivot:.3e} below threshold {threshold:.3e})")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("linear solve residual {residual:.3e} exceeds tolerance")]
    ResidualTooLarge { residual: f64 },

    #[error("QR iteration did not converge; {deflated} of {n} eigenvalues deflated")]
    NoConvergence { deflated: usize, n: usize },

    #[error("pair is not stabilizable: found {stable} stable Hamiltonian eigenvalues, need {needed}")]
    NotStabilizable { stable: usize, needed: usize },

    #[error("Riccati residual {residual:.3e} exceeds bound {bound:.3e}")]
    RiccatiResidual { residual: f64, bound: f64 },

    #[error("closed loop stability margin {margin:.3e} below required {required:.3e}")]
    InsufficientMargin { margin: f64, required: f64 },

    #[error("invalid plant: {0}")]
    InvalidPlant(String),

    #[error("transfer function has a pole at the evaluation point")]
    PoleHit,

    #[error("frequencies are not integer multiples of the base frequency: {0}")]
    Commensurability(String),

    #[error("record does not span an integer number of periods: {0}")]
    NonIntegerPeriod(String),

    #[error("harmonic content above Nyquist: {0}")]
    NyquistViolation(String),

    #[error("invalid design parameters: {0}")]
    InvalidSpec(String),

    #[error("unstable auxiliary pole {re} + {im}j")]
    UnstableAuxiliaryPole { re: f64, im: f64 },

    #[error("realization is not in canonical form: {0}")]
    RealizationNotCanonical(String),

    #[error("stacked interpolation system is singular (condition estimate {condition:.3e})")]
    StackedSystemSingular { condition: f64 },

    #[error("filter relative degree {filter} is below plant relative degree {plant}")]
    CausalityViolation { filter: usize, plant: usize },

    #[error("controller transfer cross-check failed: relative error {0:.3e}")]
    AssemblyCheck(f64),

    #[error("invalid quasi-polynomial: {0}")]
    InvalidQuasiPolynomial(String),

    #[error("invalid spectrum region: {0}")]
    InvalidRegion(String),

    #[error("grid too coarse: argument principle counts {expected} roots, scan found {found}")]
    GridTooCoarse { expected: i64, found: usize },

    #[error("simulation unstable at t = {t:.4} s (|y| = {magnitude:.3e})")]
    UnstableSimulation { t: f64, magnitude: f64 },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Whether the failure is a validation problem with the inputs (as opposed
    /// to a numerical breakdown during computation).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::NonFinite(_)
                | Error::InvalidPlant(_)
                | Error::Commensurability(_)
                | Error::NonIntegerPeriod(_)
                | Error::NyquistViolation(_)
                | Error::InvalidSpec(_)
                | Error::UnstableAuxiliaryPole { .. }
                | Error::CausalityViolation { .. }
                | Error::InvalidQuasiPolynomial(_)
                | Error::InvalidRegion(_)
                | Error::InvalidSignal(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
