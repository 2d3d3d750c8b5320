use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },
    #[error("matrix is not unitary (defect {defect:.3e})")]
    NotUnitary { defect: f64 },
    #[error("matrix is singular or too ill-conditioned (smallest/largest singular value {ratio:.3e})")]
    SingularInput { ratio: f64 },
    #[error("{0} did not converge")]
    ConvergenceFailure(&'static str),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("bad family specification: {0}")]
    BadSpec(String),
    #[error("could not draw a family with gap >= {target} after {attempts} attempts")]
    GapNotAchievable { target: f64, attempts: usize },
    #[error("gap violation at t = {t:.6}: distance {margin:.3e} between level and spectrum")]
    GapViolation { t: f64, margin: f64 },
    #[error("ODE integration failed: {0}")]
    OdeToleranceFailure(String),
    #[error("holonomy determinant has modulus {modulus:.6}, expected 1")]
    NonUnitaryHolonomy { modulus: f64 },
    #[error("off-diagonal block leakage {leakage:.3e} exceeds {limit:.3e}")]
    BlockLeakage { leakage: f64, limit: f64 },
    #[error("phase integral has imaginary part {imag:.3e}")]
    NonRealPhase { imag: f64 },
    #[error("projector product is degenerate (|det| = {modulus:.3e}); use more points")]
    DegenerateProduct { modulus: f64 },
    #[error("monodromy would overflow: {0}")]
    OverflowRisk(String),
    #[error("operator is not invertible (smallest singular value of Id - T is {sigma:.3e})")]
    NonInvertibleOperator { sigma: f64 },
    #[error("spectral bound violated at t = {t:.6}, m = {m}: {detail}")]
    BoundViolation { t: f64, m: f64, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config error: {0}")]
    ConfigError(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with any context layers stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
