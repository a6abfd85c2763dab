use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the field domain")]
    Domain { x: f64, y: f64 },
    #[error("Lie derivative of order {order} needs an exact polynomial form")]
    PrecisionRequired { order: usize },
    #[error("all Lie derivatives up to order {max_order} vanish within tolerance")]
    UnresolvedContact { max_order: usize },
    #[error("point is not on the switching manifold (|h| = {residual:e})")]
    NotOnSigma { residual: f64 },
    #[error("degenerate denominator ({value:e}) in {context}")]
    DegenerateDenominator { context: &'static str, value: f64 },
    #[error("value {value} is outside the admissible range {range}")]
    OutOfRange { value: f64, range: &'static str },
    #[error("transition function has phi^({order})(1) = 0; class mismatch")]
    ClassMismatch { order: usize },
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("maximum number of steps ({steps}) exceeded at t = {t}")]
    TooManySteps { steps: usize, t: f64 },
    #[error("trajectory left the domain at ({x}, {y})")]
    DomainExit { x: f64, y: f64 },
    #[error("no section crossing within the time limit")]
    NoCrossing,
    #[error("trajectory grazes the section at t = {t} without crossing")]
    TangentialGraze { t: f64, x: f64, y: f64 },
    #[error("system is not in canonical form: {0}")]
    NotCanonical(&'static str),
    #[error("condition violated: {0}")]
    ConditionViolated(String),
    #[error("transient did not decay before x = {x}")]
    TransientNotDecayed { x: f64 },
    #[error("trajectory did not exit the band through the upper boundary")]
    NoExit,
    #[error("no root in the bracket [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
    #[error("trajectory left the canonical window at ({x}, {y})")]
    LeftWindow { x: f64, y: f64 },
    #[error("trajectory re-entered the lower region at x = {x}")]
    SlidingCapture { x: f64 },
    #[error("non-positive quantity {value} cannot enter a log-log fit")]
    NonPositiveQuantity { value: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("trajectory does not return to the section")]
    NoReturn,
    #[error("too many band switches ({0}) in a single flow")]
    MaxRevolutions(usize),
    #[error("return map does not bracket a fixed point on [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("fixed-point search did not converge in {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("g has valuation {found}, at least {required} required")]
    BadValuation { found: usize, required: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag used by the CLI error object.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "DomainError",
            Error::PrecisionRequired { .. } => "PrecisionWarning",
            Error::UnresolvedContact { .. } => "UnresolvedContact",
            Error::NotOnSigma { .. } => "NotOnSigma",
            Error::DegenerateDenominator { .. } => "DegenerateDenominator",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::ClassMismatch { .. } => "ClassMismatch",
            Error::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            Error::TooManySteps { .. } => "TooManySteps",
            Error::DomainExit { .. } => "DomainExit",
            Error::NoCrossing => "NoCrossing",
            Error::TangentialGraze { .. } => "TangentialGraze",
            Error::NotCanonical(_) => "NotCanonical",
            Error::ConditionViolated(_) => "ConditionViolated",
            Error::TransientNotDecayed { .. } => "TransientNotDecayed",
            Error::NoExit => "NoExit",
            Error::NoRoot { .. } => "NoRoot",
            Error::LeftWindow { .. } => "LeftWindow",
            Error::SlidingCapture { .. } => "SlidingCapture",
            Error::NonPositiveQuantity { .. } => "NonPositiveQuantity",
            Error::InsufficientData(_) => "InsufficientData",
            Error::NoReturn => "NoReturn",
            Error::MaxRevolutions(_) => "MaxRevolutions",
            Error::NoBracket { .. } => "NoBracket",
            Error::NotConverged { .. } => "NotConverged",
            Error::BadValuation { .. } => "BadValuation",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Parse { .. } => "ParseError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
