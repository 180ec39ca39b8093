use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the engine can report.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    NonFinite {
        op: &'static str,
    },
    /// A gene whose mean expression is zero has no coefficient of variation.
    ZeroMeanGene,
    EmptyMatrix,
    /// Zero-negation was asked to run on data that already holds negatives.
    NotRaw {
        row: usize,
        col: usize,
    },
    NegativeValue {
        row: usize,
        col: usize,
        value: f64,
    },
    DuplicateGene(String),
    InvalidNegation(f64),
    InvalidRange {
        beta_start: f64,
        beta_end: f64,
    },
    StepOutOfRange {
        t: usize,
        max: usize,
    },
    InvalidEta(f64),
    NegativeRadicand {
        value: f64,
    },
    InvalidSteps {
        n_steps: usize,
        max: usize,
    },
    InvalidConfig(String),
    EmptySample,
    DimensionMismatch {
        left: usize,
        right: usize,
    },
    DegenerateRange,
    ConvergenceFailure {
        iterations: usize,
    },
    InvalidSpec(String),
    /// Failure inside the training loop, tagged with where it happened.
    Training {
        epoch: usize,
        step: usize,
        source: Box<Error>,
    },
    /// Failure inside a sampling chain, tagged with the timestep.
    Sampling {
        t: usize,
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by
    /// bad input or configuration.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. }
            | Error::NegativeRadicand { .. }
            | Error::ConvergenceFailure { .. } => true,
            Error::Training { source, .. } | Error::Sampling { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => {
                write!(f, "shape mismatch in {op}: {left:?} vs {right:?}")
            }
            Error::NonFinite { op } => write!(f, "non-finite value produced by {op}"),
            Error::ZeroMeanGene => f.write_str("gene has zero mean expression"),
            Error::EmptyMatrix => f.write_str("matrix has no cells or no genes"),
            Error::NotRaw { row, col } => {
                write!(f, "matrix is not raw: negative value at row {row}, column {col}")
            }
            Error::NegativeValue { row, col, value } => {
                write!(f, "negative value {value} at row {row}, column {col}")
            }
            Error::DuplicateGene(name) => write!(f, "duplicate gene name `{name}`"),
            Error::InvalidNegation(n) => write!(f, "negation value must be negative, got {n}"),
            Error::InvalidRange { beta_start, beta_end } => write!(
                f,
                "invalid beta range: need 0 < beta_start < beta_end < 1, got {beta_start}..{beta_end}"
            ),
            Error::StepOutOfRange { t, max } => write!(f, "timestep {t} outside 1..={max}"),
            Error::InvalidEta(eta) => write!(f, "eta must lie in [0, 1], got {eta}"),
            Error::NegativeRadicand { value } => {
                write!(f, "negative radicand {value} in DDIM update")
            }
            Error::InvalidSteps { n_steps, max } => {
                write!(f, "step count {n_steps} outside 1..={max}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::EmptySample => f.write_str("empty sample"),
            Error::DimensionMismatch { left, right } => {
                write!(f, "dimension mismatch: {left} vs {right}")
            }
            Error::DegenerateRange => f.write_str("pooled range is degenerate (min == max)"),
            Error::ConvergenceFailure { iterations } => {
                write!(f, "power iteration did not converge in {iterations} iterations")
            }
            Error::InvalidSpec(msg) => write!(f, "invalid generator spec: {msg}"),
            Error::Training { epoch, step, source } => {
                write!(f, "training failed at epoch {epoch}, step {step}: {source}")
            }
            Error::Sampling { t, source } => write!(f, "sampling failed at t = {t}: {source}"),
        }
    }
}

impl core::error::Error for Error {}
