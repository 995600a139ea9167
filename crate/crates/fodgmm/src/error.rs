//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A unit is missing one or more periods, so the panel is not balanced.
    #[error("unbalanced panel: unit {unit} has {found} periods, expected {expected}")]
    UnbalancedPanel {
        unit: String,
        found: usize,
        expected: usize,
    },

    /// Two rows map to the same (unit, period) cell.
    #[error("duplicate cell: unit {unit}, period {period} appears more than once")]
    DuplicateCell { unit: String, period: i64 },

    /// A row could not be parsed into the expected columns.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    /// The series is too short for the requested operation.
    #[error("too few periods: have {have}, need at least {need}")]
    TooFewPeriods { have: usize, need: usize },

    /// An instrument plan asks for more instruments than the data can support.
    #[error("infeasible instrument plan at t={t}: q_t={q} exceeds n={n}")]
    InfeasiblePlan { t: usize, q: usize, n: usize },

    /// An instrument plan yields fewer instruments than regressors.
    #[error("instrument plan under-identified at t={t}: q_t={q} < K={k}")]
    UnderIdentified { t: usize, q: usize, k: usize },

    /// A realized instrument matrix failed the numerical rank check.
    #[error("rank-deficient instrument matrix at t={t}")]
    RankDeficient { t: usize },

    /// The moment matrix is not numerically positive definite.
    #[error("singular moment matrix")]
    SingularMoment,

    /// The GMM weighting matrix is not numerically positive definite.
    #[error("singular weighting matrix")]
    SingularWeight,

    /// The lag polynomial has a root on or inside the unit circle.
    #[error("non-stationary lag polynomial")]
    NonStationary,

    /// The requested baseline estimator is absent from the summary.
    #[error("missing baseline estimator: {0}")]
    MissingBaseline(String),

    /// A simulation cell cannot be run with the given plan and sample size.
    #[error("infeasible cell: {0}")]
    InfeasibleCell(String),

    /// Invalid configuration (experiment spec, design, or CLI payload).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code for this error, used by the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnbalancedPanel { .. } => "unbalanced_panel",
            Error::DuplicateCell { .. } => "duplicate_cell",
            Error::Parse { .. } => "parse_error",
            Error::TooFewPeriods { .. } => "too_few_periods",
            Error::InfeasiblePlan { .. } => "infeasible_plan",
            Error::UnderIdentified { .. } => "under_identified",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::SingularMoment => "singular_moment",
            Error::SingularWeight => "singular_weight",
            Error::NonStationary => "non_stationary",
            Error::MissingBaseline(_) => "missing_baseline",
            Error::InfeasibleCell(_) => "infeasible_cell",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Io(_) => "io_error",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
