//! Error taxonomy shared by every module in the crate.
//!
//! Variants are grouped by who is at fault: `Config` for impossible model
//! descriptions, `Data` for observations the model cannot ingest, `Numeric`
//! for breakdowns inside the recursions (singular solves, non-finite
//! intermediates), and `DegenerateWeights` for importance-sample collapse.
//! Downstream binaries map these groups onto distinct process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// The model description itself is inconsistent (dimension mismatches,
    /// invalid parental structure, budgets smaller than mandatory members).
    #[error("config error: {0}")]
    Config(String),

    /// The observations cannot be used as given (non-finite values, negative
    /// counts, broken time grids).
    #[error("data error: {0}")]
    Data(String),

    /// A recursion produced something unusable: nonpositive forecast spread,
    /// non-finite intermediate, failed root solve.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A simultaneous system (I − Γ) lost invertibility. Separated from
    /// `Numeric` so samplers can recognize and redraw singular realizations.
    #[error("singular system: {0}")]
    Singular(String),

    /// Importance-sample recoupling collapsed: the effective sample size fell
    /// below the configured floor and no reweighted summary is trustworthy.
    #[error("degenerate importance weights: effective sample size {ess:.2} below floor {floor:.2}")]
    DegenerateWeights { ess: f64, floor: f64 },
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CoreError::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CoreError::Numeric(msg.into())
    }

    pub fn singular(msg: impl Into<String>) -> Self {
        CoreError::Singular(msg.into())
    }
}
