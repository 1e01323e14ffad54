use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Core(#[from] twinfid_core::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, IoError>;

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io { path: path.into(), source }
    }

    /// Stable snake_case name for machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        use twinfid_core::Error as E;
        match self {
            IoError::Io { .. } => "io",
            IoError::Json { .. } => "json",
            IoError::Csv { .. } => "csv",
            IoError::MissingColumn(_) => "missing_column",
            IoError::Format(_) => "format",
            IoError::Config(_) => "config",
            IoError::Core(e) => match e {
                E::InvalidMdp(_) => "invalid_mdp",
                E::IndexOutOfRange { .. } => "index_out_of_range",
                E::InvalidArgument(_) => "invalid_argument",
                E::NotConverged { .. } => "not_converged",
                E::InfeasibleMass { .. } => "infeasible_mass",
                E::PivotLimit(_) => "pivot_limit",
                E::ActionSpaceMismatch { .. } => "action_space_mismatch",
                E::DiscountMismatch { .. } => "discount_mismatch",
                E::ShapeMismatch(_) => "shape_mismatch",
                E::EmptyBatch => "empty_batch",
                E::SpecTooLarge { .. } => "spec_too_large",
                E::EmptyPool => "empty_pool",
                E::Degenerate(_) => "degenerate",
            },
        }
    }

    pub fn is_not_converged(&self) -> bool {
        matches!(self, IoError::Core(twinfid_core::Error::NotConverged { .. }))
    }
}
