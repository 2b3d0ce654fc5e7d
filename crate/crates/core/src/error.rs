use thiserror::Error;

/// Errors produced anywhere in the grasp pipeline.
///
/// Every variant maps to a short machine-readable [`Error::kind`] string that
/// the CLI and HTTP layers report verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value out of range: {0}")]
    Range(String),
    #[error("rotation not representable within half-range angles: {0}")]
    Unrepresentable(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no target: {0}")]
    NoTarget(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("patch error: {0}")]
    Patch(String),
    #[error("placement failed: {0}")]
    Placement(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no eligible target object in scene")]
    NoEligibleTarget,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Range(_) => "range",
            Error::Unrepresentable(_) => "unrepresentable",
            Error::Domain(_) => "domain",
            Error::NoTarget(_) => "no-target",
            Error::Degenerate(_) => "degenerate",
            Error::Patch(_) => "patch",
            Error::Placement(_) => "placement",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::EmptyDataset => "empty-dataset",
            Error::NoEligibleTarget => "no-eligible-target",
            Error::Io(_) => "io",
            Error::Json(_) => "format",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
