use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("infeasible cap {cap}: need at least {required} for {campaigns} campaigns")]
    Infeasible {
        cap: f64,
        required: f64,
        campaigns: usize,
    },

    #[error("insufficient data: need at least {needed} usable points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("problem too large for enumeration: {campaigns} campaigns x {levels} levels")]
    SizeGuard { campaigns: usize, levels: usize },

    #[error("horizon exceeded: day {day} with horizon {horizon}")]
    HorizonExceeded { day: usize, horizon: usize },

    #[error("no records for {0}")]
    EmptyMonth(String),

    #[error("campaign {0} not found in source data")]
    MissingCampaign(String),

    #[error("{path}: row {row}: {reason}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        reason: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
