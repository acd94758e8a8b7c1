use thiserror::Error;

/// Errors produced by the coreset library.
#[derive(Debug, Error)]
pub enum CoresetError {
    #[error("input error: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("capacity error: {what} needs {required} entries, limit is {limit}")]
    Capacity {
        what: String,
        required: u128,
        limit: u128,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("rank error: need rank {required}, measured rank {found}")]
    Rank { required: usize, found: usize },

    #[error("stage {index} ({label}): {source}")]
    Stage {
        index: usize,
        label: String,
        #[source]
        source: Box<CoresetError>,
    },

    #[error("reduce at level {level}: {source}")]
    Reduce {
        level: usize,
        #[source]
        source: Box<CoresetError>,
    },
}

impl CoresetError {
    /// Innermost error, with stage/level context peeled off.
    pub fn root(&self) -> &CoresetError {
        match self {
            CoresetError::Stage { source, .. } | CoresetError::Reduce { source, .. } => {
                source.root()
            }
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoresetError>;
