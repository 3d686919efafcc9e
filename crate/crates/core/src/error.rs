use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unsupported point cloud format: {0}")]
    UnsupportedFormat(String),

    #[error("occupancy grid has no occupied voxels")]
    EmptyGrid,

    #[error("registration diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("{} surface point(s) cannot be covered by any unvisited view", points.len())]
    Infeasible { points: Vec<usize> },

    #[error("no unvisited candidate view remains")]
    NoCandidateView,

    #[error("unknown view id {0}")]
    UnknownView(usize),

    #[error("degenerate scene: {0}")]
    Degenerate(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}

/// Tags errors from a pipeline stage with the stage name.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|source| Error::Stage {
            stage,
            source: Box::new(source),
        })
    }
}
