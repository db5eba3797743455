use thiserror::Error;

use crate::control::ControlError;
use crate::diffusion::DiffusionError;
use crate::graph::GraphError;
use crate::population::PopulationError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("exact oracle: {0}")]
    Oracle(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
