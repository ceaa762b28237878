use std::path::PathBuf;

use thiserror::Error;

use crate::mdp::HouseId;

pub type Result<T, E = FlexError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FlexError {
    #[error("simulation fault: {0}")]
    Simulation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("ranking error: {0}")]
    Ranking(String),

    #[error("dispatch error: {0}")]
    Dispatch(String),

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("house {house}: {source}")]
    House {
        house: HouseId,
        #[source]
        source: Box<FlexError>,
    },

    #[error("model artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },

    #[error("missing artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),

    #[error("[{phase}] {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<FlexError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl FlexError {
    pub fn in_phase(self, phase: &'static str) -> Self {
        match self {
            e @ FlexError::Phase { .. } => e,
            e => FlexError::Phase {
                phase,
                source: Box::new(e),
            },
        }
    }

    pub fn for_house(self, house: HouseId) -> Self {
        FlexError::House {
            house,
            source: Box::new(self),
        }
    }
}

pub trait PhaseExt<T> {
    fn phase(self, phase: &'static str) -> Result<T>;
}

impl<T, E: Into<FlexError>> PhaseExt<T> for std::result::Result<T, E> {
    fn phase(self, phase: &'static str) -> Result<T> {
        self.map_err(|e| e.into().in_phase(phase))
    }
}
