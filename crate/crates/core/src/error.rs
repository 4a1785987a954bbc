use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Array shapes disagree (channel vs. beamformer, selection vs. FoV, ...).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A scalar argument is outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A tile selection does not match the user's field of view or ladder.
    #[error("invalid tile selection: {0}")]
    Selection(String),

    #[error("config error: {0}")]
    Config(String),

    /// Non-finite activations or gradients, or a solver that could not make progress.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("slot {slot}: {source}")]
    Slot {
        slot: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no checkpoint for learned scheme `{0}`")]
    MissingCheckpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_slot(self, slot: usize) -> Self {
        Error::Slot {
            slot,
            source: Box::new(self),
        }
    }
}
