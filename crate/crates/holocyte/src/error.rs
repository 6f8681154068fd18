use std::path::Path;

/// Failures of the command-line pipeline. `exit_code` maps them onto the
/// process status: 2 for bad input (missing files, malformed config, failed
/// calibration), 1 for a stage that could not complete.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Output(String),
    #[error(transparent)]
    Core(#[from] holocyte_core::Error),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub fn read(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Input(format!("cannot read {}: {err}", path.display()))
    }

    pub fn write(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Output(format!("cannot write {}: {err}", path.display()))
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Self::Stage { .. } => e,
            e => Self::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Input(_) => 2,
            Self::Core(holocyte_core::Error::Calibration(_)) => 2,
            Self::Core(holocyte_core::Error::InvalidConfig(_)) => 2,
            Self::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
