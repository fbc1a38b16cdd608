use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("power budget violated: common power {alpha_c} must be below total power {p_t}")]
    PowerBudget { alpha_c: f64, p_t: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown scheme tag `{0}`")]
    UnknownScheme(String),

    #[error("cannot read config file {path}: {source}")]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Configuration problems map to exit code 1, everything else to 2.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::UnknownScheme(_) | Error::ConfigFile { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
