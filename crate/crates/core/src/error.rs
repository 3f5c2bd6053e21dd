//! Error types shared across the simulator.

use thiserror::Error;

/// Crate-wide error type.
///
/// `Config` covers rejected configuration (bad file, violated invariant);
/// everything else is a runtime model error. The CLI maps the two classes
/// to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Configuration file or parameter rejected; the message names the key
    /// or invariant that failed.
    #[error("config error: {0}")]
    Config(String),

    /// Oscillator model failure (bad window schedule, no bracket, ...).
    #[error("oscillator error: {0}")]
    Oscillator(String),

    /// Control-unit failure (window generation or tuning infeasible).
    #[error("control error: {0}")]
    Control(String),

    /// Modulator failure (bit count, schedule overflow).
    #[error("modulator error: {0}")]
    Modulator(String),

    /// Waveform synthesis / impairment failure.
    #[error("frontend error: {0}")]
    Frontend(String),

    /// Receiver failure (pull-in range, unwrap, empty settle window).
    #[error("receiver error: {0}")]
    Receiver(String),

    /// Metrics failure (empty input, length mismatch).
    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that stem from configuration rather than the model.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
