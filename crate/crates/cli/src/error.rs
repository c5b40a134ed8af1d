//! Error kinds and their process exit codes.

use sidw_core::field::FieldError;
use sidw_core::fit::FitError;
use sidw_core::kernel::KernelError;
use sidw_core::nonlinear::NonlinearError;
use sidw_core::scatter::ScatterError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Horizon(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Horizon(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Horizon(_) => "horizon",
            CliError::Numerical(_) => "numerical",
            CliError::Io(_) => "io",
        }
    }

    /// `sidw: exit=N kind=K reason="..."` on a single line.
    pub fn status_line(&self) -> String {
        let reason = crate::config::one_line(&self.to_string()).replace('"', "'");
        format!("sidw: exit={} kind={} reason=\"{}\"", self.exit_code(), self.kind(), reason)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::BadValue(_) => CliError::Numerical(format!("fit: {e}")),
            _ => CliError::Config(format!("fit: {e}")),
        }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::BadGrid(_) | FieldError::ShapeMismatch { .. } => CliError::Config(e.to_string()),
            FieldError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::BadTimes { .. } | KernelError::BadFrequency(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<ScatterError> for CliError {
    fn from(e: ScatterError) -> Self {
        match e {
            ScatterError::Field(f) => f.into(),
            ScatterError::Fit(f) => f.into(),
            ScatterError::Horizon { .. } => CliError::Horizon(e.to_string()),
            ScatterError::Divergence { .. } => CliError::Numerical(e.to_string()),
            ScatterError::NegativeMass(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<NonlinearError> for CliError {
    fn from(e: NonlinearError) -> Self {
        match e {
            NonlinearError::Field(f) => f.into(),
            NonlinearError::Fit(f) => f.into(),
            NonlinearError::Dimension(_) | NonlinearError::BadStep { .. } | NonlinearError::NoScatterSamples => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}
