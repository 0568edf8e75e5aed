use std::io;
use std::path::Path;

use hdp::tensorio::TensorError;
use thiserror::Error;

/// CLI failure, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }

    pub fn io(path: &Path, e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::NotFound {
            CliError::Io(format!("file not found: {}", path.display()))
        } else {
            CliError::Io(format!("{}: {e}", path.display()))
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::Io { path, source } => CliError::io(&path, source),
            TensorError::Shape(_) | TensorError::InvalidDistribution(_) | TensorError::Fxp(_) => {
                CliError::Config(e.to_string())
            }
            other => CliError::Io(format!("{} ({})", other, other.code())),
        }
    }
}

impl From<hdp::Error> for CliError {
    fn from(e: hdp::Error) -> Self {
        match e {
            hdp::Error::Config(_) | hdp::Error::Shape(_) => CliError::Config(e.to_string()),
            hdp::Error::Tensor(t) => t.into(),
            hdp::Error::Precondition(_) | hdp::Error::Protocol(_) | hdp::Error::Fxp(_) => {
                CliError::Invariant(e.to_string())
            }
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        let missing = CliError::io(Path::new("x.hdpt"), io::Error::from(io::ErrorKind::NotFound));
        assert_eq!(missing.exit_code(), 3);
        assert!(missing.to_string().contains("file not found"));
        assert_eq!(CliError::from(hdp::Error::Protocol("x".into())).exit_code(), 4);
        assert_eq!(CliError::from(TensorError::BadMagic).exit_code(), 3);
    }
}
