use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] modelopt::Error),
}

impl BenchError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        BenchError::Io { path: path.to_path_buf(), source }
    }

    /// Process exit code: 1 for configuration and input errors, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Io { .. } => 2,
            _ => 1,
        }
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => {
                let msg = e.to_string();
                match e.into_kind() {
                    csv::ErrorKind::Io(source) => BenchError::Io { path: PathBuf::from("<csv>"), source },
                    _ => BenchError::Config(msg),
                }
            }
            _ => BenchError::Config(format!("malformed CSV: {e}")),
        }
    }
}
