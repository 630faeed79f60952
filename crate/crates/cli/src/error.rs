use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("computation failed: {0}")]
    Core(#[from] heston_laq::Error),
}

impl CliError {
    pub fn config(line: usize, message: String) -> Self {
        CliError::Config { line, message }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}
