use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{operation} failed: {source}")]
    Numerical {
        operation: &'static str,
        #[source]
        source: oma_va_core::VaError,
    },
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(field: impl Into<String>, err: impl std::fmt::Display) -> CliError {
        CliError::Config {
            field: field.into(),
            message: err.to_string(),
        }
    }

    pub fn invalid(field: &str, message: impl Into<String>) -> CliError {
        CliError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical { .. } | CliError::Io { .. } => 3,
        }
    }
}

/// Tags a library error with the operation that produced it.
pub trait Context<T> {
    fn during(self, operation: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for oma_va_core::Result<T> {
    fn during(self, operation: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numerical { operation, source })
    }
}
