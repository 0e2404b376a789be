use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure in {cell}: {source}")]
    Numerical {
        cell: String,
        #[source]
        source: accsurf_core::Error,
    },
    #[error("{cell}: {source}")]
    Core {
        cell: String,
        #[source]
        source: accsurf_core::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 2 for configuration problems, 3 for numerical aborts, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            _ => 1,
        }
    }

    /// Attributes a core error to a grid cell.
    pub fn in_cell(cell: impl Into<String>, source: accsurf_core::Error) -> Self {
        let cell = cell.into();
        if source.is_numerical() {
            CliError::Numerical { cell, source }
        } else {
            CliError::Core { cell, source }
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
