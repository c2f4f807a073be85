use std::fmt;
use std::path::{Path, PathBuf};

/// A configuration field that failed validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldError { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn list(errors: &[FieldError]) -> String {
    errors.iter().map(|e| format!("  - {e}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, thiserror::Error)]
pub enum ExpError {
    #[error("invalid configuration:\n{}", list(.0))]
    Validation(Vec<FieldError>),

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Core(#[from] paris_em::Error),

    #[error("{0}")]
    Other(String),
}

pub type Result<T, E = ExpError> = std::result::Result<T, E>;

impl ExpError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        ExpError::Io { path: path.to_path_buf(), source }
    }

    pub fn csv(path: &Path, source: csv::Error) -> Self {
        ExpError::Csv { path: path.to_path_buf(), source }
    }

    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ExpError::Validation(vec![FieldError::new(field, message)])
    }

    /// Process exit status: 2 for invalid input, 3 for numerical
    /// degeneracy, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        use paris_em::Error as E;
        match self {
            ExpError::Validation(_) | ExpError::Parse { .. } => 2,
            ExpError::Core(e) if e.is_degeneracy() => 3,
            ExpError::Core(
                E::ParameterDomain { .. }
                | E::DimensionMismatch { .. }
                | E::Schedule(_)
                | E::InvalidConfig(_)
                | E::InstanceTooLarge { .. },
            ) => 2,
            _ => 1,
        }
    }
}
