use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// A config problem located by its dotted key path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl ConfigIssue {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigIssue>),

    #[error(transparent)]
    Core(#[from] oamdm_core::Error),

    #[error(transparent)]
    Optics(#[from] oamdm_optics::Error),

    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {}: {message}", .path.display())]
    Malformed { path: PathBuf, message: String },
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const IO: i32 = 4;
}

impl CliError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config(vec![ConfigIssue::new(key, message)])
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            exit::CONFIG => "config",
            exit::NUMERICAL => "numerical",
            _ => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        use oamdm_core::Error as CoreError;
        use oamdm_optics::Error as OpticsError;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Core(CoreError::Io(_) | CoreError::Csv(_) | CoreError::Parse(_)) => exit::IO,
            CliError::Core(CoreError::UnknownModel(_)) => exit::CONFIG,
            CliError::Core(_) => exit::NUMERICAL,
            CliError::Optics(OpticsError::Io(_) | OpticsError::Json(_) | OpticsError::Csv(_)) => exit::IO,
            CliError::Optics(_) => exit::NUMERICAL,
            CliError::MissingInput(_) | CliError::Io { .. } | CliError::Malformed { .. } => exit::IO,
        }
    }

    /// Machine-readable form written to stderr on failure.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        match self {
            CliError::Config(issues) => v["issues"] = serde_json::json!(issues),
            CliError::MissingInput(p) | CliError::Io { path: p, .. } | CliError::Malformed { path: p, .. } => {
                v["path"] = serde_json::json!(p.display().to_string())
            }
            _ => {}
        }
        v
    }
}
