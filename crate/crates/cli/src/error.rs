use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde_json::json;

/// A failure that stops a command. Maps to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("backend unavailable: {0}")]
    Backend(String),
    #[error("{}: {message}", path.display())]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn input(path: &Path, err: impl Display) -> Self {
        CliError::Input {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn output(path: &Path, err: impl Display) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Input { .. } => "input",
            CliError::Backend(_) => "backend",
            CliError::Output { .. } => "output",
        }
    }

    /// The machine-readable report printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let path = match self {
            CliError::Input { path, .. } | CliError::Output { path, .. } => {
                Some(path.display().to_string())
            }
            _ => None,
        };
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "path": path,
            }
        })
    }
}

/// How a command that did not fail outright went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// The command finished, but some cells could not be computed.
    Partial { failed_cells: usize },
}

impl Outcome {
    pub fn from_failures(failed_cells: usize) -> Self {
        if failed_cells == 0 {
            Outcome::Success
        } else {
            Outcome::Partial { failed_cells }
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Partial { .. } => 1,
        }
    }
}

pub const FATAL_EXIT_CODE: i32 = 2;
