//! Error classification shared by every subcommand.

use std::fmt;
use std::path::Path;

use coastcam::ErrorKind;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    /// Invalid, malformed, missing or insufficient input. Exit code 2.
    Input,
    /// Well-formed input without a usable numerical solution. Exit code 3.
    Numerical,
}

#[derive(Debug, Clone)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            kind: FailureKind::Input,
            message: message.into(),
        }
    }

    /// Classifies a library error and names the input it came from.
    pub fn from_error(e: coastcam::Error, source: &Path) -> Self {
        Self::from_library(e).prefixed(&source.display().to_string())
    }

    pub fn from_library(e: coastcam::Error) -> Self {
        let kind = match e.kind() {
            ErrorKind::Input => FailureKind::Input,
            ErrorKind::Numerical => FailureKind::Numerical,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }

    pub fn prefixed(mut self, context: &str) -> Self {
        self.message = format!("{context}: {}", self.message);
        self
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Input => 2,
            FailureKind::Numerical => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::input(format!("{}: cannot read: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    let bytes = read_bytes(path)?;
    coastcam::io::decode_text(&bytes)
        .map(str::to_owned)
        .map_err(|e| Failure::from_error(e, path))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::input(format!("{}: cannot create directory: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| Failure::input(format!("{}: cannot write: {e}", path.display())))
}
