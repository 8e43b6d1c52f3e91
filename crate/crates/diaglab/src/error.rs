use std::io;
use std::path::PathBuf;

/// Errors from reading or writing the text file formats.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("{0}")]
    Invalid(String),
}

impl FormatError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        FormatError::Io { path: path.into(), source }
    }

    /// Prefixes line errors with the file they came from.
    pub fn in_file(self, path: &std::path::Path) -> Self {
        match self {
            FormatError::MalformedLine { line, reason } => {
                FormatError::MalformedLine { line, reason: format!("{}: {reason}", path.display()) }
            }
            other => other,
        }
    }
}

pub(crate) fn read_text(path: &std::path::Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

pub(crate) fn write_text(path: &std::path::Path, text: &str) -> Result<(), FormatError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| FormatError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| FormatError::io(path, e))
}
