use thiserror::Error;

/// An invariant violation on a configuration value, tagged with the dotted
/// path of the offending field (e.g. `uav.mass`).
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{path}: {message}")]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

pub(crate) fn join(prefix: &str, field: &str) -> String {
    if prefix.is_empty() {
        field.to_string()
    } else {
        format!("{prefix}.{field}")
    }
}

/// Fails with a path-qualified error unless `ok`.
pub(crate) fn ensure(ok: bool, prefix: &str, field: &str, msg: &str) -> Result<(), ValidationError> {
    if ok {
        Ok(())
    } else {
        Err(ValidationError::new(join(prefix, field), msg))
    }
}
