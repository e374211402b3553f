use serde_json::json;
use strata_bounds::data::ValidationReport;
use strata_bounds::Error;

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("data failed validation")]
    Validation(ValidationReport),
    #[error(transparent)]
    Library(#[from] Error),
}

impl CliError {
    /// 2 for bad input or configuration, 3 when estimation itself fails.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => 2,
            CliError::Library(e) => match e {
                Error::Invalid(_) | Error::Parse { .. } | Error::Io(_) => 2,
                _ => 3,
            },
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (kind, failures) = match self {
            CliError::Usage(_) => ("usage", None),
            CliError::Validation(r) => ("validation", Some(&r.failures)),
            CliError::Library(e) => (e.kind(), None),
        };
        let mut body = json!({
            "kind": kind,
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let Some(f) = failures {
            body["failures"] = json!(f);
        }
        json!({ "error": body })
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
