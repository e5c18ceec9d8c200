use std::fmt;
use std::path::Path;

/// Everything a command can fail with, mapped onto the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or unreadable inputs. Exit code 2.
    Usage(String),
    /// The ledger refused something. `code` is the module's reason code.
    Rejected { code: String, message: String },
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn rejected(code: impl Into<String>, message: impl fmt::Display) -> Self {
        CliError::Rejected {
            code: code.into(),
            message: message.to_string(),
        }
    }

    pub fn io(flag: &str, path: &Path, err: impl fmt::Display) -> Self {
        CliError::Usage(format!("{flag}: {}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Rejected { .. } => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Usage(msg) => serde_json::json!({ "error": "usage", "message": msg }),
            CliError::Rejected { code, message } => {
                serde_json::json!({ "error": "rejected", "code": code, "message": message })
            }
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "error: {msg}"),
            CliError::Rejected { message, .. } => write!(f, "rejected: {message}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
