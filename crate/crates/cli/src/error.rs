use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

/// Error reported on stderr as one JSON object.
#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl CliError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn config(message: impl ToString) -> Self {
        Self::new("config", message.to_string())
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("io", format!("{}: {e}", path.display()))
    }

    /// 2 for bad input (config, schema, invariants), 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self.kind {
            "config" | "trace" | "validation" | "input" => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self }).to_string()
    }
}
