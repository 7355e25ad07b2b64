//! Policy configuration and its domain checks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::trace::{HeadSpec, DEFAULT_SEGMENT_MS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Edatt,
    LocalAgreement,
    Waitk,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Edatt => "edatt",
            PolicyKind::LocalAgreement => "local_agreement",
            PolicyKind::Waitk => "waitk",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "edatt" => Ok(PolicyKind::Edatt),
            "la" | "local_agreement" => Ok(PolicyKind::LocalAgreement),
            "waitk" | "wait_k" => Ok(PolicyKind::Waitk),
            other => Err(format!("unknown policy `{other}` (expected edatt, la or waitk)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("lambda must be >= 1, got {0}")]
    Lambda(u32),
    #[error("layer must be >= 1, got {0}")]
    Layer(u32),
    #[error("head index must be >= 1, got {0}")]
    Head(u32),
    #[error("k must be >= 1, got {0}")]
    K(u32),
    #[error("segment_ms must be positive and finite, got {0}")]
    Segment(f64),
}

/// One point of the policy sweep space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub policy_kind: PolicyKind,
    pub alpha: f64,
    pub lambda: u32,
    pub layer: u32,
    pub head: HeadSpec,
    pub k: u32,
    pub segment_ms: f64,
    /// Evaluate the threshold on last-frame-filtered rows (default) or raw rows.
    pub filter_last_frame: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            policy_kind: PolicyKind::Edatt,
            alpha: 0.2,
            lambda: 2,
            layer: 4,
            head: HeadSpec::Averaged,
            k: 3,
            segment_ms: DEFAULT_SEGMENT_MS,
            filter_last_frame: true,
        }
    }
}

impl PolicyConfig {
    pub fn edatt(alpha: f64, lambda: u32) -> Self {
        Self {
            alpha,
            lambda,
            ..Self::default()
        }
    }

    pub fn local_agreement() -> Self {
        Self {
            policy_kind: PolicyKind::LocalAgreement,
            ..Self::default()
        }
    }

    pub fn waitk(k: u32) -> Self {
        Self {
            policy_kind: PolicyKind::Waitk,
            k,
            ..Self::default()
        }
    }

    /// Checks every field, including the ones the selected policy ignores.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ConfigError::Alpha(self.alpha));
        }
        if self.lambda < 1 {
            return Err(ConfigError::Lambda(self.lambda));
        }
        if self.layer < 1 {
            return Err(ConfigError::Layer(self.layer));
        }
        if let HeadSpec::Head(h) = self.head {
            if h < 1 {
                return Err(ConfigError::Head(h));
            }
        }
        if self.k < 1 {
            return Err(ConfigError::K(self.k));
        }
        if !(self.segment_ms.is_finite() && self.segment_ms > 0.0) {
            return Err(ConfigError::Segment(self.segment_ms));
        }
        Ok(())
    }
}
