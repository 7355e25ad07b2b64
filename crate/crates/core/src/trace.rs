//! Trace data model: what a model adapter recorded for every audio prefix of
//! an utterance, plus the JSON-lines reader and writer.

use std::fmt;
use std::io::{BufRead, Write};

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

/// Current trace schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Default speech segment length.
pub const DEFAULT_SEGMENT_MS: f64 = 800.0;

/// Tolerance used when comparing millisecond timestamps read from disk.
pub const TIME_EPS_MS: f64 = 1e-6;

/// Which attention head a matrix comes from.
///
/// Heads and layers are 1-based, matching how decoder layers are usually
/// numbered (layer 4 of 6, head 3 of 8).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum HeadSpec {
    #[default]
    Averaged,
    Head(u32),
}

impl fmt::Display for HeadSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadSpec::Averaged => f.write_str("averaged"),
            HeadSpec::Head(h) => write!(f, "{h}"),
        }
    }
}

impl std::str::FromStr for HeadSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("averaged") || s.eq_ignore_ascii_case("avg") {
            return Ok(HeadSpec::Averaged);
        }
        s.parse::<u32>()
            .map(HeadSpec::Head)
            .map_err(|_| format!("invalid head `{s}`: expected `averaged` or a head index"))
    }
}

impl Serialize for HeadSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            HeadSpec::Averaged => serializer.serialize_str("averaged"),
            HeadSpec::Head(h) => serializer.serialize_u32(*h),
        }
    }
}

impl<'de> Deserialize<'de> for HeadSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct HeadVisitor;

        impl Visitor<'_> for HeadVisitor {
            type Value = HeadSpec;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("\"averaged\" or a non-negative head index")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<HeadSpec, E> {
                u32::try_from(v)
                    .map(HeadSpec::Head)
                    .map_err(|_| E::custom("head index out of range"))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<HeadSpec, E> {
                u32::try_from(v)
                    .map(HeadSpec::Head)
                    .map_err(|_| E::custom("head index out of range"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<HeadSpec, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(HeadVisitor)
    }
}

/// Encoder-decoder attention for one layer/head at one audio prefix.
///
/// `rows[j]` is the distribution of hypothesis token `j` over the encoder
/// frames of the prefix, stored raw (last frame included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMatrix<T = f64> {
    pub layer: u32,
    pub head: HeadSpec,
    pub n_frames: usize,
    pub rows: Vec<Vec<T>>,
}

impl<T> AttentionMatrix<T> {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// How a trace stores heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// One head-averaged matrix per exported layer.
    #[default]
    Averaged,
    /// The full stack of per-head matrices for each exported layer.
    PerHead,
}

/// Model outputs recorded for one audio prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixStep<T = f64> {
    pub prefix_ms: f64,
    pub n_frames: usize,
    #[serde(default)]
    pub detected_words: u32,
    pub hypothesis: Vec<String>,
    pub attention: Vec<AttentionMatrix<T>>,
}

impl<T> PrefixStep<T> {
    pub fn matrices_for_layer(&self, layer: u32) -> impl Iterator<Item = &AttentionMatrix<T>> {
        self.attention.iter().filter(move |m| m.layer == layer)
    }
}

fn default_segment_ms() -> f64 {
    DEFAULT_SEGMENT_MS
}

fn default_n_layers() -> u32 {
    6
}

fn default_n_heads() -> u32 {
    8
}

/// Everything an adapter recorded for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceTrace {
    pub schema: u32,
    pub id: String,
    pub source_duration_ms: f64,
    #[serde(default = "default_segment_ms")]
    pub segment_ms: f64,
    pub reference: String,
    #[serde(default)]
    pub attention_mode: AttentionMode,
    #[serde(default = "default_n_layers")]
    pub n_layers: u32,
    #[serde(default = "default_n_heads")]
    pub n_heads: u32,
    pub steps: Vec<PrefixStep>,
}

impl UtteranceTrace {
    /// Prefix timestamps the harness reads at: `segment, 2·segment, …` and
    /// finally the full duration.
    pub fn schedule(&self) -> Vec<f64> {
        segment_schedule(self.segment_ms, self.source_duration_ms)
    }
}

/// `segment, 2·segment, …` strictly below `duration`, then `duration` itself.
pub fn segment_schedule(segment_ms: f64, duration_ms: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(segment_ms > 0.0) || !(duration_ms > 0.0) {
        return out;
    }
    let mut k = 1u64;
    loop {
        let p = segment_ms * k as f64;
        if p >= duration_ms - TIME_EPS_MS {
            out.push(duration_ms);
            break;
        }
        out.push(p);
        k += 1;
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unsupported schema version {found} (expected {SCHEMA_VERSION})")]
    Schema { line: usize, found: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl TraceError {
    pub fn line(&self) -> Option<usize> {
        match self {
            TraceError::Parse { line, .. } | TraceError::Schema { line, .. } => Some(*line),
            TraceError::Io(_) => None,
        }
    }
}

/// Parses one JSONL record. `line` is only used for error reporting.
pub fn parse_trace_line(text: &str, line: usize) -> Result<UtteranceTrace, TraceError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| TraceError::Parse {
        line,
        message: e.to_string(),
    })?;
    match value.get("schema") {
        None => {
            return Err(TraceError::Parse {
                line,
                message: "missing field `schema`".into(),
            })
        }
        Some(v) => match v.as_u64() {
            Some(n) if n == SCHEMA_VERSION as u64 => {}
            Some(n) => return Err(TraceError::Schema { line, found: n }),
            None => {
                return Err(TraceError::Parse {
                    line,
                    message: format!("field `schema` must be an integer, got {v}"),
                })
            }
        },
    }
    serde_json::from_value(value).map_err(|e| TraceError::Parse {
        line,
        message: e.to_string(),
    })
}

/// Reads a JSON-lines trace file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_traces<R: BufRead>(reader: R) -> Result<Vec<UtteranceTrace>, TraceError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_trace_line(&line, idx + 1)?);
    }
    Ok(out)
}

pub fn write_trace<W: Write>(mut writer: W, trace: &UtteranceTrace) -> std::io::Result<()> {
    serde_json::to_writer(&mut writer, trace)?;
    writer.write_all(b"\n")
}

pub fn write_traces<W: Write>(mut writer: W, traces: &[UtteranceTrace]) -> std::io::Result<()> {
    for t in traces {
        write_trace(&mut writer, t)?;
    }
    Ok(())
}
