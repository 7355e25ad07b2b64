//! The model boundary: something that, given an audio prefix, returns the
//! hypothesis and attention the model would produce for it.
//!
//! [`ScriptedAdapter`] replays a recorded [`UtteranceTrace`];
//! [`SyntheticAdapter`] generates pseudo-diagonal attention with a tunable
//! last-frame spike from a handful of parameters.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trace::{
    segment_schedule, AttentionMatrix, AttentionMode, HeadSpec, PrefixStep, UtteranceTrace, SCHEMA_VERSION,
    TIME_EPS_MS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdapterError {
    #[error("utterance {id}: no recorded step at {prefix_ms} ms (nearest: {})", fmt_nearest(*below, *above))]
    MissingStep {
        id: String,
        prefix_ms: f64,
        below: Option<f64>,
        above: Option<f64>,
    },
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

fn fmt_nearest(below: Option<f64>, above: Option<f64>) -> String {
    match (below, above) {
        (Some(b), Some(a)) => format!("{b} and {a}"),
        (Some(x), None) | (None, Some(x)) => format!("{x}"),
        (None, None) => "none".into(),
    }
}

/// Uniform access to "hypothesis + attention for audio prefix t".
///
/// Implementations must be deterministic: the same `prefix_ms` always yields
/// the same step, and `n_frames` never decreases along the schedule.
pub trait Adapter: Sync {
    fn id(&self) -> &str;
    fn segment_ms(&self) -> f64;
    fn source_duration_ms(&self) -> f64;
    fn reference(&self) -> &str;
    fn query(&self, prefix_ms: f64) -> Result<Cow<'_, PrefixStep>, AdapterError>;

    fn schedule(&self) -> Vec<f64> {
        segment_schedule(self.segment_ms(), self.source_duration_ms())
    }
}

/// Replays a recorded trace verbatim.
#[derive(Debug, Clone, Copy)]
pub struct ScriptedAdapter<'a> {
    trace: &'a UtteranceTrace,
}

impl<'a> ScriptedAdapter<'a> {
    pub fn new(trace: &'a UtteranceTrace) -> Self {
        Self { trace }
    }

    pub fn trace(&self) -> &'a UtteranceTrace {
        self.trace
    }
}

/// Looks up the recorded step for `prefix_ms`.
pub fn scripted_query(trace: &UtteranceTrace, prefix_ms: f64) -> Result<&PrefixStep, AdapterError> {
    if let Some(step) = trace
        .steps
        .iter()
        .find(|s| (s.prefix_ms - prefix_ms).abs() <= TIME_EPS_MS)
    {
        return Ok(step);
    }
    let below = trace
        .steps
        .iter()
        .map(|s| s.prefix_ms)
        .filter(|&p| p < prefix_ms)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))));
    let above = trace
        .steps
        .iter()
        .map(|s| s.prefix_ms)
        .filter(|&p| p > prefix_ms)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.min(p))));
    Err(AdapterError::MissingStep {
        id: trace.id.clone(),
        prefix_ms,
        below,
        above,
    })
}

impl Adapter for ScriptedAdapter<'_> {
    fn id(&self) -> &str {
        &self.trace.id
    }

    fn segment_ms(&self) -> f64 {
        self.trace.segment_ms
    }

    fn source_duration_ms(&self) -> f64 {
        self.trace.source_duration_ms
    }

    fn reference(&self) -> &str {
        &self.trace.reference
    }

    fn query(&self, prefix_ms: f64) -> Result<Cow<'_, PrefixStep>, AdapterError> {
        scripted_query(self.trace, prefix_ms).map(Cow::Borrowed)
    }
}

/// Parameters of a synthetic utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub id: String,
    pub n_target_tokens: usize,
    pub frames_per_segment: usize,
    /// Encoder frames per target token along the diagonal.
    pub slope: f64,
    /// Mass placed on the final frame of every row before filtering.
    pub tail_mass_beta: f64,
    /// Half-width of the triangular kernel, in frames.
    pub spread: f64,
    pub seed: u64,
    pub segment_ms: f64,
    pub source_duration_ms: f64,
    /// Words in the source; drives `detected_words`.
    pub source_words: u32,
    pub layer: u32,
    /// `0` or `1` stores one averaged matrix; more stores a per-head stack.
    pub n_heads: u32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            id: "synthetic-0".into(),
            n_target_tokens: 12,
            frames_per_segment: 20,
            slope: 8.0,
            tail_mass_beta: 0.5,
            spread: 2.0,
            seed: 0,
            segment_ms: 800.0,
            source_duration_ms: 4000.0,
            source_words: 10,
            layer: 4,
            n_heads: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), AdapterError> {
        let bad = |m: &str| Err(AdapterError::InvalidSpec(m.to_string()));
        if !(0.0..1.0).contains(&self.tail_mass_beta) {
            return bad("tail_mass_beta must lie in [0, 1)");
        }
        if !(self.slope.is_finite() && self.slope >= 0.0) {
            return bad("slope must be finite and non-negative");
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return bad("spread must be finite and non-negative");
        }
        if self.frames_per_segment == 0 {
            return bad("frames_per_segment must be positive");
        }
        if !(self.segment_ms.is_finite() && self.segment_ms > 0.0) {
            return bad("segment_ms must be positive");
        }
        if !(self.source_duration_ms.is_finite() && self.source_duration_ms > 0.0) {
            return bad("source_duration_ms must be positive");
        }
        if self.layer < 1 || self.layer > 6 {
            return bad("layer must lie in 1..=6");
        }
        if self.n_heads > 8 {
            return bad("n_heads must be at most 8");
        }
        Ok(())
    }

    pub fn n_frames_at(&self, prefix_ms: f64) -> usize {
        let exact = prefix_ms / self.segment_ms * self.frames_per_segment as f64;
        ((exact - 1e-9).ceil() as usize).max(1)
    }

    pub fn revealed_at(&self, prefix_ms: f64) -> usize {
        if prefix_ms >= self.source_duration_ms - TIME_EPS_MS {
            return self.n_target_tokens;
        }
        let frac = prefix_ms / self.source_duration_ms;
        ((self.n_target_tokens as f64 * frac + 1e-9).floor() as usize).min(self.n_target_tokens)
    }

    pub fn detected_words_at(&self, prefix_ms: f64) -> u32 {
        if prefix_ms >= self.source_duration_ms - TIME_EPS_MS {
            return self.source_words;
        }
        let frac = prefix_ms / self.source_duration_ms;
        ((self.source_words as f64 * frac + 1e-9).floor() as u32).min(self.source_words)
    }

    /// Target tokens, a pure function of `seed`.
    pub fn tokens(&self) -> Vec<String> {
        const SYLLABLES: [&str; 16] = [
            "ka", "lo", "mi", "ne", "su", "ta", "ri", "vo", "de", "ba", "gu", "zo", "pe", "fi", "ha", "wu",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_target_tokens)
            .map(|_| {
                let a = SYLLABLES.choose(&mut rng).unwrap();
                let b = SYLLABLES.choose(&mut rng).unwrap();
                format!("{a}{b}")
            })
            .collect()
    }

    /// Per-head slope; head 0 means the averaged/single matrix.
    pub fn head_slope(&self, head: u32) -> f64 {
        if head == 0 {
            return self.slope;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(head as u64)));
        let jitter: f64 = rand::Rng::gen_range(&mut rng, -0.1..=0.1);
        self.slope * (1.0 + jitter)
    }

    pub fn reference(&self) -> String {
        self.tokens().join(" ")
    }
}

/// Kernel anchor for token `j`: `round(j · slope)`, clamped to the last frame.
pub fn synthetic_anchor(j: usize, slope: f64, n_frames: usize) -> usize {
    ((j as f64 * slope).round() as usize).min(n_frames.saturating_sub(1))
}

/// One raw attention row: `beta` on the final frame, the rest spread by a
/// triangular kernel `max(0, spread + 1 - |i - anchor|)` over the available
/// frames.
pub fn synthetic_row(j: usize, n_frames: usize, slope: f64, spread: f64, beta: f64) -> Vec<f64> {
    if n_frames <= 1 {
        return vec![1.0; n_frames];
    }
    let anchor = synthetic_anchor(j, slope, n_frames);
    let mut row: Vec<f64> = (0..n_frames)
        .map(|i| (spread + 1.0 - (i as f64 - anchor as f64).abs()).max(0.0))
        .collect();
    let kernel: f64 = row.iter().sum();
    for w in &mut row {
        *w *= (1.0 - beta) / kernel;
    }
    row[n_frames - 1] += beta;
    row
}

/// Generates steps from a [`SyntheticSpec`].
#[derive(Debug, Clone)]
pub struct SyntheticAdapter {
    spec: SyntheticSpec,
    tokens: Vec<String>,
    reference: String,
}

impl SyntheticAdapter {
    pub fn new(spec: SyntheticSpec) -> Result<Self, AdapterError> {
        spec.validate()?;
        let tokens = spec.tokens();
        let reference = tokens.join(" ");
        Ok(Self { spec, tokens, reference })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    fn matrix(&self, head: u32, n_rows: usize, n_frames: usize) -> AttentionMatrix {
        let slope = self.spec.head_slope(head);
        AttentionMatrix {
            layer: self.spec.layer,
            head: if head == 0 { HeadSpec::Averaged } else { HeadSpec::Head(head) },
            n_frames,
            rows: (0..n_rows)
                .map(|j| synthetic_row(j, n_frames, slope, self.spec.spread, self.spec.tail_mass_beta))
                .collect(),
        }
    }

    /// The step for `prefix_ms` (clamped to the source duration).
    pub fn step_at(&self, prefix_ms: f64) -> PrefixStep {
        let prefix_ms = prefix_ms.min(self.spec.source_duration_ms);
        let n_frames = self.spec.n_frames_at(prefix_ms);
        let revealed = self.spec.revealed_at(prefix_ms);
        let attention = if self.spec.n_heads <= 1 {
            vec![self.matrix(0, revealed, n_frames)]
        } else {
            (1..=self.spec.n_heads)
                .map(|h| self.matrix(h, revealed, n_frames))
                .collect()
        };
        PrefixStep {
            prefix_ms,
            n_frames,
            detected_words: self.spec.detected_words_at(prefix_ms),
            hypothesis: self.tokens[..revealed].to_vec(),
            attention,
        }
    }

    /// Materializes the whole schedule as a trace.
    pub fn to_trace(&self) -> UtteranceTrace {
        UtteranceTrace {
            schema: SCHEMA_VERSION,
            id: self.spec.id.clone(),
            source_duration_ms: self.spec.source_duration_ms,
            segment_ms: self.spec.segment_ms,
            reference: self.reference.clone(),
            attention_mode: if self.spec.n_heads <= 1 {
                AttentionMode::Averaged
            } else {
                AttentionMode::PerHead
            },
            n_layers: 6,
            n_heads: 8,
            steps: self.schedule().into_iter().map(|p| self.step_at(p)).collect(),
        }
    }
}

/// Free-function form of [`SyntheticAdapter::step_at`].
pub fn synthetic_query(spec: &SyntheticSpec, prefix_ms: f64) -> Result<PrefixStep, AdapterError> {
    Ok(SyntheticAdapter::new(spec.clone())?.step_at(prefix_ms))
}

impl Adapter for SyntheticAdapter {
    fn id(&self) -> &str {
        &self.spec.id
    }

    fn segment_ms(&self) -> f64 {
        self.spec.segment_ms
    }

    fn source_duration_ms(&self) -> f64 {
        self.spec.source_duration_ms
    }

    fn reference(&self) -> &str {
        &self.reference
    }

    fn query(&self, prefix_ms: f64) -> Result<Cow<'_, PrefixStep>, AdapterError> {
        Ok(Cow::Owned(self.step_at(prefix_ms)))
    }
}
