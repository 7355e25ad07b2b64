//! Structural checks on recorded traces.

use std::fmt;

use serde::Serialize;

use crate::trace::{AttentionMode, HeadSpec, UtteranceTrace, SCHEMA_VERSION, TIME_EPS_MS};

/// Raw rows must sum to one within this tolerance.
pub const RAW_ROW_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariant {
    SchemaVersion,
    SourceDuration,
    SegmentLength,
    StepSchedule,
    FinalStepCoverage,
    FrameMonotonicity,
    HypothesisAlignment,
    RowWidth,
    NonNegativeWeights,
    RowNormalization,
    LayerBounds,
    HeadBounds,
    AttentionMode,
    MissingAttention,
}

impl Invariant {
    pub fn name(self) -> &'static str {
        match self {
            Invariant::SchemaVersion => "schema version",
            Invariant::SourceDuration => "source duration",
            Invariant::SegmentLength => "segment length",
            Invariant::StepSchedule => "step schedule",
            Invariant::FinalStepCoverage => "final step coverage",
            Invariant::FrameMonotonicity => "frame monotonicity",
            Invariant::HypothesisAlignment => "hypothesis alignment",
            Invariant::RowWidth => "row width",
            Invariant::NonNegativeWeights => "non-negative weights",
            Invariant::RowNormalization => "row normalization",
            Invariant::LayerBounds => "layer bounds",
            Invariant::HeadBounds => "head bounds",
            Invariant::AttentionMode => "attention mode",
            Invariant::MissingAttention => "missing attention",
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    /// Index of the offending step; `None` for utterance-level problems.
    pub step: Option<usize>,
    pub invariant: Invariant,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(s) => write!(f, "step {s}: {}: {}", self.invariant, self.detail),
            None => write!(f, "{}: {}", self.invariant, self.detail),
        }
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_EPS_MS
}

fn is_multiple(value: f64, unit: f64) -> bool {
    let k = (value / unit).round();
    k >= 1.0 && near(k * unit, value)
}

/// Returns every invariant violation in `trace`; empty means valid.
pub fn validate_trace(trace: &UtteranceTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |step: Option<usize>, invariant: Invariant, detail: String| {
        out.push(Violation { step, invariant, detail });
    };

    if trace.schema != SCHEMA_VERSION {
        push(None, Invariant::SchemaVersion, format!("found {}, expected {SCHEMA_VERSION}", trace.schema));
    }
    let duration_ok = trace.source_duration_ms.is_finite() && trace.source_duration_ms > 0.0;
    if !duration_ok {
        push(None, Invariant::SourceDuration, format!("{} is not a positive duration", trace.source_duration_ms));
    }
    let segment_ok = trace.segment_ms.is_finite() && trace.segment_ms > 0.0;
    if !segment_ok {
        push(None, Invariant::SegmentLength, format!("{} is not a positive length", trace.segment_ms));
    }

    let n_steps = trace.steps.len();
    match trace.steps.last() {
        None => push(None, Invariant::FinalStepCoverage, "trace has no steps".into()),
        Some(last) if duration_ok && !near(last.prefix_ms, trace.source_duration_ms) => push(
            Some(n_steps - 1),
            Invariant::FinalStepCoverage,
            format!(
                "last prefix {} ms does not reach source duration {} ms",
                last.prefix_ms, trace.source_duration_ms
            ),
        ),
        _ => {}
    }

    let mut prev_frames: Option<usize> = None;
    for (idx, step) in trace.steps.iter().enumerate() {
        let is_last = idx + 1 == n_steps;
        if segment_ok && duration_ok {
            let expected = (trace.segment_ms * (idx + 1) as f64).min(trace.source_duration_ms);
            let final_ok = is_last && near(step.prefix_ms, trace.source_duration_ms);
            if !near(step.prefix_ms, expected) {
                if !is_multiple(step.prefix_ms, trace.segment_ms) && !final_ok {
                    push(
                        Some(idx),
                        Invariant::StepSchedule,
                        format!("prefix {} ms is not a multiple of segment {} ms", step.prefix_ms, trace.segment_ms),
                    );
                } else if !(is_last && !final_ok) {
                    push(
                        Some(idx),
                        Invariant::StepSchedule,
                        format!("expected prefix {expected} ms, found {} ms", step.prefix_ms),
                    );
                }
            }
        }

        if let Some(p) = prev_frames {
            if step.n_frames < p {
                push(
                    Some(idx),
                    Invariant::FrameMonotonicity,
                    format!("n_frames dropped from {p} to {}", step.n_frames),
                );
            }
        }
        prev_frames = Some(step.n_frames);

        if step.attention.is_empty() && !step.hypothesis.is_empty() {
            push(Some(idx), Invariant::MissingAttention, "step has tokens but no attention".into());
        }

        for m in &step.attention {
            let tag = format!("layer {} head {}", m.layer, m.head);
            if m.layer < 1 || m.layer > trace.n_layers {
                push(Some(idx), Invariant::LayerBounds, format!("{tag}: layer outside 1..={}", trace.n_layers));
            }
            match (m.head, trace.attention_mode) {
                (HeadSpec::Head(h), AttentionMode::PerHead) if h < 1 || h > trace.n_heads => {
                    push(Some(idx), Invariant::HeadBounds, format!("{tag}: head outside 1..={}", trace.n_heads));
                }
                (HeadSpec::Head(_), AttentionMode::Averaged) => {
                    push(Some(idx), Invariant::AttentionMode, format!("{tag}: per-head matrix in an averaged trace"));
                }
                _ => {}
            }
            if m.rows.len() != step.hypothesis.len() {
                push(
                    Some(idx),
                    Invariant::HypothesisAlignment,
                    format!("{tag}: {} rows for {} hypothesis tokens", m.rows.len(), step.hypothesis.len()),
                );
            }
            if m.n_frames != step.n_frames {
                push(
                    Some(idx),
                    Invariant::RowWidth,
                    format!("{tag}: matrix declares {} frames, step has {}", m.n_frames, step.n_frames),
                );
            }
            for (j, row) in m.rows.iter().enumerate() {
                if row.len() != step.n_frames {
                    push(
                        Some(idx),
                        Invariant::RowWidth,
                        format!("{tag} row {j}: {} weights for {} frames", row.len(), step.n_frames),
                    );
                }
                if let Some(w) = row.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
                    push(Some(idx), Invariant::NonNegativeWeights, format!("{tag} row {j}: weight {w}"));
                    continue;
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > RAW_ROW_TOLERANCE {
                    push(
                        Some(idx),
                        Invariant::RowNormalization,
                        format!("{tag} row {j}: weights sum to {sum}"),
                    );
                }
            }
        }
    }
    out
}
