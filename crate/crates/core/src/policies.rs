//! Decision policies. Each one looks at the current prefix step and what has
//! already been written, and answers how many new tokens to WRITE now
//! (zero means READ more audio).

use serde::Serialize;

use crate::attention::{filter_last_frame, select_matrix, AttentionError, FilteredRow, DEGENERATE_EPSILON};
use crate::config::{PolicyConfig, PolicyKind};
use crate::scalar::Scalar;
use crate::trace::PrefixStep;

/// Per-utterance memory shared by all policies.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyState {
    pub emitted: Vec<String>,
    /// Previous step's hypothesis (local agreement keeps one, l = 1).
    pub previous_hypothesis: Option<Vec<String>>,
    pub step_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyNote {
    /// Already written output is not a prefix of this step's hypothesis.
    PrefixMismatch,
    /// Emission stopped on a row whose filtered mass was degenerate.
    DegenerateRow { token_index: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Decision {
    pub emit: usize,
    pub notes: Vec<PolicyNote>,
}

impl Decision {
    fn wait() -> Self {
        Self::default()
    }

    fn mismatch() -> Self {
        Self {
            emit: 0,
            notes: vec![PolicyNote::PrefixMismatch],
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error("policy {policy} cannot run step {step}: {reason}")]
    Unsupported {
        policy: PolicyKind,
        step: usize,
        reason: String,
    },
}

/// Position to resume from in `hypothesis`, or `None` if `emitted` is not an
/// exact prefix of it.
pub fn align_emitted(hypothesis: &[String], emitted: &[String]) -> Option<usize> {
    (hypothesis.len() >= emitted.len() && hypothesis[..emitted.len()] == *emitted).then_some(emitted.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdattScan {
    pub count: usize,
    pub degenerate_at: Option<usize>,
}

/// Walks `rows` from `start`, accepting each token whose last-`lambda` mass
/// is strictly below `alpha`, and stops at the first one that is not.
pub fn edatt_scan<T: Scalar>(rows: &[FilteredRow<T>], start: usize, lambda: usize, alpha: T) -> EdattScan {
    let mut count = 0;
    for (j, row) in rows.iter().enumerate().skip(start) {
        if row.degenerate {
            return EdattScan {
                count,
                degenerate_at: Some(j),
            };
        }
        if row.tail_mass(lambda) < alpha {
            count += 1;
        } else {
            break;
        }
    }
    EdattScan {
        count,
        degenerate_at: None,
    }
}

/// Threshold decision on raw (unfiltered) attention rows of one step.
///
/// With `filter` set, each row loses its last frame first; then a step with
/// `n_frames <= lambda + 1` never emits, since the window covers every
/// surviving frame. Without filtering the cutoff is `n_frames <= lambda`.
pub fn edatt_emit_count<T: Scalar>(
    raw_rows: &[Vec<T>],
    n_frames: usize,
    start: usize,
    lambda: usize,
    alpha: T,
    filter: bool,
) -> Result<EdattScan, AttentionError> {
    let nothing = EdattScan {
        count: 0,
        degenerate_at: None,
    };
    let usable = if filter { n_frames.saturating_sub(1) } else { n_frames };
    if usable <= lambda || start >= raw_rows.len() {
        return Ok(nothing);
    }
    let eps = T::lit(DEGENERATE_EPSILON);
    let mut rows = Vec::with_capacity(raw_rows.len());
    for (j, raw) in raw_rows.iter().enumerate() {
        if j < start {
            // never inspected by the scan
            rows.push(FilteredRow::from_normalized(Vec::new()));
        } else if filter {
            rows.push(filter_last_frame(raw, eps)?);
        } else {
            rows.push(FilteredRow::from_normalized(raw.clone()));
        }
    }
    Ok(edatt_scan(&rows, start, lambda, alpha))
}

/// Attention-threshold policy step.
pub fn edatt_step<T: Scalar>(
    step: &PrefixStep<T>,
    state: &PolicyState,
    cfg: &PolicyConfig,
) -> Result<Decision, PolicyError> {
    let Some(start) = align_emitted(&step.hypothesis, &state.emitted) else {
        return Ok(Decision::mismatch());
    };
    if start >= step.hypothesis.len() {
        return Ok(Decision::wait());
    }
    let matrix = select_matrix(step, cfg.layer, cfg.head)?;
    let rows = &matrix.rows[..matrix.rows.len().min(step.hypothesis.len())];
    let scan = edatt_emit_count(
        rows,
        step.n_frames,
        start,
        cfg.lambda as usize,
        T::lit(cfg.alpha),
        cfg.filter_last_frame,
    )?;
    let mut decision = Decision {
        emit: scan.count,
        notes: Vec::new(),
    };
    if let Some(token_index) = scan.degenerate_at {
        decision.notes.push(PolicyNote::DegenerateRow { token_index });
    }
    Ok(decision)
}

/// Length of the longest common prefix.
pub fn common_prefix_len(a: &[String], b: &[String]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Local agreement: write whatever the previous and current from-scratch
/// hypotheses agree on and has not been written yet.
pub fn la_step<T>(step: &PrefixStep<T>, state: &mut PolicyState) -> Decision {
    let previous = state.previous_hypothesis.replace(step.hypothesis.clone());
    let Some(previous) = previous else {
        return Decision::wait();
    };
    let agreed = common_prefix_len(&previous, &step.hypothesis);
    match align_emitted(&step.hypothesis[..agreed], &state.emitted) {
        Some(start) => Decision {
            emit: agreed - start,
            notes: Vec::new(),
        },
        None if state.emitted.len() >= agreed && align_emitted(&step.hypothesis, &state.emitted[..agreed]).is_some() => {
            // agreement shrank below what is already written; nothing new
            Decision::wait()
        }
        None => Decision::mismatch(),
    }
}

/// wait-k over detected source words: token `i` (1-based) may be written
/// once `k + i - 1` words have been detected.
pub fn waitk_step<T>(step: &PrefixStep<T>, state: &PolicyState, cfg: &PolicyConfig) -> Decision {
    let Some(start) = align_emitted(&step.hypothesis, &state.emitted) else {
        return Decision::mismatch();
    };
    let allowed = (step.detected_words as usize + 1).saturating_sub(cfg.k as usize);
    Decision {
        emit: allowed.min(step.hypothesis.len()).saturating_sub(start),
        notes: Vec::new(),
    }
}

/// A configured policy. One instance serves any number of utterances; the
/// per-utterance memory lives in [`PolicyState`].
#[derive(Debug, Clone)]
pub struct Policy {
    cfg: PolicyConfig,
}

impl Policy {
    pub fn new(cfg: PolicyConfig) -> Result<Self, crate::config::ConfigError> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn kind(&self) -> PolicyKind {
        self.cfg.policy_kind
    }

    pub fn decide<T: Scalar>(&self, step: &PrefixStep<T>, state: &mut PolicyState) -> Result<Decision, PolicyError> {
        let decision = match self.cfg.policy_kind {
            PolicyKind::Edatt => edatt_step(step, state, &self.cfg)?,
            PolicyKind::LocalAgreement => la_step(step, state),
            PolicyKind::Waitk => waitk_step(step, state, &self.cfg),
        };
        debug_assert!(state.emitted.len() + decision.emit <= step.hypothesis.len());
        Ok(decision)
    }
}
