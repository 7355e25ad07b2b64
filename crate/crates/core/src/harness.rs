//! READ/WRITE simulation loop with a deterministic simulated clock.
//!
//! Two clocks run side by side. `source_time_ms` is how much audio has been
//! read; `wall_time_ms` is simulated elapsed time. Reading `n` ms of audio
//! advances both by `n` (audio arrives in real time); model and policy
//! compute only advance the wall clock, by whatever the [`CostModel`] says.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapters::{Adapter, AdapterError, ScriptedAdapter};
use crate::policies::{Policy, PolicyError, PolicyNote, PolicyState};
use crate::report::{evaluate, MetricReport};
use crate::trace::{UtteranceTrace, TIME_EPS_MS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComputeEvent {
    Query,
    Policy,
}

/// Simulated compute cost in ms. Must be non-negative.
pub trait CostModel: Sync {
    fn cost_ms(&self, event: ComputeEvent, prefix_ms: f64, hypothesis_len: usize) -> f64;
}

/// `a + b·prefix_ms` per model query; policy evaluation costs `policy_ms`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearCost {
    pub a_ms: f64,
    pub b: f64,
    #[serde(default)]
    pub policy_ms: f64,
}

impl LinearCost {
    pub const ZERO: LinearCost = LinearCost {
        a_ms: 0.0,
        b: 0.0,
        policy_ms: 0.0,
    };

    pub fn new(a_ms: f64, b: f64) -> Self {
        Self { a_ms, b, policy_ms: 0.0 }
    }

    pub fn is_valid(&self) -> bool {
        [self.a_ms, self.b, self.policy_ms]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

impl CostModel for LinearCost {
    fn cost_ms(&self, event: ComputeEvent, prefix_ms: f64, _hypothesis_len: usize) -> f64 {
        match event {
            ComputeEvent::Query => self.a_ms + self.b * prefix_ms,
            ComputeEvent::Policy => self.policy_ms,
        }
    }
}

pub struct SimulationClock<'c> {
    source_time_ms: f64,
    wall_time_ms: f64,
    cost_model: &'c dyn CostModel,
}

impl<'c> SimulationClock<'c> {
    pub fn new(cost_model: &'c dyn CostModel) -> Self {
        Self {
            source_time_ms: 0.0,
            wall_time_ms: 0.0,
            cost_model,
        }
    }

    pub fn source_time_ms(&self) -> f64 {
        self.source_time_ms
    }

    pub fn wall_time_ms(&self) -> f64 {
        self.wall_time_ms
    }

    /// Reads audio up to `prefix_ms`.
    pub fn read_until(&mut self, prefix_ms: f64) {
        let delta = (prefix_ms - self.source_time_ms).max(0.0);
        self.source_time_ms = prefix_ms;
        self.wall_time_ms += delta;
    }

    pub fn charge(&mut self, event: ComputeEvent, hypothesis_len: usize) {
        self.wall_time_ms += self.cost_model.cost_ms(event, self.source_time_ms, hypothesis_len);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRecord {
    pub token: String,
    pub ideal_delay_ms: f64,
    pub ca_delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Read { prefix_ms: f64 },
    Write { prefix_ms: f64, count: usize },
    PrefixMismatch { prefix_ms: f64 },
    DegenerateRow { prefix_ms: f64, token_index: usize },
    Flush { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub id: String,
    pub source_duration_ms: f64,
    pub reference: String,
    pub tokens: Vec<String>,
    pub delays: Vec<DelayRecord>,
    pub events: Vec<Event>,
}

impl RunResult {
    pub fn delay_log(&self) -> DelayLog {
        DelayLog {
            id: self.id.clone(),
            source_duration_ms: self.source_duration_ms,
            tokens: self.tokens.clone(),
            ideal_delays_ms: self.delays.iter().map(|d| d.ideal_delay_ms).collect(),
            ca_delays_ms: self.delays.iter().map(|d| d.ca_delay_ms).collect(),
        }
    }

    pub fn hypothesis_text(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("utterance {id}: {source}")]
    Policy { id: String, source: PolicyError },
    #[error("utterance {id}: adapter segment {adapter_ms} ms does not match policy segment {policy_ms} ms")]
    SegmentMismatch {
        id: String,
        adapter_ms: f64,
        policy_ms: f64,
    },
}

/// Simulates one utterance: read a segment, query, ask the policy, write,
/// repeat; then flush whatever the final hypothesis still holds.
pub fn run_utterance(
    adapter: &dyn Adapter,
    policy: &Policy,
    cost_model: &dyn CostModel,
) -> Result<RunResult, HarnessError> {
    let id = adapter.id().to_string();
    let policy_segment = policy.config().segment_ms;
    if (adapter.segment_ms() - policy_segment).abs() > TIME_EPS_MS {
        return Err(HarnessError::SegmentMismatch {
            id,
            adapter_ms: adapter.segment_ms(),
            policy_ms: policy_segment,
        });
    }

    let mut clock = SimulationClock::new(cost_model);
    let mut state = PolicyState::default();
    let mut delays = Vec::new();
    let mut events = Vec::new();
    let mut final_hypothesis: Vec<String> = Vec::new();

    for prefix_ms in adapter.schedule() {
        clock.read_until(prefix_ms);
        events.push(Event::Read { prefix_ms });

        let step = adapter.query(prefix_ms)?;
        clock.charge(ComputeEvent::Query, step.hypothesis.len());
        let decision = policy.decide(&step, &mut state).map_err(|source| HarnessError::Policy {
            id: id.clone(),
            source,
        })?;
        clock.charge(ComputeEvent::Policy, step.hypothesis.len());

        for note in &decision.notes {
            events.push(match *note {
                PolicyNote::PrefixMismatch => Event::PrefixMismatch { prefix_ms },
                PolicyNote::DegenerateRow { token_index } => Event::DegenerateRow { prefix_ms, token_index },
            });
        }
        if decision.emit > 0 {
            let start = state.emitted.len();
            for token in &step.hypothesis[start..start + decision.emit] {
                delays.push(DelayRecord {
                    token: token.clone(),
                    ideal_delay_ms: clock.source_time_ms(),
                    ca_delay_ms: clock.wall_time_ms(),
                });
                state.emitted.push(token.clone());
            }
            events.push(Event::Write {
                prefix_ms,
                count: decision.emit,
            });
        }
        state.step_index += 1;
        final_hypothesis = step.into_owned().hypothesis;
    }

    // the source is exhausted: the rest of the final hypothesis goes out now
    let remaining = final_hypothesis.get(state.emitted.len()..).unwrap_or(&[]);
    if !final_hypothesis.starts_with(&state.emitted) {
        events.push(Event::PrefixMismatch {
            prefix_ms: clock.source_time_ms(),
        });
    }
    for token in remaining {
        delays.push(DelayRecord {
            token: token.clone(),
            ideal_delay_ms: adapter.source_duration_ms(),
            ca_delay_ms: clock.wall_time_ms(),
        });
        state.emitted.push(token.clone());
    }
    events.push(Event::Flush { count: remaining.len() });

    Ok(RunResult {
        id,
        source_duration_ms: adapter.source_duration_ms(),
        reference: adapter.reference().to_string(),
        tokens: state.emitted,
        delays,
        events,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceOutcome {
    pub id: String,
    pub result: Result<RunResult, HarnessError>,
}

#[derive(Debug, Clone)]
pub struct CorpusRun {
    pub outcomes: Vec<UtteranceOutcome>,
    pub report: MetricReport,
}

impl CorpusRun {
    pub fn results(&self) -> impl Iterator<Item = &RunResult> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &HarnessError)> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().err().map(|e| (o.id.as_str(), e)))
    }
}

/// Runs every adapter (in parallel when `jobs > 1`) and scores the
/// successful runs. Outcomes are ordered by utterance id regardless of
/// scheduling; a failing utterance does not affect the others.
pub fn run_corpus_with<A: Adapter>(adapters: &[A], policy: &Policy, cost_model: &dyn CostModel, jobs: usize) -> CorpusRun {
    let run = |a: &A| UtteranceOutcome {
        id: a.id().to_string(),
        result: run_utterance(a, policy, cost_model),
    };
    let mut outcomes: Vec<UtteranceOutcome> = if jobs > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| adapters.par_iter().map(run).collect()),
            Err(_) => adapters.iter().map(run).collect(),
        }
    } else {
        adapters.iter().map(run).collect()
    };
    outcomes.sort_by(|a, b| a.id.cmp(&b.id));

    let ok: Vec<&RunResult> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let logs: Vec<DelayLog> = ok.iter().map(|r| r.delay_log()).collect();
    let refs: Vec<&str> = ok.iter().map(|r| r.reference.as_str()).collect();
    let mut report = evaluate(&logs, &refs).expect("one reference per run");
    report.failed = outcomes
        .iter()
        .filter(|o| o.result.is_err())
        .map(|o| o.id.clone())
        .collect();
    CorpusRun { outcomes, report }
}

/// [`run_corpus_with`] over recorded traces.
pub fn run_corpus(traces: &[UtteranceTrace], policy: &Policy, cost_model: &dyn CostModel, jobs: usize) -> CorpusRun {
    let adapters: Vec<ScriptedAdapter<'_>> = traces.iter().map(ScriptedAdapter::new).collect();
    run_corpus_with(&adapters, policy, cost_model, jobs)
}

/// One line of the delay-log JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayLog {
    pub id: String,
    pub source_duration_ms: f64,
    pub tokens: Vec<String>,
    pub ideal_delays_ms: Vec<f64>,
    pub ca_delays_ms: Vec<f64>,
}

pub fn write_delay_logs<W: Write>(mut writer: W, logs: &[DelayLog]) -> std::io::Result<()> {
    for log in logs {
        serde_json::to_writer(&mut writer, log)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum DelayLogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn read_delay_logs<R: BufRead>(reader: R) -> Result<Vec<DelayLog>, DelayLogError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let log: DelayLog = serde_json::from_str(&line).map_err(|e| DelayLogError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if log.tokens.len() != log.ideal_delays_ms.len() || log.tokens.len() != log.ca_delays_ms.len() {
            return Err(DelayLogError::Parse {
                line: idx + 1,
                message: "tokens and delay arrays differ in length".into(),
            });
        }
        out.push(log);
    }
    Ok(out)
}
