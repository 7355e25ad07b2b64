//! Simultaneous speech translation decision policies and a latency
//! benchmark harness.
//!
//! The crate replays recorded (or synthetic) model outputs for growing audio
//! prefixes, lets a decision policy choose between reading more audio and
//! writing tokens, and scores the resulting delays with AL, LAAL and DAL
//! (ideal and computation-aware) plus corpus BLEU.
//!
//! Policies:
//! - **EDAtt**: write the next token while the attention mass on its last
//!   `λ` encoder frames stays below `α`.
//! - **Local agreement**: write the common prefix of two consecutive
//!   hypotheses.
//! - **wait-k**: write token `i` once `k + i - 1` source words were detected.
//!
//! The attention and latency math is generic over [`Scalar`], so it runs on
//! `f32`, `f64` and on exact rationals ([`Exact`]).

pub mod adapters;
pub mod analysis;
pub mod attention;
pub mod bleu;
pub mod config;
pub mod harness;
pub mod metrics;
pub mod policies;
pub mod report;
pub mod scalar;
pub mod sweep;
pub mod trace;
pub mod validate;

pub use adapters::{Adapter, AdapterError, ScriptedAdapter, SyntheticAdapter, SyntheticSpec};
pub use attention::{average_heads, diagonality_score, filter_last_frame, tail_mass, AttentionError, FilteredRow};
pub use bleu::{bleu_corpus, tokenize_13a, BleuError};
pub use config::{ConfigError, PolicyConfig, PolicyKind};
pub use harness::{
    run_corpus, run_utterance, CostModel, DelayLog, DelayRecord, Event, HarnessError, LinearCost, RunResult,
};
pub use metrics::{average_lagging, dal, laal, LatencyInput, LatencyScores, MetricError};
pub use policies::{align_emitted, Decision, Policy, PolicyError, PolicyState};
pub use report::{evaluate, MetricReport};
pub use scalar::{Exact, Scalar};
pub use sweep::{run_sweep, sweep_tsv, SweepGrid};
pub use trace::{AttentionMatrix, AttentionMode, HeadSpec, PrefixStep, TraceError, UtteranceTrace};
pub use validate::{validate_trace, Invariant, Violation};

pub type FilteredRow64 = FilteredRow<f64>;
pub type FilteredRow32 = FilteredRow<f32>;
pub type ExactFilteredRow = FilteredRow<Exact>;
pub type LatencyInput64 = LatencyInput<f64>;
pub type LatencyInput32 = LatencyInput<f32>;
pub type ExactLatencyInput = LatencyInput<Exact>;
pub type ExactAttentionMatrix = AttentionMatrix<Exact>;
pub type ExactPrefixStep = PrefixStep<Exact>;
