//! Scoring a batch of delay logs against references.

use serde::Serialize;

use crate::bleu::{score_from_stats, sentence_stats, BleuStats};
use crate::harness::DelayLog;
use crate::metrics::LatencyScores;

/// Column layout shared by the report and sweep TSVs.
pub const SCORE_COLUMNS: [&str; 7] = ["BLEU", "AL", "AL_CA", "LAAL", "LAAL_CA", "DAL", "DAL_CA"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceMetrics {
    pub id: String,
    pub bleu: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    /// `None` when nothing was emitted.
    pub latency: Option<LatencyScores>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusScores {
    pub bleu: f64,
    /// Unweighted mean over utterances that emitted at least one token.
    pub latency: Option<LatencyScores>,
}

impl CorpusScores {
    /// The seven score columns; latency columns are `NaN` when undefined.
    pub fn columns(&self) -> [f64; 7] {
        let l = self.latency;
        let g = |f: fn(&LatencyScores) -> f64| l.as_ref().map_or(f64::NAN, f);
        [
            self.bleu,
            g(|s| s.al),
            g(|s| s.al_ca),
            g(|s| s.laal),
            g(|s| s.laal_ca),
            g(|s| s.dal),
            g(|s| s.dal_ca),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub no_data: bool,
    pub n_utterances: usize,
    pub corpus: Option<CorpusScores>,
    pub utterances: Vec<UtteranceMetrics>,
    /// Utterances whose simulation aborted; they are not scored.
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{logs} delay logs but {references} references")]
pub struct ReferenceCountMismatch {
    pub logs: usize,
    pub references: usize,
}

/// Reference length in words, as used by the latency schedules.
pub fn reference_length(reference: &str) -> usize {
    reference.split_whitespace().count()
}

/// Scores delay logs against references (same order, one per log).
pub fn evaluate<S: AsRef<str>>(logs: &[DelayLog], references: &[S]) -> Result<MetricReport, ReferenceCountMismatch> {
    if logs.len() != references.len() {
        return Err(ReferenceCountMismatch {
            logs: logs.len(),
            references: references.len(),
        });
    }
    let mut total = BleuStats::default();
    let mut utterances = Vec::with_capacity(logs.len());
    for (log, reference) in logs.iter().zip(references) {
        let reference = reference.as_ref();
        let hyp = log.tokens.join(" ");
        let stats = sentence_stats(&hyp, reference);
        total += stats;
        let ref_len = reference_length(reference).max(1);
        let latency = LatencyScores::compute(&log.ideal_delays_ms, &log.ca_delays_ms, log.source_duration_ms, ref_len).ok();
        utterances.push(UtteranceMetrics {
            id: log.id.clone(),
            bleu: score_from_stats(&stats),
            hyp_len: log.tokens.len(),
            ref_len,
            latency,
        });
    }
    let corpus = (!logs.is_empty()).then(|| {
        let lat: Vec<LatencyScores> = utterances.iter().filter_map(|u| u.latency).collect();
        CorpusScores {
            bleu: score_from_stats(&total),
            latency: LatencyScores::mean(&lat),
        }
    });
    Ok(MetricReport {
        no_data: logs.is_empty(),
        n_utterances: logs.len(),
        corpus,
        utterances,
        failed: Vec::new(),
    })
}

/// Fixed-precision cell: two decimals, `nan` for undefined values.
pub fn format_cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        "nan".into()
    }
}

impl MetricReport {
    /// Header plus one row with the corpus scores (latencies in ms).
    pub fn to_tsv(&self) -> String {
        let mut out = SCORE_COLUMNS.join("\t");
        out.push('\n');
        let cols = self.corpus.map_or([f64::NAN; 7], |c| c.columns());
        out.push_str(&cols.iter().map(|&v| format_cell(v)).collect::<Vec<_>>().join("\t"));
        out.push('\n');
        out
    }
}
