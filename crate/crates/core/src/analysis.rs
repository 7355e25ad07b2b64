//! Attention diagnostics for export: plain TSV matrices and per-layer /
//! per-head diagonality tables, filtered and raw.

use serde::Serialize;

use crate::attention::{average_heads, diagonality_score, filter_matrix, DEGENERATE_EPSILON};
use crate::trace::{AttentionMatrix, HeadSpec, PrefixStep, UtteranceTrace};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalityEntry {
    pub id: String,
    pub step: usize,
    pub prefix_ms: f64,
    pub layer: u32,
    pub head: HeadSpec,
    pub raw: f64,
    /// `None` when the matrix has fewer than two frames.
    pub filtered: Option<f64>,
}

/// Every stored matrix of a step, plus a derived head average for each layer
/// stored per head.
pub fn step_matrices(step: &PrefixStep) -> Vec<AttentionMatrix> {
    let mut out = step.attention.clone();
    let mut layers: Vec<u32> = step.attention.iter().map(|m| m.layer).collect();
    layers.sort_unstable();
    layers.dedup();
    for layer in layers {
        let has_avg = step
            .matrices_for_layer(layer)
            .any(|m| m.head == HeadSpec::Averaged);
        let heads: Vec<AttentionMatrix> = step
            .matrices_for_layer(layer)
            .filter(|m| m.head != HeadSpec::Averaged)
            .cloned()
            .collect();
        if !has_avg && !heads.is_empty() {
            if let Ok(avg) = average_heads(&heads) {
                out.push(avg);
            }
        }
    }
    out.sort_by(|a, b| a.layer.cmp(&b.layer).then(a.head.cmp(&b.head)));
    out
}

pub fn diagonality_entries(trace: &UtteranceTrace, step_index: usize, band: usize) -> Vec<DiagonalityEntry> {
    let Some(step) = trace.steps.get(step_index) else {
        return Vec::new();
    };
    step_matrices(step)
        .iter()
        .filter(|m| !m.rows.is_empty())
        .map(|m| DiagonalityEntry {
            id: trace.id.clone(),
            step: step_index,
            prefix_ms: step.prefix_ms,
            layer: m.layer,
            head: m.head,
            raw: diagonality_score(m, band),
            filtered: filter_matrix(m, DEGENERATE_EPSILON)
                .ok()
                .map(|(f, _)| diagonality_score(&f, band)),
        })
        .collect()
}

pub fn diagonality_tsv(entries: &[DiagonalityEntry]) -> String {
    let mut out = String::from("id\tstep\tprefix_ms\tlayer\thead\traw\tfiltered\n");
    for e in entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\n",
            e.id,
            e.step,
            e.prefix_ms,
            e.layer,
            e.head,
            e.raw,
            e.filtered.map_or("nan".to_string(), |v| format!("{v:.6}"))
        ));
    }
    out
}

/// Rows are tokens, columns frames; the first column holds the token.
pub fn matrix_tsv(matrix: &AttentionMatrix, tokens: &[String]) -> String {
    let mut out = String::from("token");
    for i in 0..matrix.n_frames {
        out.push_str(&format!("\t{i}"));
    }
    out.push('\n');
    for (j, row) in matrix.rows.iter().enumerate() {
        out.push_str(tokens.get(j).map_or("", String::as_str));
        for w in row {
            out.push_str(&format!("\t{w:.9}"));
        }
        out.push('\n');
    }
    out
}
