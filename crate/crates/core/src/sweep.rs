//! Quality/latency sweeps over a grid of policy configurations.

use std::cmp::Ordering;

use crate::config::{ConfigError, PolicyConfig, PolicyKind};
use crate::harness::{run_corpus, CostModel};
use crate::policies::Policy;
use crate::report::{format_cell, CorpusScores, SCORE_COLUMNS};
use crate::trace::{HeadSpec, UtteranceTrace};

pub const DEFAULT_ALPHAS: [f64; 6] = [0.6, 0.4, 0.2, 0.1, 0.05, 0.03];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub policies: Vec<PolicyKind>,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<u32>,
    pub layers: Vec<u32>,
    pub heads: Vec<HeadSpec>,
    pub ks: Vec<u32>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            policies: vec![PolicyKind::Edatt],
            alphas: DEFAULT_ALPHAS.to_vec(),
            lambdas: vec![2],
            layers: vec![4],
            heads: vec![HeadSpec::Averaged],
            ks: vec![1, 3, 5, 7, 9],
        }
    }
}

impl SweepGrid {
    /// Every configuration of the grid, validated and in sorted order.
    /// `base` supplies the segment length and the filtering flag.
    pub fn configs(&self, base: &PolicyConfig) -> Result<Vec<PolicyConfig>, ConfigError> {
        let mut out = Vec::new();
        for &kind in &self.policies {
            match kind {
                PolicyKind::Edatt => {
                    for &layer in &self.layers {
                        for &head in &self.heads {
                            for &lambda in &self.lambdas {
                                for &alpha in &self.alphas {
                                    out.push(PolicyConfig {
                                        policy_kind: kind,
                                        alpha,
                                        lambda,
                                        layer,
                                        head,
                                        ..base.clone()
                                    });
                                }
                            }
                        }
                    }
                }
                PolicyKind::Waitk => {
                    for &k in &self.ks {
                        out.push(PolicyConfig {
                            policy_kind: kind,
                            k,
                            ..base.clone()
                        });
                    }
                }
                PolicyKind::LocalAgreement => out.push(PolicyConfig {
                    policy_kind: kind,
                    ..base.clone()
                }),
            }
        }
        for cfg in &out {
            cfg.validate()?;
        }
        out.sort_by(compare_configs);
        out.dedup_by(|a, b| compare_configs(a, b) == Ordering::Equal);
        Ok(out)
    }
}

/// Sort key for sweep rows: policy, then layer, head, lambda, alpha (EDAtt)
/// or k (wait-k).
pub fn compare_configs(a: &PolicyConfig, b: &PolicyConfig) -> Ordering {
    a.policy_kind.cmp(&b.policy_kind).then_with(|| match a.policy_kind {
        PolicyKind::Edatt => a
            .layer
            .cmp(&b.layer)
            .then(a.head.cmp(&b.head))
            .then(a.lambda.cmp(&b.lambda))
            .then(a.alpha.total_cmp(&b.alpha)),
        PolicyKind::Waitk => a.k.cmp(&b.k),
        PolicyKind::LocalAgreement => Ordering::Equal,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: PolicyConfig,
    pub scores: Option<CorpusScores>,
    pub failed: usize,
}

pub fn run_sweep(
    traces: &[UtteranceTrace],
    grid: &SweepGrid,
    base: &PolicyConfig,
    cost_model: &dyn CostModel,
    jobs: usize,
) -> Result<Vec<SweepRow>, ConfigError> {
    grid.configs(base)?
        .into_iter()
        .map(|config| {
            let policy = Policy::new(config.clone())?;
            let run = run_corpus(traces, &policy, cost_model, jobs);
            Ok(SweepRow {
                config,
                scores: run.report.corpus,
                failed: run.report.failed.len(),
            })
        })
        .collect()
}

const CONFIG_COLUMNS: [&str; 6] = ["policy", "alpha", "lambda", "layer", "head", "k"];

fn config_cells(cfg: &PolicyConfig) -> [String; 6] {
    let dash = || "-".to_string();
    match cfg.policy_kind {
        PolicyKind::Edatt => [
            cfg.policy_kind.to_string(),
            format!("{}", cfg.alpha),
            cfg.lambda.to_string(),
            cfg.layer.to_string(),
            cfg.head.to_string(),
            dash(),
        ],
        PolicyKind::Waitk => [cfg.policy_kind.to_string(), dash(), dash(), dash(), dash(), cfg.k.to_string()],
        PolicyKind::LocalAgreement => [cfg.policy_kind.to_string(), dash(), dash(), dash(), dash(), dash()],
    }
}

pub fn sweep_tsv(rows: &[SweepRow]) -> String {
    let mut out = CONFIG_COLUMNS
        .iter()
        .chain(SCORE_COLUMNS.iter())
        .copied()
        .collect::<Vec<_>>()
        .join("\t");
    out.push('\n');
    for row in rows {
        let scores = row.scores.map_or([f64::NAN; 7], |s| s.columns());
        let cells: Vec<String> = config_cells(&row.config)
            .into_iter()
            .chain(scores.iter().map(|&v| format_cell(v)))
            .collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}
