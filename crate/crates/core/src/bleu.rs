//! Corpus BLEU with mteval-13a tokenization, mixed case and exponential
//! smoothing of zero n-gram precisions (the common sacreBLEU default
//! signature `case.mixed+smooth.exp+tok.13a`).

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;

pub const MAX_NGRAM_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BleuError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{hypotheses} hypotheses but {references} references")]
    LengthMismatch { hypotheses: usize, references: usize },
}

fn rules() -> &'static [(Regex, &'static str); 4] {
    static RULES: OnceLock<[(Regex, &'static str); 4]> = OnceLock::new();
    RULES.get_or_init(|| {
        [
            // ASCII punctuation and symbols, except period, comma, apostrophe and dash
            (Regex::new(r"([\{-\~\[-\x60 -\&\(-\+:-@/])").unwrap(), " ${1} "),
            // period and comma unless preceded by a digit
            (Regex::new(r"([^0-9])([\.,])").unwrap(), "${1} ${2} "),
            // period and comma unless followed by a digit
            (Regex::new(r"([\.,])([^0-9])").unwrap(), " ${1} ${2}"),
            // dash when preceded by a digit
            (Regex::new(r"([0-9])(-)").unwrap(), "${1} ${2} "),
        ]
    })
}

/// mteval-v13a tokenization. Case is preserved.
pub fn tokenize_13a(text: &str) -> Vec<String> {
    let mut line = text.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if line.contains('&') {
        line = line
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let mut line = format!(" {line} ");
    for (re, rep) in rules() {
        line = re.replace_all(&line, *rep).into_owned();
    }
    line.split_whitespace().map(str::to_owned).collect()
}

/// Sufficient statistics for BLEU; they add up across sentences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub correct: [u64; MAX_NGRAM_ORDER],
    pub total: [u64; MAX_NGRAM_ORDER],
    pub sys_len: u64,
    pub ref_len: u64,
}

impl std::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, rhs: Self) {
        for n in 0..MAX_NGRAM_ORDER {
            self.correct[n] += rhs.correct[n];
            self.total[n] += rhs.total[n];
        }
        self.sys_len += rhs.sys_len;
        self.ref_len += rhs.ref_len;
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Statistics for one hypothesis/reference pair (trailing whitespace is
/// stripped before tokenizing).
pub fn sentence_stats(hypothesis: &str, reference: &str) -> BleuStats {
    let hyp = tokenize_13a(hypothesis.trim_end());
    let reference = tokenize_13a(reference.trim_end());
    let mut stats = BleuStats {
        sys_len: hyp.len() as u64,
        ref_len: reference.len() as u64,
        ..BleuStats::default()
    };
    for n in 1..=MAX_NGRAM_ORDER {
        let hyp_counts = ngram_counts(&hyp, n);
        let ref_counts = ngram_counts(&reference, n);
        stats.total[n - 1] = hyp.len().saturating_sub(n - 1) as u64;
        stats.correct[n - 1] = hyp_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
    }
    stats
}

/// BLEU in [0, 100] from accumulated statistics.
pub fn score_from_stats(stats: &BleuStats) -> f64 {
    let bp = if stats.sys_len < stats.ref_len {
        if stats.sys_len > 0 {
            (1.0 - stats.ref_len as f64 / stats.sys_len as f64).exp()
        } else {
            0.0
        }
    } else {
        1.0
    };
    if stats.correct.iter().all(|&c| c == 0) {
        return 0.0;
    }
    // precisions as fractions so that a perfect match is exactly 100
    let mut precisions = [0.0f64; MAX_NGRAM_ORDER];
    let mut smooth = 1.0;
    for n in 0..MAX_NGRAM_ORDER {
        if stats.total[n] == 0 {
            break;
        }
        precisions[n] = if stats.correct[n] == 0 {
            smooth *= 2.0;
            1.0 / (smooth * stats.total[n] as f64)
        } else {
            stats.correct[n] as f64 / stats.total[n] as f64
        };
    }
    let log_sum: f64 = precisions
        .iter()
        .map(|&p| if p == 0.0 { -9_999_999_999.0 } else { p.ln() })
        .sum();
    100.0 * bp * (log_sum / MAX_NGRAM_ORDER as f64).exp()
}

/// Corpus-level BLEU (single reference per segment).
pub fn bleu_corpus<H: AsRef<str>, R: AsRef<str>>(hypotheses: &[H], references: &[R]) -> Result<f64, BleuError> {
    if hypotheses.len() != references.len() {
        return Err(BleuError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(BleuError::EmptyCorpus);
    }
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        stats += sentence_stats(h.as_ref(), r.as_ref());
    }
    Ok(score_from_stats(&stats))
}
