//! Latency metrics over per-token delays: Average Lagging, Length-Adaptive
//! Average Lagging and Differentiable Average Lagging.
//!
//! All three share the same inputs: delays `d_1..d_|Y|` (ms of source
//! consumed, or simulated wall-clock time for the computation-aware
//! variants), the source duration `|X|` and the reference length `|Y*|`.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("no emitted tokens")]
    EmptyDelays,
    #[error("reference length must be at least 1")]
    EmptyReference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyInput<T> {
    pub delays: Vec<T>,
    pub source_duration: T,
    pub ref_len: usize,
    /// Delay value marking "source fully read". Defaults to the source
    /// duration; the computation-aware variants pass the wall-clock time of
    /// the final read instead.
    pub terminal: Option<T>,
}

impl<T: Scalar> LatencyInput<T> {
    pub fn new(delays: Vec<T>, source_duration: T, ref_len: usize) -> Self {
        Self {
            delays,
            source_duration,
            ref_len,
            terminal: None,
        }
    }

    pub fn with_terminal(mut self, terminal: T) -> Self {
        self.terminal = Some(terminal);
        self
    }

    pub fn hyp_len(&self) -> usize {
        self.delays.len()
    }

    fn check(&self) -> Result<(), MetricError> {
        if self.delays.is_empty() {
            return Err(MetricError::EmptyDelays);
        }
        if self.ref_len == 0 {
            return Err(MetricError::EmptyReference);
        }
        Ok(())
    }

    /// 1-based index of the first delay at or past the terminal value;
    /// `|Y|` if none reaches it.
    pub fn tau(&self) -> usize {
        let terminal = self.terminal.unwrap_or(self.source_duration);
        self.delays
            .iter()
            .position(|&d| d >= terminal)
            .map_or(self.delays.len(), |i| i + 1)
    }
}

fn lagging<T: Scalar>(delays: &[T], tau: usize, gamma: T) -> T {
    let total: T = delays[..tau]
        .iter()
        .enumerate()
        .map(|(i, &d)| d - T::from_usize_exact(i) * gamma)
        .sum();
    total / T::from_usize_exact(tau)
}

/// AL with rate `γ = |X| / |Y*|`.
pub fn average_lagging<T: Scalar>(input: &LatencyInput<T>) -> Result<T, MetricError> {
    input.check()?;
    let gamma = input.source_duration / T::from_usize_exact(input.ref_len);
    Ok(lagging(&input.delays, input.tau(), gamma))
}

/// LAAL: AL with `γ = |X| / max(|Y|, |Y*|)`, so over-long outputs are not
/// rewarded.
pub fn laal<T: Scalar>(input: &LatencyInput<T>) -> Result<T, MetricError> {
    input.check()?;
    let len = input.ref_len.max(input.hyp_len());
    let gamma = input.source_duration / T::from_usize_exact(len);
    Ok(lagging(&input.delays, input.tau(), gamma))
}

/// DAL's adjusted delays: `d'_1 = d_1`, `d'_i = max(d_i, d'_{i-1} + γ)`.
pub fn dal_adjusted<T: Scalar>(delays: &[T], gamma: T) -> Vec<T> {
    let mut out: Vec<T> = Vec::with_capacity(delays.len());
    for &d in delays {
        let next = match out.last() {
            None => d,
            Some(&prev) => d.max_of(prev + gamma),
        };
        out.push(next);
    }
    out
}

/// DAL with `γ = |X| / |Y*|`, averaged over every emitted token.
pub fn dal<T: Scalar>(input: &LatencyInput<T>) -> Result<T, MetricError> {
    input.check()?;
    let gamma = input.source_duration / T::from_usize_exact(input.ref_len);
    let adjusted = dal_adjusted(&input.delays, gamma);
    Ok(lagging(&adjusted, adjusted.len(), gamma))
}

/// Wall-clock value at which the computation-aware series is considered to
/// have read the whole source: the CA delay of the first token whose ideal
/// delay reached `source_duration`, or the last CA delay when none did.
pub fn ca_terminal<T: Scalar>(ideal: &[T], ca: &[T], source_duration: T) -> Option<T> {
    ideal
        .iter()
        .position(|&d| d >= source_duration)
        .and_then(|i| ca.get(i).copied())
        .or_else(|| ca.last().copied())
}

/// The six latency numbers reported per utterance, in ms.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LatencyScores {
    pub al: f64,
    pub al_ca: f64,
    pub laal: f64,
    pub laal_ca: f64,
    pub dal: f64,
    pub dal_ca: f64,
}

impl LatencyScores {
    /// Ideal and computation-aware scores from paired delay series.
    pub fn compute(ideal: &[f64], ca: &[f64], source_duration: f64, ref_len: usize) -> Result<Self, MetricError> {
        let ideal_in = LatencyInput::new(ideal.to_vec(), source_duration, ref_len);
        let terminal = ca_terminal(ideal, ca, source_duration).ok_or(MetricError::EmptyDelays)?;
        let ca_in = LatencyInput::new(ca.to_vec(), source_duration, ref_len).with_terminal(terminal);
        Ok(Self {
            al: average_lagging(&ideal_in)?,
            al_ca: average_lagging(&ca_in)?,
            laal: laal(&ideal_in)?,
            laal_ca: laal(&ca_in)?,
            dal: dal(&ideal_in)?,
            dal_ca: dal(&ca_in)?,
        })
    }

    pub fn mean(items: &[LatencyScores]) -> Option<Self> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let avg = |f: fn(&LatencyScores) -> f64| items.iter().map(f).sum::<f64>() / n;
        Some(Self {
            al: avg(|s| s.al),
            al_ca: avg(|s| s.al_ca),
            laal: avg(|s| s.laal),
            laal_ca: avg(|s| s.laal_ca),
            dal: avg(|s| s.dal),
            dal_ca: avg(|s| s.dal_ca),
        })
    }
}
