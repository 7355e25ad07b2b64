//! Attention preprocessing: last-frame filtering, head averaging, the tail
//! mass used by the threshold policy, and a pseudo-diagonality diagnostic.

use std::borrow::Cow;

use crate::scalar::Scalar;
use crate::trace::{AttentionMatrix, HeadSpec, PrefixStep};

/// Residual mass below which a filtered row is treated as degenerate.
pub const DEGENERATE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AttentionError {
    #[error("row has {0} frame(s); filtering needs at least 2")]
    TooFewFrames(usize),
    #[error("head stack is empty")]
    EmptyStack,
    #[error("shape mismatch: expected {expected_rows}x{expected_frames}, found {rows}x{frames}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_frames: usize,
        rows: usize,
        frames: usize,
    },
    #[error("no attention recorded for layer {0}")]
    MissingLayer(u32),
    #[error("no attention recorded for layer {layer}, head {head}")]
    MissingHead { layer: u32, head: HeadSpec },
}

/// A row with the last frame removed and the rest renormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredRow<T> {
    pub weights: Vec<T>,
    /// The surviving frames carried (almost) no mass; `weights` is uniform.
    pub degenerate: bool,
}

impl<T: Scalar> FilteredRow<T> {
    /// Wraps weights that are already filtered and normalized.
    pub fn from_normalized(weights: Vec<T>) -> Self {
        Self {
            weights,
            degenerate: false,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn tail_mass(&self, lambda: usize) -> T {
        tail_mass(&self.weights, lambda)
    }
}

/// Drops the last frame and renormalizes the remaining weights.
///
/// If the remaining mass is below `epsilon` the uniform distribution over the
/// remaining frames is returned with `degenerate` set.
pub fn filter_last_frame<T: Scalar>(row: &[T], epsilon: T) -> Result<FilteredRow<T>, AttentionError> {
    if row.len() < 2 {
        return Err(AttentionError::TooFewFrames(row.len()));
    }
    let kept = &row[..row.len() - 1];
    let mass: T = kept.iter().copied().sum();
    if mass < epsilon {
        let uniform = T::one() / T::from_usize_exact(kept.len());
        return Ok(FilteredRow {
            weights: vec![uniform; kept.len()],
            degenerate: true,
        });
    }
    Ok(FilteredRow {
        weights: kept.iter().map(|&w| w / mass).collect(),
        degenerate: false,
    })
}

/// Filters every row of a matrix. Returns the filtered matrix (one frame
/// narrower) and the per-row degenerate flags.
pub fn filter_matrix<T: Scalar>(
    matrix: &AttentionMatrix<T>,
    epsilon: T,
) -> Result<(AttentionMatrix<T>, Vec<bool>), AttentionError> {
    if matrix.n_frames < 2 {
        return Err(AttentionError::TooFewFrames(matrix.n_frames));
    }
    let mut rows = Vec::with_capacity(matrix.rows.len());
    let mut flags = Vec::with_capacity(matrix.rows.len());
    for row in &matrix.rows {
        let f = filter_last_frame(row, epsilon)?;
        flags.push(f.degenerate);
        rows.push(f.weights);
    }
    Ok((
        AttentionMatrix {
            layer: matrix.layer,
            head: matrix.head,
            n_frames: matrix.n_frames - 1,
            rows,
        },
        flags,
    ))
}

/// Elementwise mean over a stack of same-shaped per-head matrices.
pub fn average_heads<T: Scalar>(stack: &[AttentionMatrix<T>]) -> Result<AttentionMatrix<T>, AttentionError> {
    let first = stack.first().ok_or(AttentionError::EmptyStack)?;
    let (n_rows, n_frames) = (first.rows.len(), first.n_frames);
    for m in stack {
        let bad_row = m.rows.iter().any(|r| r.len() != n_frames);
        if m.rows.len() != n_rows || m.n_frames != n_frames || bad_row {
            return Err(AttentionError::ShapeMismatch {
                expected_rows: n_rows,
                expected_frames: n_frames,
                rows: m.rows.len(),
                frames: m.rows.iter().map(Vec::len).find(|&l| l != n_frames).unwrap_or(m.n_frames),
            });
        }
    }
    let count = T::from_usize_exact(stack.len());
    let rows = (0..n_rows)
        .map(|j| {
            (0..n_frames)
                .map(|i| stack.iter().map(|m| m.rows[j][i]).sum::<T>() / count)
                .collect()
        })
        .collect();
    Ok(AttentionMatrix {
        layer: first.layer,
        head: HeadSpec::Averaged,
        n_frames,
        rows,
    })
}

/// Sum of the last `min(lambda, len)` weights.
pub fn tail_mass<T: Scalar>(weights: &[T], lambda: usize) -> T {
    let start = weights.len().saturating_sub(lambda);
    weights[start..].iter().copied().sum()
}

/// Anchor column for row `j` of an `n_rows × n_frames` matrix:
/// `round(j · n_frames / n_rows)`, half rounded up, clamped to the last frame.
pub fn diagonal_anchor(j: usize, n_rows: usize, n_frames: usize) -> usize {
    if n_rows == 0 || n_frames == 0 {
        return 0;
    }
    let a = (2 * j * n_frames + n_rows) / (2 * n_rows);
    a.min(n_frames - 1)
}

/// Mean over rows of the mass within `±band` frames of each row's diagonal
/// anchor. `1.0` means every row sits exactly on the proportional diagonal.
pub fn diagonality_score<T: Scalar>(matrix: &AttentionMatrix<T>, band: usize) -> T {
    let n_rows = matrix.rows.len();
    if n_rows == 0 || matrix.n_frames == 0 {
        return T::zero();
    }
    let total: T = matrix
        .rows
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let anchor = diagonal_anchor(j, n_rows, matrix.n_frames);
            let lo = anchor.saturating_sub(band);
            let hi = (anchor + band).min(row.len().saturating_sub(1));
            if row.is_empty() || lo > hi {
                T::zero()
            } else {
                row[lo..=hi].iter().copied().sum()
            }
        })
        .sum();
    total / T::from_usize_exact(n_rows)
}

/// Picks the matrix a policy should look at for `layer`/`head`.
///
/// An averaged request is served by a stored averaged matrix when present,
/// otherwise by averaging that layer's per-head stack.
pub fn select_matrix<T: Scalar>(
    step: &PrefixStep<T>,
    layer: u32,
    head: HeadSpec,
) -> Result<Cow<'_, AttentionMatrix<T>>, AttentionError> {
    if let Some(m) = step.attention.iter().find(|m| m.layer == layer && m.head == head) {
        return Ok(Cow::Borrowed(m));
    }
    let per_head: Vec<AttentionMatrix<T>> = step
        .matrices_for_layer(layer)
        .filter(|m| matches!(m.head, HeadSpec::Head(_)))
        .cloned()
        .collect();
    if per_head.is_empty() {
        if step.matrices_for_layer(layer).next().is_none() {
            return Err(AttentionError::MissingLayer(layer));
        }
        return Err(AttentionError::MissingHead { layer, head });
    }
    match head {
        HeadSpec::Averaged => average_heads(&per_head).map(Cow::Owned),
        HeadSpec::Head(_) => Err(AttentionError::MissingHead { layer, head }),
    }
}
