//! Learnable patch importance scoring and the soft relevance split.
//!
//! A two-layer MLP (d → d/2 tanh → 1) followed by a sigmoid scores each
//! patch. Features are multiplied by their score, which keeps the scorer
//! trainable from the bag-level loss alone; the threshold split that
//! follows is a hard, non-differentiable decision.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Linear, ParamStore, Tape, Var};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct SoftFilter {
    pub hidden: Linear,
    pub output: Linear,
    pub dim: usize,
}

impl SoftFilter {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, dim: usize, rng: &mut R) -> Self {
        let width = (dim / 2).max(1);
        Self {
            hidden: Linear::new(store, "filter.hidden", dim, width, rng),
            output: Linear::new(store, "filter.output", width, 1, rng),
            dim,
        }
    }

    /// Importance scores IS ∈ (0,1)ⁿ as an `n×1` column.
    pub fn score(&self, tape: &mut Tape, store: &ParamStore, feat: Var) -> Result<Var> {
        let (n, d) = tape.shape(feat);
        if d != self.dim {
            return Err(Error::Dimension {
                op: "soft_filter.score",
                left: (n, d),
                right: (n, self.dim),
            });
        }
        let h = self.hidden.forward(tape, store, feat)?;
        let h = tape.tanh(h);
        let logit = self.output.forward(tape, store, h)?;
        Ok(tape.sigmoid(logit))
    }
}

/// Result of scaling a bag by its importance scores and splitting it.
#[derive(Debug, Clone)]
pub struct FilteredBag {
    pub importance: Vec<f64>,
    /// H = Feat ⊙ IS, `n×d`.
    pub scaled: Var,
    /// Original row indices with IS ≥ threshold, ascending.
    pub relevant_index: Vec<usize>,
    /// The complement, ascending.
    pub irrelevant_index: Vec<usize>,
    /// Rows of H at `relevant_index`; `None` when empty.
    pub high: Option<Var>,
    /// Rows of H at `irrelevant_index`; `None` when empty.
    pub low: Option<Var>,
}

/// Indices at or above the threshold, and the rest. Ties count as relevant.
pub fn split_indices(importance: &[f64], threshold: f64) -> (Vec<usize>, Vec<usize>) {
    (0..importance.len()).partition(|&i| importance[i] >= threshold)
}

/// Scales each feature row by its score and splits rows by `threshold`.
pub fn apply_and_split(tape: &mut Tape, feat: Var, importance: Var, threshold: f64) -> Result<FilteredBag> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!("threshold {threshold} outside (0,1)")));
    }
    let scaled = tape.mul_col(feat, importance)?;
    let scores = tape.value(importance).data().to_vec();
    let (relevant_index, irrelevant_index) = split_indices(&scores, threshold);
    let high = (!relevant_index.is_empty()).then(|| tape.select_rows(scaled, &relevant_index));
    let low = (!irrelevant_index.is_empty()).then(|| tape.select_rows(scaled, &irrelevant_index));
    Ok(FilteredBag {
        importance: scores,
        scaled,
        relevant_index,
        irrelevant_index,
        high,
        low,
    })
}
