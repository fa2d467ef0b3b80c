use rand::Rng;

use crate::error::Result;
use crate::numerics::{uniform_matrix, ParamId, ParamStore, Tape, Var};

/// Gated attention pooling:
///
/// ```text
/// αᵢ = softmaxᵢ( aᵀ (tanh(V hᵢ) ⊙ sigmoid(U hᵢ)) ),   Feat' = Σ αᵢ hᵢ
/// ```
#[derive(Debug, Clone, Copy)]
pub struct GatedAttentionPool {
    /// h × d
    pub u: ParamId,
    /// h × d
    pub v: ParamId,
    /// h × 1
    pub a: ParamId,
    pub dim: usize,
    pub gate_dim: usize,
}

#[derive(Debug, Clone)]
pub struct Pooled {
    /// `1×d` bag-level feature.
    pub feature: Var,
    /// Attention weight per input row, summing to 1.
    pub alphas: Vec<f64>,
}

impl GatedAttentionPool {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, dim: usize, gate_dim: usize, rng: &mut R) -> Self {
        Self {
            u: store.add("pool.u", uniform_matrix(rng, gate_dim, dim, dim), true),
            v: store.add("pool.v", uniform_matrix(rng, gate_dim, dim, dim), true),
            a: store.add("pool.a", uniform_matrix(rng, gate_dim, 1, gate_dim), true),
            dim,
            gate_dim,
        }
    }

    /// Pools the `n×d` rows of `h`. Dropout, when training, applies to the
    /// gate input only; the weighted sum uses the undropped rows.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        h: Var,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Pooled> {
        let gate_in = tape.dropout(h, dropout, training, rng)?;
        let u = tape.param(store, self.u);
        let v = tape.param(store, self.v);
        let a = tape.param(store, self.a);
        let tanh_part = tape.matmul_t(gate_in, v)?;
        let tanh_part = tape.tanh(tanh_part);
        let sig_part = tape.matmul_t(gate_in, u)?;
        let sig_part = tape.sigmoid(sig_part);
        let gated = tape.mul(tanh_part, sig_part)?;
        let scores = tape.matmul(gated, a)?;
        let scores = tape.transpose(scores);
        let alpha = tape.softmax_rows(scores);
        let feature = tape.matmul(alpha, h)?;
        Ok(Pooled {
            feature,
            alphas: tape.value(alpha).data().to_vec(),
        })
    }
}
