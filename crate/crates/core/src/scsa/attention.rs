use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Linear, Matrix, ParamId, ParamStore, Tape, Var};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Multi-head self-attention with a residual connection,
/// `L' = MHSA(L) + L`, applied independently to each cluster.
#[derive(Debug, Clone)]
pub struct ClusterAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
    /// Optional pre-attention layer norm (gain, bias).
    pub norm: Option<(ParamId, ParamId)>,
}

impl ClusterAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        dim: usize,
        heads: usize,
        layer_norm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "feature dim {dim} is not divisible by {heads} attention heads"
            )));
        }
        let norm = layer_norm.then(|| {
            (
                store.add("scsa.norm.gain", Matrix::filled(1, dim, 1.0), true),
                store.add("scsa.norm.bias", Matrix::zeros(1, dim), true),
            )
        });
        Ok(Self {
            query: Linear::new(store, "scsa.query", dim, dim, rng),
            key: Linear::new(store, "scsa.key", dim, dim, rng),
            value: Linear::new(store, "scsa.value", dim, dim, rng),
            output: Linear::new(store, "scsa.output", dim, dim, rng),
            heads,
            dim,
            norm,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Refines the rows of one cluster. Softmax runs over this cluster's
    /// rows only.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        cluster: Var,
        dropout: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let x = match self.norm {
            Some((gain, bias)) => {
                let z = tape.row_standardize(cluster, LAYER_NORM_EPS);
                let (rows, _) = tape.shape(z);
                let g = tape.param(store, gain);
                let ones = tape.constant(Matrix::filled(rows, 1, 1.0));
                let g = tape.matmul(ones, g)?;
                let z = tape.mul(z, g)?;
                let b = tape.param(store, bias);
                tape.add_row(z, b)?
            }
            None => cluster,
        };
        let q = self.query.forward(tape, store, x)?;
        let k = self.key.forward(tape, store, x)?;
        let v = self.value.forward(tape, store, x)?;

        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, dh);
            let kh = tape.slice_cols(k, h * dh, dh);
            let vh = tape.slice_cols(v, h * dh, dh);
            let scores = tape.matmul_t(qh, kh)?;
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax_rows(scores);
            let weights = tape.dropout(weights, dropout, training, rng)?;
            heads.push(tape.matmul(weights, vh)?);
        }
        let merged = if heads.len() == 1 {
            heads[0]
        } else {
            tape.concat_cols(&heads)?
        };
        let out = self.output.forward(tape, store, merged)?;
        let out = tape.dropout(out, dropout, training, rng)?;
        tape.add(out, cluster)
    }
}
