use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PatchBag;
use crate::error::{Error, Result};
use crate::mdn::{nll_loss, MixtureVars, RegisterMdn, SurvivalDistribution};
use crate::numerics::checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
use crate::numerics::{Adam, Matrix, ParamStore, Tape};
use crate::scsa::{cluster, ClusterAttention, GatedAttentionPool};
use crate::soft_filter::{apply_and_split, SoftFilter};

use super::config::RunConfig;
use super::seeds::{derive_seed, id_seed};

/// Per-patch explanation of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpretability {
    /// Importance score per patch.
    pub importance: Vec<f64>,
    /// Cluster id per patch; `None` for patches filtered as irrelevant.
    pub cluster: Vec<Option<usize>>,
    /// Pooling weight per patch, summing to 1.
    pub alpha: Vec<f64>,
}

/// Checkpoint metadata stored as JSON alongside the parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: RunConfig,
    pub dim: usize,
    pub fold: Option<usize>,
    pub epochs_completed: usize,
    /// Mean training loss of every completed epoch.
    pub history: Vec<f64>,
    /// Largest observed duration in the training data, used as a default
    /// prediction horizon.
    pub time_horizon: f64,
}

#[derive(Debug, Clone)]
pub struct ScmilModel {
    pub config: RunConfig,
    pub dim: usize,
    pub store: ParamStore,
    pub filter: SoftFilter,
    pub attention: ClusterAttention,
    pub pool: GatedAttentionPool,
    pub mdn: RegisterMdn,
}

impl ScmilModel {
    pub fn new(config: &RunConfig, dim: usize, init_seed: u64) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::Config("feature dimension must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut store = ParamStore::new();
        let filter = SoftFilter::new(&mut store, dim, &mut rng);
        let attention = ClusterAttention::new(&mut store, dim, config.heads, config.layer_norm, &mut rng)?;
        let pool = GatedAttentionPool::new(&mut store, dim, (dim / 2).max(1), &mut rng);
        let mdn = RegisterMdn::new(&mut store, dim, config.components, config.variant, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            dim,
            store,
            filter,
            attention,
            pool,
            mdn,
        })
    }

    /// Records the full forward pass on `tape`: filter, cluster attention on
    /// the relevant patches, gated pooling over every patch, mixture head.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape,
        bag: &PatchBag,
        training: bool,
        rng: &mut R,
    ) -> Result<(MixtureVars, Interpretability)> {
        self.forward_with(&self.store, tape, bag, training, rng)
    }

    /// Same as [`forward`](Self::forward) but reading parameter values from
    /// `store`, which must share this model's layout.
    pub fn forward_with<R: Rng + ?Sized>(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        bag: &PatchBag,
        training: bool,
        rng: &mut R,
    ) -> Result<(MixtureVars, Interpretability)> {
        if bag.dim() != self.dim {
            return Err(Error::Dimension {
                op: "model.forward",
                left: bag.features.shape(),
                right: (bag.len(), self.dim),
            });
        }
        let cfg = &self.config;
        let n = bag.len();
        let feat = tape.constant(bag.features.clone());
        let scores = self.filter.score(tape, store, feat)?;
        let split = apply_and_split(tape, feat, scores, cfg.threshold)?;

        let mut cluster_of = vec![None; n];
        // Pool input rows, with the patch index each row came from.
        let mut parts = Vec::new();
        let mut order = Vec::with_capacity(n);
        if let Some(high) = split.high {
            let positions = bag.normalized_positions().select_rows(&split.relevant_index);
            let partition = cluster(tape.value(high), &positions, cfg.w1, cfg.cluster_size, rng)?;
            for (c, members) in partition.members().into_iter().enumerate() {
                let rows = tape.select_rows(high, &members);
                parts.push(self.attention.forward(tape, store, rows, cfg.dropout, training, rng)?);
                for m in members {
                    let patch = split.relevant_index[m];
                    cluster_of[patch] = Some(c);
                    order.push(patch);
                }
            }
        }
        if let Some(low) = split.low {
            parts.push(low);
            order.extend_from_slice(&split.irrelevant_index);
        }
        let pooled_in = if parts.len() == 1 {
            parts[0]
        } else {
            tape.concat_rows(&parts)?
        };
        let pooled = self.pool.forward(tape, store, pooled_in, cfg.dropout, training, rng)?;
        let mixture = self.mdn.forward(tape, store, pooled.feature)?;

        let mut alpha = vec![0.0; n];
        for (&patch, &a) in order.iter().zip(&pooled.alphas) {
            alpha[patch] = a;
        }
        Ok((
            mixture,
            Interpretability {
                importance: split.importance,
                cluster: cluster_of,
                alpha,
            },
        ))
    }

    /// Inference-mode prediction. Clustering randomness is seeded from the
    /// run seed and the patient id, so repeated calls agree bitwise.
    pub fn predict(&self, bag: &PatchBag) -> Result<(SurvivalDistribution, Interpretability)> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, &[id_seed(&bag.patient_id)]));
        let mut tape = Tape::new();
        let (mixture, interp) = self.forward(&mut tape, bag, false, &mut rng)?;
        Ok((SurvivalDistribution::from_vars(&tape, &mixture)?, interp))
    }

    /// Training-mode loss for one patient; gradients, scaled by `weight`,
    /// are added to the parameter store.
    pub fn accumulate_loss<R: Rng + ?Sized>(
        &mut self,
        bag: &PatchBag,
        duration: f64,
        event: bool,
        weight: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let (mixture, _) = self.forward(&mut tape, bag, true, rng)?;
        let loss = nll_loss(&mut tape, &mixture, duration, event)?;
        let value = tape.value(loss).data()[0];
        if value.is_finite() {
            let scaled = tape.scale(loss, weight);
            tape.backward(scaled, &mut self.store)?;
        }
        Ok(value)
    }

    /// Copies parameter values from a checkpoint, matching by name.
    pub fn load_params(&mut self, params: &ParamStore) -> Result<()> {
        if params.len() != self.store.len() {
            return Err(Error::State(format!(
                "checkpoint has {} parameters, model expects {}",
                params.len(),
                self.store.len()
            )));
        }
        for p in params.iter() {
            let id = self
                .store
                .find(&p.name)
                .ok_or_else(|| Error::State(format!("checkpoint parameter {} not in model", p.name)))?;
            let target = self.store.get_mut(id);
            if target.value.shape() != p.value.shape() {
                return Err(Error::State(format!(
                    "parameter {} has shape {:?} in checkpoint, {:?} in model",
                    p.name,
                    p.value.shape(),
                    target.value.shape()
                )));
            }
            target.value = p.value.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, meta: &ModelMeta, adam: Option<&Adam>) -> Result<()> {
        write_checkpoint(path, &serde_json::to_string(meta)?, &self.store, adam)
    }

    /// Rebuilds a model from a checkpoint file, returning its metadata and
    /// raw contents (including optimizer state) as well.
    pub fn load(path: &Path) -> Result<(Self, ModelMeta, Checkpoint)> {
        let ckpt = read_checkpoint(path)?;
        let meta: ModelMeta = serde_json::from_str(&ckpt.meta)?;
        let mut model = Self::new(&meta.config, meta.dim, 0)?;
        model.load_params(&ckpt.params)?;
        Ok((model, meta, ckpt))
    }

    /// Values of a named parameter, if present.
    pub fn param_value(&self, name: &str) -> Option<&Matrix> {
        self.store.find(name).map(|id| self.store.value(id))
    }
}
