use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::numerics::Adam;

use super::config::RunConfig;
use super::folds::FoldSplit;
use super::model::{ModelMeta, ScmilModel};
use super::seeds::{derive_seed, TAG_EPOCH, TAG_INIT};

/// File name of the newest checkpoint inside a checkpoint directory.
pub const LATEST_CHECKPOINT: &str = "model.scmc";

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where to write one checkpoint per epoch plus [`LATEST_CHECKPOINT`].
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from this checkpoint instead of a fresh initialization.
    pub resume_from: Option<PathBuf>,
    /// Stop once this many epochs are complete (simulates an interruption).
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ScmilModel,
    pub optimizer: Adam,
    pub meta: ModelMeta,
}

impl TrainOutcome {
    pub fn history(&self) -> &[f64] {
        &self.meta.history
    }
}

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.scmc")
}

/// Trains one model on the fold's training patients with one Adam step per
/// batch, patients visited in a per-epoch shuffled order.
pub fn train_fold(cohort: &Cohort, split: &FoldSplit, cfg: &RunConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    split.check_disjoint()?;
    if split.train.is_empty() {
        return Err(Error::Config(format!("fold {} has no training patients", split.fold)));
    }
    let dim = cohort
        .dim()
        .ok_or_else(|| Error::Config("cannot train on an empty cohort".into()))?;
    let fold = split.fold as u64;
    let time_horizon = split
        .train
        .iter()
        .map(|&i| cohort.records[i].duration)
        .fold(0.0, f64::max);

    let (mut model, mut adam, mut meta) = match &opts.resume_from {
        Some(path) => resume(path, cfg, split.fold)?,
        None => {
            let model = ScmilModel::new(cfg, dim, derive_seed(cfg.seed, &[TAG_INIT, fold]))?;
            let adam = Adam::new(cfg.adam(), &model.store);
            let meta = ModelMeta {
                config: cfg.clone(),
                dim,
                fold: Some(split.fold),
                epochs_completed: 0,
                history: Vec::new(),
                time_horizon,
            };
            (model, adam, meta)
        }
    };
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let last = opts.stop_after.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    for epoch in meta.epochs_completed..last {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[TAG_EPOCH, fold, epoch as u64]));
        let mut order = split.train.clone();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grad();
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let record = &cohort.records[i];
                let loss = model.accumulate_loss(&cohort.bags[i], record.duration, record.event, weight, &mut rng)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        patient_id: record.patient_id.clone(),
                        epoch,
                    });
                }
                total += loss;
            }
            adam.step(&mut model.store)?;
        }
        meta.history.push(total / order.len() as f64);
        meta.epochs_completed = epoch + 1;
        if let Some(dir) = &opts.checkpoint_dir {
            model.save(&dir.join(epoch_checkpoint_name(epoch + 1)), &meta, Some(&adam))?;
            model.save(&dir.join(LATEST_CHECKPOINT), &meta, Some(&adam))?;
        }
    }
    Ok(TrainOutcome {
        model,
        optimizer: adam,
        meta,
    })
}

fn resume(path: &Path, cfg: &RunConfig, fold: usize) -> Result<(ScmilModel, Adam, ModelMeta)> {
    let (model, meta, ckpt) = ScmilModel::load(path)?;
    let comparable = |c: &RunConfig| RunConfig { threads: None, ..c.clone() };
    if comparable(&meta.config) != comparable(cfg) {
        return Err(Error::State(format!(
            "{} was written with a different run configuration",
            path.display()
        )));
    }
    if meta.fold != Some(fold) {
        return Err(Error::State(format!(
            "{} belongs to fold {:?}, not fold {fold}",
            path.display(),
            meta.fold
        )));
    }
    let state = ckpt
        .optimizer
        .ok_or_else(|| Error::State(format!("{} has no optimizer state", path.display())))?;
    Ok((model, state.into_adam(cfg.adam()), meta))
}
