use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::Cohort;
use crate::error::{Error, Result};
use crate::mdn::MdnVariant;
use crate::metrics::{evaluate, observations, EvalResult, MetricsReport};

use super::config::{RunConfig, NUM_FOLDS};
use super::folds::{stratified_folds, FoldSplit};
use super::model::ScmilModel;
use super::train::{train_fold, TrainOptions};

/// Scores a model on the cohort rows at `indices`.
pub fn evaluate_model(
    model: &ScmilModel,
    cohort: &Cohort,
    indices: &[usize],
    tau: Option<f64>,
    grid_size: usize,
) -> Result<EvalResult> {
    let predictions = indices
        .iter()
        .map(|&i| model.predict(&cohort.bags[i]).map(|(d, _)| d))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<_> = indices.iter().map(|&i| cohort.records[i].clone()).collect();
    evaluate(&observations(&records), &predictions, tau, grid_size)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_ids: Vec<String>,
    /// Held-out metrics; `None` when the fold was flagged.
    pub metrics: Option<MetricsReport>,
    /// Why the fold was left out of the aggregate.
    pub flagged: Option<String>,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Arithmetic mean and population standard deviation.
    pub fn of(values: &[f64]) -> Option<Self> {
        let first = *values.first()?;
        let n = values.len() as f64;
        // Accumulate offsets from the first value so identical inputs give
        // exactly that value back with zero spread.
        let mean = first + values.iter().map(|v| v - first).sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub tdc: MeanStd,
    pub ibs: MeanStd,
    pub folds_used: usize,
    /// Which epoch's weights were evaluated.
    pub epoch_policy: String,
}

/// Runs `job(i)` for `i in 0..n` on up to `threads` scoped threads.
/// Results come back in index order regardless of scheduling.
pub fn run_parallel<T, F>(n: usize, threads: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = job(i);
                slots.lock().expect("worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|s| s.expect("every job ran"))
        .collect()
}

/// Trains and evaluates the selected folds. Folds with no comparable pairs
/// are flagged and left out of the aggregate.
pub fn cross_validate_folds(
    cohort: &Cohort,
    cfg: &RunConfig,
    which: &[usize],
    checkpoint_root: Option<&Path>,
) -> Result<CvReport> {
    cfg.validate()?;
    let splits = stratified_folds(&cohort.records, NUM_FOLDS, cfg.seed)?;
    if let Some(&bad) = which.iter().find(|&&f| f >= NUM_FOLDS) {
        return Err(Error::Config(format!("fold {bad} out of range 0..{NUM_FOLDS}")));
    }
    let results = run_parallel(which.len(), cfg.worker_threads(), |j| {
        run_fold(cohort, &splits[which[j]], cfg, checkpoint_root)
    });
    let folds = results.into_iter().collect::<Result<Vec<_>>>()?;

    let used: Vec<&MetricsReport> = folds.iter().filter_map(|f| f.metrics.as_ref()).collect();
    for f in folds.iter().filter(|f| f.flagged.is_some()) {
        eprintln!("warning: fold {} excluded: {}", f.fold, f.flagged.as_deref().unwrap_or(""));
    }
    let tdc: Vec<f64> = used.iter().map(|m| m.tdc).collect();
    let ibs: Vec<f64> = used.iter().map(|m| m.ibs).collect();
    let (Some(tdc), Some(ibs)) = (MeanStd::of(&tdc), MeanStd::of(&ibs)) else {
        return Err(Error::UndefinedMetric("every fold was flagged".into()));
    };
    Ok(CvReport {
        folds_used: used.len(),
        folds,
        tdc,
        ibs,
        epoch_policy: "final".into(),
    })
}

pub fn cross_validate(cohort: &Cohort, cfg: &RunConfig, checkpoint_root: Option<&Path>) -> Result<CvReport> {
    let all: Vec<usize> = (0..NUM_FOLDS).collect();
    cross_validate_folds(cohort, cfg, &all, checkpoint_root)
}

fn run_fold(cohort: &Cohort, split: &FoldSplit, cfg: &RunConfig, checkpoint_root: Option<&Path>) -> Result<FoldResult> {
    let opts = TrainOptions {
        checkpoint_dir: checkpoint_root.map(|r| r.join(format!("fold{}", split.fold))),
        ..TrainOptions::default()
    };
    let outcome = train_fold(cohort, split, cfg, &opts)?;
    let (metrics, flagged) = match evaluate_model(&outcome.model, cohort, &split.test, cfg.tau, cfg.grid_size) {
        Ok(r) => (Some(MetricsReport::from(&r)), None),
        Err(Error::UndefinedMetric(reason)) => (None, Some(reason)),
        Err(e) => return Err(e),
    };
    Ok(FoldResult {
        fold: split.fold,
        test_ids: split.test_ids(&cohort.records),
        metrics,
        flagged,
        history: outcome.meta.history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub w1: f64,
    pub mean_tdc: f64,
    pub std_tdc: f64,
    pub mean_ibs: f64,
    pub std_ibs: f64,
}

/// One cross-validation per `w1` value. Fold splits depend only on the seed,
/// so every sweep point sees the same test sets.
pub fn sweep_w1(cohort: &Cohort, cfg: &RunConfig, values: &[f64]) -> Result<Vec<SweepRow>> {
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Config(format!("w1 value {v} outside [0,1]")));
    }
    values
        .iter()
        .map(|&w1| {
            let report = cross_validate(cohort, &RunConfig { w1, ..cfg.clone() }, None)?;
            Ok(SweepRow {
                w1,
                mean_tdc: report.tdc.mean,
                std_tdc: report.tdc.std,
                mean_ibs: report.ibs.mean,
                std_ibs: report.ibs.std,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: MdnVariant,
    pub mean_tdc: f64,
    pub std_tdc: f64,
    pub mean_ibs: f64,
    pub std_ibs: f64,
}

/// Cross-validates each mixture-head variant under otherwise equal settings.
pub fn compare_variants(cohort: &Cohort, cfg: &RunConfig) -> Result<Vec<VariantRow>> {
    [MdnVariant::Predicted, MdnVariant::Fixed, MdnVariant::Learnable]
        .into_iter()
        .map(|variant| {
            let report = cross_validate(cohort, &RunConfig { variant, ..cfg.clone() }, None)?;
            Ok(VariantRow {
                variant,
                mean_tdc: report.tdc.mean,
                std_tdc: report.tdc.std,
                mean_ibs: report.ibs.mean,
                std_ibs: report.ibs.std,
            })
        })
        .collect()
}

/// Writes serializable rows as CSV with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
