//! Model assembly, training, cross-validation and experiment harnesses.

mod config;
mod cv;
mod folds;
mod model;
mod predict;
pub mod seeds;
mod train;

pub use config::{RunConfig, NUM_FOLDS};
pub use cv::{
    compare_variants, cross_validate, cross_validate_folds, evaluate_model, run_parallel, sweep_w1, write_csv,
    CvReport, FoldResult, MeanStd, SweepRow, VariantRow,
};
pub use folds::{stratified_folds, FoldSplit};
pub use model::{Interpretability, ModelMeta, ScmilModel};
pub use predict::{predict_curve, prediction_grid, render_svg, write_svg, CurvePoint, Prediction};
pub use train::{epoch_checkpoint_name, train_fold, TrainOptions, TrainOutcome, LATEST_CHECKPOINT};
