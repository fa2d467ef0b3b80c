use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use scmil::data::{generate_synthetic_cohort, load_bag, write_cohort, Cohort, SyntheticConfig};
use scmil::metrics::MetricsReport;
use scmil::pipeline::{
    compare_variants, cross_validate_folds, evaluate_model, predict_curve, prediction_grid, render_svg, sweep_w1,
    write_csv, write_svg, RunConfig, ScmilModel, NUM_FOLDS,
};
use scmil::{Error, Result};

#[derive(Parser)]
#[command(name = "scmil", version, about = "Survival prediction from patch-feature bags")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with a planted survival signal.
    Simulate {
        /// Generator settings as JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate one fold or all five.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Run settings as JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fold index 0-4, or "all".
        #[arg(long, default_value = "all")]
        fold: String,
        /// Output directory for checkpoints and metrics.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on every patient of a manifest.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Evaluation horizon; defaults to the largest event time.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = scmil::metrics::DEFAULT_GRID_SIZE)]
        grid_size: usize,
    },
    /// Write one patient's predicted survival curve.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bag: PathBuf,
        /// Number of time points.
        #[arg(long, default_value_t = 100)]
        grid: usize,
        /// Last time point; defaults to the longest training follow-up.
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Optional scatter plot of patch importance, clusters and weights.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Cross-validate over a list of morphology weights.
    #[command(name = "sweep-w1")]
    SweepW1 {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8,1.0")]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate each mixture-head variant.
    #[command(name = "compare-variants")]
    CompareVariants {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::from_json(&read_text(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn parse_folds(spec: &str) -> Result<Vec<usize>> {
    if spec == "all" {
        return Ok((0..NUM_FOLDS).collect());
    }
    match spec.parse::<usize>() {
        Ok(f) if f < NUM_FOLDS => Ok(vec![f]),
        _ => Err(Error::Config(format!("--fold must be 0-{} or \"all\", got {spec:?}", NUM_FOLDS - 1))),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = match config {
                Some(p) => SyntheticConfig::from_json(&read_text(&p)?)?,
                None => SyntheticConfig::default(),
            };
            let cohort = generate_synthetic_cohort(&cfg)?;
            write_cohort(&cohort, &out)?;
            println!("wrote {} patients to {}", cohort.records.len(), out.display());
        }
        Command::Train {
            manifest,
            config,
            fold,
            out,
        } => {
            let cfg = run_config(config.as_deref())?;
            let folds = parse_folds(&fold)?;
            let cohort = Cohort::load(&manifest)?;
            let report = cross_validate_folds(&cohort, &cfg, &folds, Some(&out))?;
            write_text(&out.join("metrics.json"), &serde_json::to_string_pretty(&report)?)?;
            println!(
                "TDC {:.4} ± {:.4}  IBS {:.4} ± {:.4}  ({} folds)",
                report.tdc.mean, report.tdc.std, report.ibs.mean, report.ibs.std, report.folds_used
            );
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            out,
            tau,
            grid_size,
        } => {
            let (model, _, _) = ScmilModel::load(&checkpoint)?;
            let cohort = Cohort::load(&manifest)?;
            let all: Vec<usize> = (0..cohort.len()).collect();
            let result = evaluate_model(&model, &cohort, &all, tau, grid_size)?;
            let report = MetricsReport::from(&result);
            write_text(&out, &serde_json::to_string_pretty(&report)?)?;
            println!("TDC {:.4}  IBS {:.4}", report.tdc, report.ibs);
        }
        Command::Predict {
            checkpoint,
            bag,
            grid,
            horizon,
            out,
            svg,
        } => {
            let (model, meta, _) = ScmilModel::load(&checkpoint)?;
            let bag = load_bag(&bag)?;
            let times = prediction_grid(horizon.unwrap_or(meta.time_horizon), grid)?;
            let prediction = predict_curve(&model, &bag, &times)?;
            write_csv(&out, &prediction.curve)?;
            if let Some(path) = svg {
                write_svg(&path, &render_svg(&bag, &prediction.interpretability))?;
            }
        }
        Command::SweepW1 {
            manifest,
            config,
            values,
            out,
        } => {
            let cfg = run_config(config.as_deref())?;
            let cohort = Cohort::load(&manifest)?;
            let rows = sweep_w1(&cohort, &cfg, &values)?;
            write_csv(&out, &rows)?;
        }
        Command::CompareVariants { manifest, config, out } => {
            let cfg = run_config(config.as_deref())?;
            let cohort = Cohort::load(&manifest)?;
            let rows = compare_variants(&cohort, &cfg)?;
            write_csv(&out, &rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
