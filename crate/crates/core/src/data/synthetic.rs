//! Synthetic cohorts with a planted, spatially clustered survival signal.
//!
//! Each bag mixes background patches (isotropic normal features, uniform
//! positions) with a co-located clique of "risky" patches whose features
//! lean along a fixed direction. A patient's risk is the fraction `r` of
//! risky patches, and the event time is exponential with rate
//! `base_hazard · hazard_multiplier^r`.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::bag::{write_bag, PatchBag};
use super::manifest::{write_manifest, CohortRecord};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Side length of the square slide the synthetic positions live on.
const SLIDE_EXTENT: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_patients: usize,
    /// Inclusive range of patches per bag.
    pub patches_per_bag: (usize, usize),
    pub d: usize,
    /// Unit vector in ℝᵈ; drawn from the seed when absent.
    pub risky_direction: Option<Vec<f64>>,
    /// Per-patient risky fraction is drawn uniformly from this interval.
    pub risky_fraction_range: (f64, f64),
    /// Events per year at zero risk.
    pub base_hazard: f64,
    pub hazard_multiplier: f64,
    pub censor_rate: f64,
    /// Mean offset of risky patches along the risky direction.
    pub risky_shift: f64,
    /// Standard deviation of clique positions around their center, in
    /// slide units (the slide is 100 × 100).
    pub clique_spread: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_patients: 200,
            patches_per_bag: (256, 1024),
            d: 32,
            risky_direction: None,
            risky_fraction_range: (0.0, 1.0),
            base_hazard: 0.25,
            hazard_multiplier: 16.0,
            censor_rate: 0.3,
            risky_shift: 2.0,
            clique_spread: 6.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let (lo, hi) = self.patches_per_bag;
        if self.n_patients == 0 {
            return bad("n_patients must be at least 1".into());
        }
        if lo == 0 || lo > hi {
            return bad(format!("patches_per_bag range ({lo}, {hi}) is empty or starts at 0"));
        }
        if self.d == 0 {
            return bad("d must be at least 1".into());
        }
        let (rlo, rhi) = self.risky_fraction_range;
        if !(0.0..=1.0).contains(&rlo) || !(0.0..=1.0).contains(&rhi) || rlo > rhi {
            return bad(format!("risky_fraction_range ({rlo}, {rhi}) must be a subinterval of [0,1]"));
        }
        if !(self.base_hazard > 0.0 && self.base_hazard.is_finite()) {
            return bad(format!("base_hazard must be positive, got {}", self.base_hazard));
        }
        if !(self.hazard_multiplier > 0.0 && self.hazard_multiplier.is_finite()) {
            return bad(format!("hazard_multiplier must be positive, got {}", self.hazard_multiplier));
        }
        if !(0.0..=1.0).contains(&self.censor_rate) {
            return bad(format!("censor_rate {} outside [0,1]", self.censor_rate));
        }
        if !self.risky_shift.is_finite() || !(self.clique_spread >= 0.0) {
            return bad("risky_shift must be finite and clique_spread nonnegative".into());
        }
        if let Some(dir) = &self.risky_direction {
            if dir.len() != self.d {
                return bad(format!("risky_direction has {} entries, d = {}", dir.len(), self.d));
            }
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return bad(format!("risky_direction must be a unit vector, norm is {norm}"));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Generator output. Record `bag_path`s are bare file names
/// (`<patient_id>.scmb`) until the cohort is written to disk.
#[derive(Debug, Clone)]
pub struct SyntheticCohort {
    pub bags: Vec<PatchBag>,
    pub records: Vec<CohortRecord>,
    /// Realized fraction of risky patches per patient.
    pub risky_fractions: Vec<f64>,
    /// Uncensored event time per patient, before censoring.
    pub event_times: Vec<f64>,
}

pub fn generate_synthetic_cohort(cfg: &SyntheticConfig) -> Result<SyntheticCohort> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let direction = match &cfg.risky_direction {
        Some(dir) => dir.clone(),
        None => random_unit_vector(&mut rng, cfg.d),
    };

    let mut out = SyntheticCohort {
        bags: Vec::with_capacity(cfg.n_patients),
        records: Vec::with_capacity(cfg.n_patients),
        risky_fractions: Vec::with_capacity(cfg.n_patients),
        event_times: Vec::with_capacity(cfg.n_patients),
    };
    for i in 0..cfg.n_patients {
        let patient_id = format!("P{i:04}");
        let (bag, r) = generate_bag(&mut rng, cfg, &direction, patient_id.clone())?;

        let rate = cfg.base_hazard * cfg.hazard_multiplier.powf(r);
        let event_time: f64 = Exp::new(rate)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(&mut rng)
            .max(1e-9);
        let censored = rng.gen::<f64>() < cfg.censor_rate;
        // 1 - U[0,1) lies in (0,1], so the censoring time stays positive.
        let follow_up = event_time * (1.0 - rng.gen::<f64>());
        let (duration, event) = if censored {
            (follow_up.max(1e-9), false)
        } else {
            (event_time, true)
        };

        out.records.push(CohortRecord {
            patient_id: patient_id.clone(),
            duration,
            event,
            bag_path: PathBuf::from(format!("{patient_id}.scmb")),
        });
        out.bags.push(bag);
        out.risky_fractions.push(r);
        out.event_times.push(event_time);
    }
    Ok(out)
}

fn random_unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn generate_bag(
    rng: &mut ChaCha8Rng,
    cfg: &SyntheticConfig,
    direction: &[f64],
    patient_id: String,
) -> Result<(PatchBag, f64)> {
    let (lo, hi) = cfg.patches_per_bag;
    let n = rng.gen_range(lo..=hi);
    let (rlo, rhi) = cfg.risky_fraction_range;
    let target = if rhi > rlo { rng.gen_range(rlo..=rhi) } else { rlo };
    let n_risky = ((target * n as f64).round() as usize).min(n);

    let margin = (3.0 * cfg.clique_spread).min(SLIDE_EXTENT / 2.0);
    let center = [
        rng.gen_range(margin..=SLIDE_EXTENT - margin),
        rng.gen_range(margin..=SLIDE_EXTENT - margin),
    ];

    let d = cfg.d;
    let mut rows: Vec<(Vec<f64>, [f64; 2])> = Vec::with_capacity(n);
    for k in 0..n {
        let mut f: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let pos = if k < n_risky {
            // Keep the component along the direction strictly above the shift.
            let along: f64 = f.iter().zip(direction).map(|(a, b)| a * b).sum();
            let lift = cfg.risky_shift + along.abs() - along;
            f.iter_mut().zip(direction).for_each(|(x, u)| *x += lift * u);
            let dx: f64 = StandardNormal.sample(rng);
            let dy: f64 = StandardNormal.sample(rng);
            [
                (center[0] + cfg.clique_spread * dx).clamp(0.0, SLIDE_EXTENT),
                (center[1] + cfg.clique_spread * dy).clamp(0.0, SLIDE_EXTENT),
            ]
        } else {
            [rng.gen_range(0.0..SLIDE_EXTENT), rng.gen_range(0.0..SLIDE_EXTENT)]
        };
        rows.push((f, pos));
    }
    rows.shuffle(rng);

    let mut features = Vec::with_capacity(n * d);
    let mut positions = Vec::with_capacity(n * 2);
    for (f, p) in rows {
        features.extend(f);
        positions.extend(p);
    }
    let bag = PatchBag::new(
        patient_id,
        Matrix::from_vec(n, d, features)?,
        Matrix::from_vec(n, 2, positions)?,
    )?;
    Ok((bag, n_risky as f64 / n as f64))
}

/// Writes every bag plus `manifest.csv` into `dir` and returns the records
/// with bag paths resolved against `dir`.
pub fn write_cohort(cohort: &SyntheticCohort, dir: &Path) -> Result<Vec<CohortRecord>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(cohort.records.len());
    for (bag, rec) in cohort.bags.iter().zip(&cohort.records) {
        let path = dir.join(&rec.bag_path);
        write_bag(bag, &path)?;
        records.push(CohortRecord {
            bag_path: path,
            ..rec.clone()
        });
    }
    write_manifest(&dir.join("manifest.csv"), &records)?;
    Ok(records)
}
