//! Censored-survival evaluation: Kaplan–Meier, time-dependent concordance,
//! IPCW Brier score and its integral over time.

use serde::{Deserialize, Serialize};

use crate::data::CohortRecord;
use crate::error::{Error, Result};
use crate::mdn::SurvivalDistribution;

pub const DEFAULT_GRID_SIZE: usize = 100;

/// One observed outcome: follow-up time and whether death was observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub time: f64,
    pub event: bool,
}

impl Observation {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event }
    }
}

impl From<&CohortRecord> for Observation {
    fn from(r: &CohortRecord) -> Self {
        Self::new(r.duration, r.event)
    }
}

pub fn observations(records: &[CohortRecord]) -> Vec<Observation> {
    records.iter().map(Observation::from).collect()
}

/// Right-continuous survival step function, equal to 1 before the first
/// breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    /// Value at `t`, including any jump located exactly at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit `S(t⁻)`, excluding a jump located exactly at `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&b| b < t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }
}

/// Product-limit estimate of the survival function. At tied times all
/// deaths are counted before censorings leave the risk set.
pub fn kaplan_meier(obs: &[Observation]) -> Result<StepFunction> {
    if obs.is_empty() {
        return Err(Error::Domain("Kaplan–Meier needs a nonempty cohort".into()));
    }
    let mut sorted: Vec<Observation> = obs.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut at_risk = sorted.len();
    let mut surv = 1.0;
    let mut out = StepFunction {
        breakpoints: Vec::new(),
        values: Vec::new(),
    };
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].time;
        let mut j = i;
        let mut deaths = 0;
        while j < sorted.len() && sorted[j].time == t {
            deaths += sorted[j].event as usize;
            j += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
            out.breakpoints.push(t);
            out.values.push(surv);
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(out)
}

/// Kaplan–Meier estimate of the censoring distribution `G`.
pub fn censoring_km(obs: &[Observation]) -> Result<StepFunction> {
    let flipped: Vec<Observation> = obs.iter().map(|o| Observation::new(o.time, !o.event)).collect();
    kaplan_meier(&flipped)
}

/// Largest observed event time, the default evaluation horizon.
pub fn default_tau(obs: &[Observation]) -> Result<f64> {
    obs.iter()
        .filter(|o| o.event)
        .map(|o| o.time)
        .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))))
        .ok_or_else(|| Error::UndefinedMetric("no observed events, so τ is undefined".into()))
}

/// Concordance tallies in half-pair units so that the ratio is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConcordanceCount {
    pub comparable: u64,
    /// Twice the concordant count; ties contribute 1.
    pub concordant_halves: u64,
}

impl ConcordanceCount {
    pub fn value(&self) -> Result<f64> {
        if self.comparable == 0 {
            return Err(Error::UndefinedMetric("no comparable pairs for concordance".into()));
        }
        Ok(self.concordant_halves as f64 / (2 * self.comparable) as f64)
    }
}

/// Time-dependent concordance tallies. `dcdf(j, t)` is patient `j`'s
/// predicted death probability by time `t`.
pub fn concordance_counts<F>(obs: &[Observation], dcdf: F, tau: f64) -> ConcordanceCount
where
    F: Fn(usize, f64) -> f64,
{
    let mut count = ConcordanceCount {
        comparable: 0,
        concordant_halves: 0,
    };
    for (i, oi) in obs.iter().enumerate() {
        if !oi.event || oi.time > tau {
            continue;
        }
        let mut own = None;
        for (j, oj) in obs.iter().enumerate() {
            if oi.time >= oj.time {
                continue;
            }
            let ri = *own.get_or_insert_with(|| dcdf(i, oi.time));
            let rj = dcdf(j, oi.time);
            count.comparable += 1;
            count.concordant_halves += if ri > rj {
                2
            } else if ri == rj {
                1
            } else {
                0
            };
        }
    }
    count
}

/// Antolini time-dependent concordance.
pub fn tdc<F>(obs: &[Observation], dcdf: F, tau: f64) -> Result<f64>
where
    F: Fn(usize, f64) -> f64,
{
    concordance_counts(obs, dcdf, tau).value()
}

/// IPCW Brier score at time `t`. `scdf(j, t)` is patient `j`'s predicted
/// survival probability at `t`; `g` is the censoring survival curve.
pub fn brier<F>(obs: &[Observation], scdf: F, t: f64, g: &StepFunction) -> Result<f64>
where
    F: Fn(usize, f64) -> f64,
{
    if obs.is_empty() {
        return Err(Error::Domain("Brier score needs a nonempty cohort".into()));
    }
    let g_t = g.eval(t);
    let mut total = 0.0;
    for (j, o) in obs.iter().enumerate() {
        if o.time <= t && o.event {
            let w = g.eval_left(o.time);
            if w <= 0.0 {
                return Err(Error::UndefinedMetric(format!("censoring weight is 0 at t = {}", o.time)));
            }
            total += scdf(j, t).powi(2) / w;
        } else if o.time > t {
            if g_t <= 0.0 {
                return Err(Error::UndefinedMetric(format!("censoring weight is 0 at t = {t}")));
            }
            total += (1.0 - scdf(j, t)).powi(2) / g_t;
        }
    }
    Ok(total / obs.len() as f64)
}

/// `grid_size` equally spaced times covering `[0, tau]`.
pub fn time_grid(tau: f64, grid_size: usize) -> Result<Vec<f64>> {
    if grid_size < 2 {
        return Err(Error::Config(format!("grid size must be at least 2, got {grid_size}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("τ must be positive, got {tau}")));
    }
    let step = tau / (grid_size - 1) as f64;
    Ok((0..grid_size)
        .map(|i| if i + 1 == grid_size { tau } else { i as f64 * step })
        .collect())
}

/// Trapezoid integral of equally spaced samples over `[0, tau]`, divided by `tau`.
pub fn trapezoid_mean(values: &[f64]) -> f64 {
    let m = values.len() - 1;
    let inner: f64 = values[1..m].iter().sum();
    (inner + 0.5 * (values[0] + values[m])) / m as f64
}

/// Integrated Brier score over `[0, tau]`.
pub fn ibs<F>(obs: &[Observation], scdf: F, tau: f64, grid_size: usize) -> Result<f64>
where
    F: Fn(usize, f64) -> f64,
{
    let grid = time_grid(tau, grid_size)?;
    let g = censoring_km(obs)?;
    let scores = grid
        .iter()
        .map(|&t| brier(obs, &scdf, t, &g))
        .collect::<Result<Vec<_>>>()?;
    Ok(trapezoid_mean(&scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub tdc: f64,
    pub ibs: f64,
    pub tau: f64,
    pub n_comparable_pairs: u64,
    pub grid: Vec<f64>,
}

/// The JSON document written for a metrics report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tdc: f64,
    pub ibs: f64,
    pub tau: f64,
    pub n_comparable_pairs: u64,
    pub grid_size: usize,
}

impl From<&EvalResult> for MetricsReport {
    fn from(r: &EvalResult) -> Self {
        Self {
            tdc: r.tdc,
            ibs: r.ibs,
            tau: r.tau,
            n_comparable_pairs: r.n_comparable_pairs,
            grid_size: r.grid.len(),
        }
    }
}

/// Scores predicted distributions against observed outcomes. `tau`
/// defaults to the largest observed event time.
pub fn evaluate(
    obs: &[Observation],
    predictions: &[SurvivalDistribution],
    tau: Option<f64>,
    grid_size: usize,
) -> Result<EvalResult> {
    if obs.len() != predictions.len() {
        return Err(Error::Config(format!(
            "{} observations but {} predictions",
            obs.len(),
            predictions.len()
        )));
    }
    let tau = match tau {
        Some(t) => t,
        None => default_tau(obs)?,
    };
    let dcdf = |j: usize, t: f64| predictions[j].dcdf(t).expect("evaluation times are nonnegative");
    let scdf = |j: usize, t: f64| predictions[j].scdf(t).expect("evaluation times are nonnegative");
    let counts = concordance_counts(obs, dcdf, tau);
    let tdc = counts.value()?;
    let grid = time_grid(tau, grid_size)?;
    let ibs = ibs(obs, scdf, tau, grid_size)?;
    Ok(EvalResult {
        tdc,
        ibs,
        tau,
        n_comparable_pairs: counts.comparable,
        grid,
    })
}
