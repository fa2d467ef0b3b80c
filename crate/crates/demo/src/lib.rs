//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a flat `Vec<f64>` (a `Float64Array` on the JS side)
//! so the page needs no glue beyond what `wasm-bindgen` generates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use scmil::mdn::SurvivalDistribution;
use scmil::metrics::{kaplan_meier, Observation};
use scmil::numerics::Matrix;
use scmil::scsa::cluster;

fn js_err(e: scmil::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Survival curve of a time-warped Gaussian mixture, sampled on `points`
/// evenly spaced times in `(0, horizon]`. Output rows are `[t, S(t), f(t)]`.
pub fn survival_curve_rows(
    logits: &[f64],
    mus: &[f64],
    sigmas: &[f64],
    horizon: f64,
    points: usize,
) -> scmil::Result<Vec<f64>> {
    if !(horizon > 0.0) || points < 2 {
        return Err(scmil::Error::Config("need a positive horizon and at least 2 points".into()));
    }
    let dist = SurvivalDistribution::from_logits(logits, mus.to_vec(), sigmas.to_vec())?;
    let mut out = Vec::with_capacity(points * 3);
    for i in 1..=points {
        let t = horizon * i as f64 / points as f64;
        out.extend([t, dist.scdf(t)?, dist.dpdf(t)?]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn survival_curve(logits: &[f64], mus: &[f64], sigmas: &[f64], horizon: f64, points: usize) -> Result<Vec<f64>, JsValue> {
    survival_curve_rows(logits, mus, sigmas, horizon, points).map_err(js_err)
}

/// A toy bag: two morphologies (feature directions) scattered over a few
/// spatial cliques, clustered at weight `w1`. Output rows are
/// `[x, y, morphology, cluster]` with positions in `[0, 1]`.
pub fn cluster_rows(n: usize, w1: f64, cluster_size: usize, seed: u64) -> scmil::Result<Vec<f64>> {
    if n == 0 {
        return Err(scmil::Error::Config("need at least one patch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(0.15..0.85), rng.gen_range(0.15..0.85))).collect();
    let mut feats = Matrix::zeros(n, 2);
    let mut pos = Matrix::zeros(n, 2);
    let mut kind = Vec::with_capacity(n);
    for i in 0..n {
        let (cx, cy) = centers[rng.gen_range(0..centers.len())];
        let x = (cx + 0.08 * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0);
        let y = (cy + 0.08 * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0);
        pos.row_mut(i).copy_from_slice(&[x, y]);
        let morph = rng.gen_bool(0.5);
        let angle = if morph { 0.0 } else { std::f64::consts::FRAC_PI_2 } + rng.gen_range(-0.3..0.3);
        feats.row_mut(i).copy_from_slice(&[angle.cos(), angle.sin()]);
        kind.push(morph as u8 as f64);
    }
    let part = cluster(&feats, &pos, w1, cluster_size, &mut rng)?;
    let mut out = Vec::with_capacity(n * 4);
    for i in 0..n {
        let p = pos.row(i);
        out.extend([p[0], p[1], kind[i], part.assignments[i] as f64]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn cluster_bag(n: usize, w1: f64, cluster_size: usize, seed: u64) -> Result<Vec<f64>, JsValue> {
    cluster_rows(n, w1, cluster_size, seed).map_err(js_err)
}

/// Kaplan-Meier estimate as step rows `[t, S(t)]`, starting at `[0, 1]`.
pub fn kaplan_meier_rows(times: &[f64], events: &[u8]) -> scmil::Result<Vec<f64>> {
    if times.len() != events.len() {
        return Err(scmil::Error::Config("times and events differ in length".into()));
    }
    let obs: Vec<Observation> = times.iter().zip(events).map(|(&t, &e)| Observation::new(t, e != 0)).collect();
    let km = kaplan_meier(&obs)?;
    let mut out = vec![0.0, 1.0];
    for (t, s) in km.breakpoints.iter().zip(&km.values) {
        out.extend([*t, *s]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn kaplan_meier_curve(times: &[f64], events: &[u8]) -> Result<Vec<f64>, JsValue> {
    kaplan_meier_rows(times, events).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_rows_are_monotone() {
        let rows = survival_curve_rows(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.5], 5.0, 20).unwrap();
        assert_eq!(rows.len(), 60);
        let s: Vec<f64> = rows.chunks(3).map(|r| r[1]).collect();
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn clustering_labels_every_patch() {
        let rows = cluster_rows(50, 0.5, 10, 3).unwrap();
        let labels: Vec<usize> = rows.chunks(4).map(|r| r[3] as usize).collect();
        assert_eq!(labels.len(), 50);
        assert!(labels.iter().all(|&c| c < 5));
    }

    #[test]
    fn km_steps_down_at_deaths() {
        let rows = kaplan_meier_rows(&[1.0, 2.0, 3.0], &[1, 0, 1]).unwrap();
        assert_eq!(rows, vec![0.0, 1.0, 1.0, 1.0 - 1.0 / 3.0, 3.0, 0.0]);
        assert!(kaplan_meier_rows(&[1.0], &[]).is_err());
    }
}
