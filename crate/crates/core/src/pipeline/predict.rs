use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PatchBag;
use crate::error::{Error, Result};

use super::model::{Interpretability, ScmilModel};

/// Fraction of the horizon used as the first grid time, close enough to 0
/// that survival there is essentially 1.
const GRID_START: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub time: f64,
    pub scdf: f64,
    pub dpdf: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub curve: Vec<CurvePoint>,
    pub interpretability: Interpretability,
}

/// `n` increasing times from just above 0 to `horizon`.
pub fn prediction_grid(horizon: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("prediction grid needs at least one point".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let start = GRID_START * horizon;
    if n == 1 {
        return Ok(vec![start]);
    }
    let step = (horizon - start) / (n - 1) as f64;
    Ok((0..n)
        .map(|i| if i + 1 == n { horizon } else { start + i as f64 * step })
        .collect())
}

/// Survival and death density of one patient over `grid`.
pub fn predict_curve(model: &ScmilModel, bag: &PatchBag, grid: &[f64]) -> Result<Prediction> {
    if let Some(t) = grid.iter().find(|&&t| !(t > 0.0)) {
        return Err(Error::Domain(format!("prediction times must be positive, got {t}")));
    }
    let (dist, interpretability) = model.predict(bag)?;
    let curve = grid
        .iter()
        .map(|&t| {
            Ok(CurvePoint {
                time: t,
                scdf: dist.scdf(t)?,
                dpdf: dist.dpdf(t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prediction {
        curve,
        interpretability,
    })
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Scatter of patch positions: fill opacity follows the importance score,
/// outline color the cluster id (grey for filtered-out patches), radius the
/// pooling weight.
pub fn render_svg(bag: &PatchBag, interp: &Interpretability) -> String {
    const SIZE: f64 = 600.0;
    const MARGIN: f64 = 20.0;
    let pos = bag.normalized_positions();
    let max_alpha = interp.alpha.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = SIZE + 2.0 * MARGIN
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, "<title>{}</title>", xml_escape(&bag.patient_id));
    for i in 0..bag.len() {
        let x = MARGIN + pos.get(i, 0) * SIZE;
        let y = MARGIN + (1.0 - pos.get(i, 1)) * SIZE;
        let r = 2.0 + 6.0 * (interp.alpha[i] / max_alpha).sqrt();
        let stroke = interp.cluster[i].map_or("#bbbbbb", |c| PALETTE[c % PALETTE.len()]);
        let _ = writeln!(
            svg,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.2}" fill="#c0392b" fill-opacity="{o:.3}" stroke="{stroke}" stroke-width="1.5"><title>patch {i}: IS={is:.3} cluster={c} alpha={a:.4}</title></circle>"##,
            o = interp.importance[i],
            is = interp.importance[i],
            c = interp.cluster[i].map_or("none".to_string(), |c| c.to_string()),
            a = interp.alpha[i],
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal_matrix;
    use crate::pipeline::RunConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ScmilModel, PatchBag) {
        let cfg = RunConfig {
            heads: 2,
            components: 5,
            cluster_size: 4,
            ..RunConfig::default()
        };
        let model = ScmilModel::new(&cfg, 4, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let bag = PatchBag::new("p<1>", normal_matrix(&mut rng, 12, 4, 1.0), normal_matrix(&mut rng, 12, 2, 5.0)).unwrap();
        (model, bag)
    }

    #[test]
    fn curve_starts_at_one_and_decreases() {
        let (model, bag) = setup();
        let grid = prediction_grid(5.0, 200).unwrap();
        let p = predict_curve(&model, &bag, &grid).unwrap();
        assert!((p.curve[0].scdf - 1.0).abs() < 1e-9);
        assert!(p.curve.windows(2).all(|w| w[1].scdf <= w[0].scdf));
        let (dist, _) = model.predict(&bag).unwrap();
        for pt in &p.curve {
            assert_eq!(pt.scdf, dist.scdf(pt.time).unwrap());
        }
    }

    #[test]
    fn single_point_grid() {
        let (model, bag) = setup();
        let grid = prediction_grid(5.0, 1).unwrap();
        assert_eq!(predict_curve(&model, &bag, &grid).unwrap().curve.len(), 1);
    }

    #[test]
    fn nonpositive_times_rejected() {
        let (model, bag) = setup();
        assert!(matches!(predict_curve(&model, &bag, &[0.5, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn svg_has_one_circle_per_patch() {
        let (model, bag) = setup();
        let (_, interp) = model.predict(&bag).unwrap();
        let svg = render_svg(&bag, &interp);
        assert_eq!(svg.matches("<circle").count(), 12);
        assert!(svg.contains("p&lt;1&gt;"));
    }
}
