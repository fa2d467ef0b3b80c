use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Scale applied to positions so that the spatial term spans the same range
/// as `2 − 2cosθ` on the unit square.
const POSITION_SCALE: f64 = 2.0;

/// Embeds patches so that squared Euclidean distance in the joint space is
///
/// ```text
/// w1 · (2 − 2·cos θ) + (1 − w1) · 2 · ‖Δp‖²
/// ```
///
/// a blend of morphological dissimilarity and squared normalized distance.
/// Each output row is `[√w1 · f̂, √(2·(1−w1)) · p]`, where `f̂` is the unit
/// feature row (the zero vector when the row has zero norm).
pub fn joint_embed(features: &Matrix, positions01: &Matrix, w1: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&w1) {
        return Err(Error::Config(format!("w1 = {w1} outside [0,1]")));
    }
    if positions01.rows() != features.rows() || positions01.cols() != 2 {
        return Err(Error::Dimension {
            op: "joint_embed",
            left: features.shape(),
            right: positions01.shape(),
        });
    }
    let d = features.cols();
    let feat_scale = w1.sqrt();
    let pos_scale = (POSITION_SCALE * (1.0 - w1)).sqrt();
    let mut out = Matrix::zeros(features.rows(), d + 2);
    for r in 0..features.rows() {
        let f = features.row(r);
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        let row = out.row_mut(r);
        if norm > 0.0 {
            for (o, &v) in row[..d].iter_mut().zip(f) {
                *o = feat_scale * v / norm;
            }
        }
        row[d] = pos_scale * positions01.get(r, 0);
        row[d + 1] = pos_scale * positions01.get(r, 1);
    }
    Ok(out)
}
