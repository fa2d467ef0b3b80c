//! Central finite-difference checks of tape gradients.
//!
//! The numerical side only ever evaluates the forward closure, so it stays
//! independent of every backward rule it checks.

use super::param::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Denominator floor for the relative error, so entries whose true gradient
/// is ~0 are judged on absolute error.
const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_entry: usize,
    pub entries_checked: usize,
    /// Euclidean norm of the finite-difference gradient over all entries.
    pub numeric_norm: f64,
}

/// Compares the analytic gradient of `forward` against central differences
/// with step `h` for every entry of every trainable parameter.
///
/// `forward` must be deterministic: it is called once for the analytic pass
/// and twice per checked entry.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, forward: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let out = forward(&mut tape, store)?;
    tape.backward(out, store)?;

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let out = forward(&mut tape, store)?;
        Ok(tape.value(out).data()[0])
    };

    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_entry: 0,
        entries_checked: 0,
        numeric_norm: 0.0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.get(id).trainable {
            continue;
        }
        for k in 0..store.value(id).len() {
            let original = store.value(id).data()[k];
            store.get_mut(id).value.data_mut()[k] = original + h;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = original - h;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let analytic = store.grad(id).data()[k];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(REL_FLOOR);
            report.numeric_norm += numeric * numeric;
            report.entries_checked += 1;
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = if rel.is_finite() { rel } else { f64::INFINITY };
                report.worst_param = store.get(id).name.clone();
                report.worst_entry = k;
            }
        }
    }
    report.numeric_norm = report.numeric_norm.sqrt();
    Ok(report)
}
