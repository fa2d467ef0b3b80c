//! Register-based mixture density head.
//!
//! A Gaussian mixture lives on a latent axis `y`; survival time is
//! `t = softplus(y) = ln(1 + eʸ)`. Mixture weights come from the bag
//! feature, while component means and scales come from two learnable
//! cohort-level "register" vectors `P_m` and `P_v` (or are fixed, or
//! predicted from the bag feature, depending on the variant).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::special::{ln_norm_pdf, ln_norm_sf, log_sum_exp, norm_cdf, norm_ppf, norm_sf};
use crate::numerics::{normal_matrix, Linear, Matrix, ParamId, ParamStore, Tape, Var};

pub const DEFAULT_COMPONENTS: usize = 100;
/// Lower bound on every component scale.
pub const SIGMA_FLOOR: f64 = 1e-3;
/// Floor on the survival probability inside the censored log-likelihood.
pub const SURVIVAL_EPS: f64 = 1e-12;

/// How component means and scales are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MdnVariant {
    /// μ = mean_net(P_m), σ = softplus(var_net(P_v)) + floor, all learned.
    #[default]
    Learnable,
    /// μ = P_m and σ = P_v held constant at standard normal quantile
    /// anchors and unit scale.
    Fixed,
    /// μ and σ predicted from the bag feature by two linear heads.
    Predicted,
}

impl std::str::FromStr for MdnVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learnable" => Ok(Self::Learnable),
            "fixed" => Ok(Self::Fixed),
            "predicted" => Ok(Self::Predicted),
            other => Err(Error::Config(format!("unknown MDN variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for MdnVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Learnable => "learnable",
            Self::Fixed => "fixed",
            Self::Predicted => "predicted",
        })
    }
}

#[derive(Debug, Clone)]
enum Components {
    Learnable {
        p_m: ParamId,
        p_v: ParamId,
        mean_net: Linear,
        var_net: Linear,
    },
    Fixed {
        p_m: ParamId,
        p_v: ParamId,
    },
    Predicted {
        mean_head: Linear,
        var_head: Linear,
    },
}

#[derive(Debug, Clone)]
pub struct RegisterMdn {
    weight_hidden: Linear,
    weight_out: Linear,
    components: Components,
    pub k: usize,
    pub dim: usize,
    pub variant: MdnVariant,
}

/// Mixture parameters still attached to the tape, each `1×K`.
#[derive(Debug, Clone, Copy)]
pub struct MixtureVars {
    pub logits: Var,
    pub mu: Var,
    pub sigma: Var,
}

impl RegisterMdn {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        dim: usize,
        k: usize,
        variant: MdnVariant,
        rng: &mut R,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("the mixture needs at least one component".into()));
        }
        let hidden = (dim / 2).max(1);
        let weight_hidden = Linear::new(store, "mdn.weight.hidden", dim, hidden, rng);
        let weight_out = Linear::new(store, "mdn.weight.out", hidden, k, rng);
        let components = match variant {
            MdnVariant::Learnable => Components::Learnable {
                p_m: store.add("mdn.p_m", normal_matrix(rng, 1, k, 0.1), true),
                p_v: store.add("mdn.p_v", Matrix::zeros(1, k), true),
                mean_net: Linear::new(store, "mdn.mean_net", k, k, rng),
                var_net: Linear::new(store, "mdn.var_net", k, k, rng),
            },
            MdnVariant::Fixed => {
                let anchors: Vec<f64> = (0..k).map(|i| norm_ppf((i as f64 + 0.5) / k as f64)).collect();
                Components::Fixed {
                    p_m: store.add("mdn.p_m", Matrix::row_vector(&anchors), false),
                    p_v: store.add("mdn.p_v", Matrix::filled(1, k, 1.0), false),
                }
            }
            MdnVariant::Predicted => Components::Predicted {
                mean_head: Linear::new(store, "mdn.mean_head", dim, k, rng),
                var_head: Linear::new(store, "mdn.var_head", dim, k, rng),
            },
        };
        Ok(Self {
            weight_hidden,
            weight_out,
            components,
            k,
            dim,
            variant,
        })
    }

    /// Register vectors `(P_m, P_v)`, absent for the predicted variant.
    pub fn registers(&self) -> Option<(ParamId, ParamId)> {
        match self.components {
            Components::Learnable { p_m, p_v, .. } | Components::Fixed { p_m, p_v } => Some((p_m, p_v)),
            Components::Predicted { .. } => None,
        }
    }

    /// Maps a `1×d` bag feature to mixture logits, means and scales.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, feature: Var) -> Result<MixtureVars> {
        let h = self.weight_hidden.forward(tape, store, feature)?;
        let h = tape.tanh(h);
        let logits = self.weight_out.forward(tape, store, h)?;
        let (mu, sigma) = match &self.components {
            Components::Learnable {
                p_m,
                p_v,
                mean_net,
                var_net,
            } => {
                let pm = tape.param(store, *p_m);
                let pv = tape.param(store, *p_v);
                let mu = mean_net.forward(tape, store, pm)?;
                let s = var_net.forward(tape, store, pv)?;
                let s = tape.softplus(s);
                (mu, tape.add_scalar(s, SIGMA_FLOOR))
            }
            Components::Fixed { p_m, p_v } => (tape.param(store, *p_m), tape.param(store, *p_v)),
            Components::Predicted { mean_head, var_head } => {
                let mu = mean_head.forward(tape, store, feature)?;
                let s = var_head.forward(tape, store, feature)?;
                let s = tape.softplus(s);
                (mu, tape.add_scalar(s, SIGMA_FLOOR))
            }
        };
        Ok(MixtureVars { logits, mu, sigma })
    }
}

/// Latent coordinate of a positive time: `g⁻¹(t) = ln(eᵗ − 1)`.
pub fn g_inverse(t: f64) -> Result<f64> {
    check_positive(t)?;
    Ok(t + (-(-t).exp_m1()).ln())
}

/// `|d g⁻¹ / dt| = 1 / (1 − e⁻ᵗ)`.
pub fn g_inverse_abs_derivative(t: f64) -> Result<f64> {
    check_positive(t)?;
    Ok(-1.0 / (-t).exp_m1())
}

fn check_positive(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("time must be positive and finite, got {t}")))
    }
}

/// A patient's predicted survival distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDistribution {
    pub lambdas: Vec<f64>,
    pub mus: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl SurvivalDistribution {
    pub fn new(lambdas: Vec<f64>, mus: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        let k = lambdas.len();
        if k == 0 || mus.len() != k || sigmas.len() != k {
            return Err(Error::Config(format!(
                "mixture needs equal nonzero lengths, got {k}/{}/{}",
                mus.len(),
                sigmas.len()
            )));
        }
        let total: f64 = lambdas.iter().sum();
        if lambdas.iter().any(|&l| l < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}")));
        }
        if sigmas.iter().any(|&s| !(s >= SIGMA_FLOOR)) {
            return Err(Error::Config(format!("component scales must be ≥ {SIGMA_FLOOR}")));
        }
        Ok(Self { lambdas, mus, sigmas })
    }

    /// Builds the distribution from unnormalized logits.
    pub fn from_logits(logits: &[f64], mus: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        let lse = log_sum_exp(logits);
        let lambdas = logits.iter().map(|l| (l - lse).exp()).collect();
        Self::new(lambdas, mus, sigmas)
    }

    pub fn from_vars(tape: &Tape, vars: &MixtureVars) -> Result<Self> {
        Self::from_logits(
            tape.value(vars.logits).data(),
            tape.value(vars.mu).data().to_vec(),
            tape.value(vars.sigma).data().to_vec(),
        )
    }

    pub fn k(&self) -> usize {
        self.lambdas.len()
    }

    /// Mixture density on the latent axis.
    pub fn latent_pdf(&self, y: f64) -> f64 {
        self.lambdas
            .iter()
            .zip(&self.mus)
            .zip(&self.sigmas)
            .map(|((l, m), s)| l * (ln_norm_pdf((y - m) / s) - s.ln()).exp())
            .sum()
    }

    /// Death probability density at time `t`.
    pub fn dpdf(&self, t: f64) -> Result<f64> {
        Ok(g_inverse_abs_derivative(t)? * self.latent_pdf(g_inverse(t)?))
    }

    /// `ln DPDF(t)` by log-sum-exp.
    pub fn ln_dpdf(&self, t: f64) -> Result<f64> {
        let y = g_inverse(t)?;
        let terms: Vec<f64> = self
            .lambdas
            .iter()
            .zip(&self.mus)
            .zip(&self.sigmas)
            .map(|((l, m), s)| l.ln() + ln_norm_pdf((y - m) / s) - s.ln())
            .collect();
        Ok(g_inverse_abs_derivative(t)?.ln() + log_sum_exp(&terms))
    }

    /// Death cumulative distribution; 0 at `t = 0`.
    pub fn dcdf(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let y = g_inverse(t)?;
        Ok(self
            .lambdas
            .iter()
            .zip(&self.mus)
            .zip(&self.sigmas)
            .map(|((l, m), s)| l * norm_cdf((y - m) / s))
            .sum())
    }

    /// Survival probability `1 − DCDF(t)`; 1 at `t = 0`.
    pub fn scdf(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::Domain(format!("survival probability needs t ≥ 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(1.0);
        }
        // Summing upper tails keeps precision where the curve is near 0.
        let y = g_inverse(t)?;
        let s: f64 = self
            .lambdas
            .iter()
            .zip(&self.mus)
            .zip(&self.sigmas)
            .map(|((l, m), s)| l * norm_sf((y - m) / s))
            .sum();
        Ok(s.clamp(0.0, 1.0))
    }

    /// `ln SCDF(t)` from the upper normal tails, accurate far into the tail.
    pub fn ln_scdf(&self, t: f64) -> Result<f64> {
        let y = g_inverse(t)?;
        let terms: Vec<f64> = self
            .lambdas
            .iter()
            .zip(&self.mus)
            .zip(&self.sigmas)
            .map(|((l, m), s)| l.ln() + ln_norm_sf((y - m) / s))
            .collect();
        Ok(log_sum_exp(&terms))
    }

    /// Censored negative log-likelihood of one observation.
    pub fn nll(&self, duration: f64, event: bool) -> Result<f64> {
        if event {
            Ok(-self.ln_dpdf(duration)?)
        } else {
            Ok(-self.ln_scdf(duration)?.max(SURVIVAL_EPS.ln()))
        }
    }
}

/// Censored negative log-likelihood as a tape node:
/// `−c·ln DPDF(td) − (1−c)·ln max(SCDF(td), ε)`, with exact gradients wrt
/// the mixture logits, means and scales.
pub fn nll_loss(tape: &mut Tape, mixture: &MixtureVars, duration: f64, event: bool) -> Result<Var> {
    let y = g_inverse(duration)?;
    let logits = tape.value(mixture.logits).data().to_vec();
    let mus = tape.value(mixture.mu).data().to_vec();
    let sigmas = tape.value(mixture.sigma).data().to_vec();
    let k = logits.len();
    if mus.len() != k || sigmas.len() != k {
        return Err(Error::Dimension {
            op: "nll_loss",
            left: tape.shape(mixture.logits),
            right: tape.shape(mixture.mu),
        });
    }
    let lse = log_sum_exp(&logits);
    let ln_lambda: Vec<f64> = logits.iter().map(|l| l - lse).collect();
    let z: Vec<f64> = mus.iter().zip(&sigmas).map(|(m, s)| (y - m) / s).collect();

    let mut d_logits = Matrix::zeros(1, k);
    let mut d_mu = Matrix::zeros(1, k);
    let mut d_sigma = Matrix::zeros(1, k);
    let loss;
    if event {
        let terms: Vec<f64> = (0..k)
            .map(|i| ln_lambda[i] + ln_norm_pdf(z[i]) - sigmas[i].ln())
            .collect();
        let total = log_sum_exp(&terms);
        loss = -g_inverse_abs_derivative(duration)?.ln() - total;
        for i in 0..k {
            let w = (terms[i] - total).exp();
            d_logits.data_mut()[i] = ln_lambda[i].exp() - w;
            d_mu.data_mut()[i] = -w * z[i] / sigmas[i];
            d_sigma.data_mut()[i] = -w * (z[i] * z[i] - 1.0) / sigmas[i];
        }
    } else {
        let terms: Vec<f64> = (0..k).map(|i| ln_lambda[i] + ln_norm_sf(z[i])).collect();
        let total = log_sum_exp(&terms);
        let floor = SURVIVAL_EPS.ln();
        if total < floor {
            loss = -floor;
        } else {
            loss = -total;
            for i in 0..k {
                let w = (terms[i] - total).exp();
                // λᵢ φ(zᵢ) / SCDF
                let hazard_part = (ln_lambda[i] + ln_norm_pdf(z[i]) - total).exp();
                d_logits.data_mut()[i] = ln_lambda[i].exp() - w;
                d_mu.data_mut()[i] = -hazard_part / sigmas[i];
                d_sigma.data_mut()[i] = -hazard_part * z[i] / sigmas[i];
            }
        }
    }
    tape.fused_scalar(
        loss,
        vec![
            (mixture.logits, d_logits),
            (mixture.mu, d_mu),
            (mixture.sigma, d_sigma),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::LN_2;

    fn unit() -> SurvivalDistribution {
        SurvivalDistribution::new(vec![1.0], vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn time_warp_values() {
        assert!(g_inverse(LN_2).unwrap().abs() < 1e-15);
        assert!((g_inverse_abs_derivative(LN_2).unwrap() - 2.0).abs() < 1e-14);
        assert!((g_inverse(40.0).unwrap() - 40.0).abs() < 1e-12);
        assert!((g_inverse_abs_derivative(40.0).unwrap() - 1.0).abs() < 1e-12);
        // log(e^0.1 − 1) and 1/(1 − e^−0.1)
        assert!((g_inverse(0.1).unwrap() - (-2.252168461044091)).abs() < 1e-12);
        assert!((g_inverse_abs_derivative(0.1).unwrap() - 10.50833194477505).abs() < 1e-10);
        assert!(matches!(g_inverse(0.0), Err(Error::Domain(_))));
        assert!(matches!(g_inverse_abs_derivative(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn derivative_matches_finite_difference_of_softplus() {
        let t = 0.1;
        let y = g_inverse(t).unwrap();
        let h = 1e-6;
        let softplus = |y: f64| (1.0 + y.exp()).ln();
        let dt_dy = (softplus(y + h) - softplus(y - h)) / (2.0 * h);
        assert!((1.0 / dt_dy - g_inverse_abs_derivative(t).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn unit_component_values() {
        let d = unit();
        assert!((d.dpdf(LN_2).unwrap() - 0.7978845608028654).abs() < 1e-12);
        assert!((d.scdf(LN_2).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(d.scdf(0.0).unwrap(), 1.0);
        assert!(d.scdf(1e-12).unwrap() > 1.0 - 1e-9);
        assert!(d.scdf(100.0).unwrap() < 1e-9);
        assert!(d.scdf(-1.0).is_err());
        assert!(d.dpdf(0.0).is_err());
        // −ln(2·φ(0))
        assert!((d.nll(LN_2, true).unwrap() - 0.22579135264472738).abs() < 1e-12);
        assert!(d.nll(1e-9, false).unwrap() < 1e-6);
    }

    #[test]
    fn censored_loss_is_clamped_in_far_tail() {
        let d = unit();
        assert!((d.nll(500.0, false).unwrap() + SURVIVAL_EPS.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_logits_give_uniform_weights() {
        let d = SurvivalDistribution::from_logits(&[0.0; 4], vec![0.0; 4], vec![1.0; 4]).unwrap();
        assert!(d.lambdas.iter().all(|&l| (l - 0.25).abs() < 1e-15));
    }

    #[test]
    fn fixed_variant_anchors() {
        let mut store = ParamStore::new();
        let mdn = RegisterMdn::new(&mut store, 4, 5, MdnVariant::Fixed, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (pm, pv) = mdn.registers().unwrap();
        assert!(!store.get(pm).trainable && !store.get(pv).trainable);
        let anchors = store.value(pm).data();
        assert!(anchors[2].abs() < 1e-12);
        assert!((anchors[0] + anchors[4]).abs() < 1e-12);
        assert!((anchors[4] - norm_ppf(0.9)).abs() < 1e-12);
        assert!(store.value(pv).data().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn sigma_floor_holds_for_very_negative_inputs() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mdn = RegisterMdn::new(&mut store, 4, 3, MdnVariant::Learnable, &mut rng).unwrap();
        let var_bias = store.find("mdn.var_net.bias").unwrap();
        store.get_mut(var_bias).value.fill(-1e6);
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::row_vector(&[0.1, 0.2, 0.3, 0.4]));
        let m = mdn.forward(&mut tape, &store, x).unwrap();
        assert!(tape.value(m.sigma).data().iter().all(|&s| s >= SIGMA_FLOOR));
    }

    #[test]
    fn default_component_count() {
        assert_eq!(DEFAULT_COMPONENTS, 100);
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        for variant in [MdnVariant::Learnable, MdnVariant::Predicted] {
            for (seed, (t, event)) in [(0.3, true), (1.7, false), (0.05, false), (4.0, true)]
                .into_iter()
                .enumerate()
            {
                let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
                let mut store = ParamStore::new();
                let mdn = RegisterMdn::new(&mut store, 6, 5, variant, &mut rng).unwrap();
                let feat = store.add("feat", normal_matrix(&mut rng, 1, 6, 1.0), true);
                let report = check_gradients(&mut store, 1e-5, |tape, s| {
                    let f = tape.param(s, feat);
                    let m = mdn.forward(tape, s, f)?;
                    nll_loss(tape, &m, t, event)
                })
                .unwrap();
                assert!(report.max_rel_error < 1e-4, "{variant} t={t} event={event}: {report:?}");
            }
        }
    }

    #[test]
    fn tape_loss_matches_distribution_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let mdn = RegisterMdn::new(&mut store, 6, 7, MdnVariant::Learnable, &mut rng).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(normal_matrix(&mut rng, 1, 6, 1.0));
        let m = mdn.forward(&mut tape, &store, x).unwrap();
        let dist = SurvivalDistribution::from_vars(&tape, &m).unwrap();
        for (t, e) in [(0.2, true), (0.9, false)] {
            let loss = nll_loss(&mut tape, &m, t, e).unwrap();
            assert!((tape.value(loss).data()[0] - dist.nll(t, e).unwrap()).abs() < 1e-12);
        }
    }
}
