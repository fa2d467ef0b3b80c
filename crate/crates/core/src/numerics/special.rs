//! Scalar special functions: error function, normal distribution helpers and
//! the numerically stable activations used elementwise by the tape.

use std::f64::consts::{FRAC_2_SQRT_PI, LN_2, PI, SQRT_2};

const SERIES_LIMIT: f64 = 3.0;
const CF_TERMS: usize = 120;

/// Error function, accurate to about 1e-15 absolute over the real line.
///
/// Odd symmetry holds exactly: the magnitude is computed for `|x|` and the
/// sign reapplied.
pub fn erf(x: f64) -> f64 {
    let a = x.abs();
    let mag = if a <= SERIES_LIMIT {
        erf_series(a)
    } else {
        1.0 - (-a * a).exp() * erfc_fraction(a) / PI.sqrt()
    };
    if x.is_sign_negative() {
        -mag
    } else {
        mag
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x > SERIES_LIMIT {
        (-x * x).exp() * erfc_fraction(x) / PI.sqrt()
    } else {
        1.0 - erf(x)
    }
}

/// `ln erfc(x)` without underflow for large positive `x`.
pub fn ln_erfc(x: f64) -> f64 {
    if x > SERIES_LIMIT {
        -x * x + erfc_fraction(x).ln() - 0.5 * PI.ln()
    } else {
        (1.0 - erf(x)).ln()
    }
}

// erf(x) = 2/√π · e^{-x²} · Σ 2ⁿ x^{2n+1} / (2n+1)!!, all terms positive.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= 2.0 * x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x2).exp() * sum
}

// Continued fraction 1/(x + ½/(x + 1/(x + 3/2/(x + …)))), evaluated backwards.
// Equals √π · e^{x²} · erfc(x) for x > 0.
fn erfc_fraction(x: f64) -> f64 {
    let mut tail = x;
    for k in (1..=CF_TERMS).rev() {
        tail = x + (k as f64 * 0.5) / tail;
    }
    1.0 / tail
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn ln_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

/// Standard normal CDF, Φ(z) = ½(1 + erf(z/√2)).
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / SQRT_2))
}

/// Standard normal survival function 1 − Φ(z), computed from `erfc` so the
/// upper tail keeps relative precision.
pub fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

pub fn ln_norm_sf(z: f64) -> f64 {
    ln_erfc(z / SQRT_2) - LN_2
}

/// Inverse of [`norm_cdf`] by bisection; `p` must lie in (0, 1).
pub fn norm_ppf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "norm_ppf needs p in (0,1), got {p}");
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)` via `max(x, 0) + ln1p(e^{-|x|})`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Log-sum-exp of a slice; `-inf` for an empty slice or all `-inf` inputs.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit reference values.
    const ERF_REFERENCE: &[(f64, f64)] = &[
        (0.1, 0.1124629160182848984),
        (0.5, 0.52049987781304653768),
        (1.0, 0.84270079294971486934),
        (1.5, 0.96610514647531072707),
        (2.0, 0.99532226501895273416),
        (2.5, 0.99959304798255504106),
        (2.99, 0.9999764743969193598),
        (3.0, 0.99997790950300141456),
        (3.01, 0.99997926103636286737),
        (3.5, 0.99999925690162765859),
        (4.0, 0.99999998458274209972),
        (5.0, 0.99999999999846254021),
        (6.0, 0.99999999999999997848),
    ];

    const LN_ERFC_REFERENCE: &[(f64, f64)] = &[
        (0.5, -0.73501112983708440303),
        (2.0, -5.3649412646166375745),
        (3.5, -14.112437402148173755),
        (5.0, -27.200889545537434422),
        (10.0, -102.87988902484488857),
        (20.0, -403.56934333410423496),
    ];

    #[test]
    fn erf_matches_reference() {
        for &(x, want) in ERF_REFERENCE {
            assert!((erf(x) - want).abs() < 1e-10, "erf({x})");
            assert_eq!(erf(-x), -erf(x));
        }
        assert_eq!(erf(0.0), 0.0);
        assert!(erf(6.0) > 1.0 - 1e-15);
        assert!((erf(1.0) - 0.842700792949715).abs() < 1e-14);
    }

    #[test]
    fn ln_erfc_matches_reference() {
        for &(x, want) in LN_ERFC_REFERENCE {
            let got = ln_erfc(x);
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "ln_erfc({x}) = {got}");
        }
    }

    #[test]
    fn erf_is_continuous_across_branch_switch() {
        let below = erf(SERIES_LIMIT);
        let above = erf(SERIES_LIMIT + 1e-12);
        assert!((above - below).abs() < 1e-14);
    }

    #[test]
    fn normal_helpers() {
        assert_eq!(norm_cdf(0.0), 0.5);
        assert!((norm_pdf(0.0) - 0.398942280401432678).abs() < 1e-15);
        assert!((norm_cdf(1.3) + norm_sf(1.3) - 1.0).abs() < 1e-15);
        assert!((norm_ppf(0.975) - 1.959963984540054).abs() < 1e-9);
        assert!((ln_norm_sf(0.0) + LN_2).abs() < 1e-15);
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((softplus(0.0) - LN_2).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((log_sum_exp(&[0.0, 0.0]) - LN_2).abs() < 1e-15);
    }
}
