//! Known-distribution baselines with infinitely many layers, and the
//! generalization-bound calculators.
//!
//! With a continuous gain law the optimal infinite-layer power profile is
//! described by the accumulated interference
//!
//! ```text
//! I(u) = (F̄(u) − u p(u)) / (u² p(u))     on [u0, u1],   I(u0) = P,  I(u1) = 0
//! ρ(u) = −I'(u) = F̄(u) (2 p(u) + u p'(u)) / (u³ p(u)²)
//! R∞  = ∫_{u0}^{u1} F̄(u) u ρ(u) / (1 + u I(u)) du
//! ```
//!
//! For unit-variance Rayleigh fading the integral has a closed form in `E1`,
//! which [`rayleigh_closed_form`] evaluates independently of the quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fading::FadingModel;
use crate::numerics::{bisect, exp_integral_e1, integrate};

const ROOT_TOL: f64 = 1e-10;
const QUAD_REL_TOL: f64 = 1e-9;
const SCAN_POINTS: usize = 4000;

/// Optimal infinite-layer allocation for a known gain law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfiniteLayerSolution {
    pub u0: f64,
    pub u1: f64,
    /// Bits per channel use.
    pub expected_rate: f64,
    /// Quadrature error estimate, in bits.
    pub quadrature_error_estimate: f64,
    /// `I` has another zero crossing above `u1`; `u1` is the first one.
    pub u1_ambiguous: bool,
}

fn interference_profile(model: &FadingModel, u: f64) -> f64 {
    let p = model.density(u);
    (model.tail(u) - u * p) / (u * u * p)
}

fn power_density(model: &FadingModel, u: f64) -> f64 {
    let p = model.density(u);
    model.tail(u) * (2.0 * p + u * model.density_slope(u)) / (u * u * u * p * p)
}

/// First grid point above `start` where `f` drops below zero, refined by
/// bisection. `None` when `f` stays non-negative up to `end`.
fn first_crossing<F: Fn(f64) -> f64>(f: &F, start: f64, end: f64) -> Result<Option<f64>> {
    let ratio = (end / start).powf(1.0 / SCAN_POINTS as f64);
    let mut lo = start;
    for _ in 0..SCAN_POINTS {
        let hi = lo * ratio;
        let v = f(hi);
        if v.is_nan() {
            return Err(Error::UnsupportedModel("interference profile is not finite".into()));
        }
        if v < 0.0 {
            return bisect(f, lo, hi, ROOT_TOL * hi.max(1.0)).map(Some);
        }
        lo = hi;
    }
    Ok(None)
}

/// Infinite-layer expected rate under a known gain law, in bits.
pub fn infinite_layer_rate(model: &FadingModel, power: f64) -> Result<InfiniteLayerSolution> {
    model.validate()?;
    if !(power.is_finite() && power > 0.0) {
        return param(format!("power must be positive, got {power}"));
    }
    let unsupported = |what: &str| Error::UnsupportedModel(format!("cannot bracket {what} of the interference profile"));

    // I(u) → ∞ as u → 0 whenever p(0) is finite; walk down until I > P.
    let mut start = model.mean_gain() * 1e-3;
    let mut tries = 0;
    while interference_profile(model, start).partial_cmp(&power) != Some(std::cmp::Ordering::Greater) {
        start *= 0.5;
        tries += 1;
        if tries > 200 || start == 0.0 {
            return Err(unsupported("the power level"));
        }
    }
    let end = model.quantile(1.0 - 1e-12)?;
    let u0 = first_crossing(&|u| interference_profile(model, u) - power, start, end)?
        .ok_or_else(|| unsupported("the power level"))?;
    let u1 = first_crossing(&|u| interference_profile(model, u), u0, end)?
        .ok_or_else(|| unsupported("the zero"))?;
    let u1_ambiguous = {
        let ratio = (end / u1).powf(1.0 / SCAN_POINTS as f64);
        let mut u = u1 * ratio;
        let mut again = false;
        while u < end {
            if interference_profile(model, u) > ROOT_TOL {
                again = true;
                break;
            }
            u *= ratio;
        }
        again
    };

    let q = integrate(
        |u| {
            let i = interference_profile(model, u);
            model.tail(u) * u * power_density(model, u) / (1.0 + u * i)
        },
        u0,
        u1,
        QUAD_REL_TOL,
        1e-14,
    )?;
    Ok(InfiniteLayerSolution {
        u0,
        u1,
        expected_rate: q.value / std::f64::consts::LN_2,
        quadrature_error_estimate: q.error / std::f64::consts::LN_2,
        u1_ambiguous,
    })
}

/// Infinite-layer expected rate for unit-variance Rayleigh fading, in bits.
pub fn rayleigh_closed_form(power: f64) -> f64 {
    let u0 = 2.0 / (1.0 + (1.0 + 4.0 * power).sqrt());
    let nats = 2.0 * (exp_integral_e1(u0) - exp_integral_e1(1.0)) - ((-u0).exp() - (-1.0f64).exp());
    nats / std::f64::consts::LN_2
}

/// Bound parameters and value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub delta: f64,
    pub beta: f64,
    pub s_bound: f64,
    pub power: f64,
    pub bound_value: f64,
}

fn deviation_term(n: usize, delta: f64) -> Result<f64> {
    if n == 0 {
        return param("sample count must be at least 1");
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return param(format!("confidence parameter must lie in (0, 1], got {delta}"));
    }
    let n = n as f64;
    let complexity = ((2.0 * n + 1.0) * (n + 1.0).ln() / (3.0 * n * (n + 1.0))).sqrt();
    Ok(4.0 * complexity + (2.0 * (2.0 / delta).ln() / n).sqrt())
}

fn rate_range(s_bound: f64, power: f64) -> Result<f64> {
    if !(s_bound.is_finite() && s_bound > 0.0) {
        return param(format!("norm bound must be positive, got {s_bound}"));
    }
    if !(power.is_finite() && power > 0.0) {
        return param(format!("power must be positive, got {power}"));
    }
    Ok(2.0 * (s_bound * power).ln_1p() / std::f64::consts::LN_2)
}

/// High-probability bound on the expected-rate optimality gap, in bits.
pub fn expected_rate_gap_bound(n: usize, delta: f64, s_bound: f64, power: f64) -> Result<f64> {
    Ok(deviation_term(n, delta)? * rate_range(s_bound, power)?)
}

/// High-probability bound on the β-CVaR optimality gap, in bits.
pub fn cvar_gap_bound(n: usize, delta: f64, beta: f64, s_bound: f64, power: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) {
        return param(format!("β must lie in (0, 1], got {beta}"));
    }
    Ok(expected_rate_gap_bound(n, delta, s_bound, power)? / beta)
}

/// Uniform bound on `sup_t |F̂_N(t) − F̄(t)|`, clamped to 1.
pub fn ccdf_deviation_bound(n: usize, delta: f64) -> Result<f64> {
    Ok(deviation_term(n, delta)?.min(1.0))
}

/// [`cvar_gap_bound`] packaged with its inputs; `beta = 1` gives the
/// expected-rate bound.
pub fn bound_report(n: usize, delta: f64, beta: f64, s_bound: f64, power: f64) -> Result<BoundReport> {
    Ok(BoundReport {
        n,
        delta,
        beta,
        s_bound,
        power,
        bound_value: cvar_gap_bound(n, delta, beta, s_bound, power)?,
    })
}

/// Smallest `N ≥ 3` with `N / ln N ≥ (log₂(SP) / (βε))²`.
pub fn sample_complexity(epsilon: f64, beta: f64, s_bound: f64, power: f64) -> Result<u64> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return param(format!("target gap must be positive, got {epsilon}"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return param(format!("β must lie in (0, 1], got {beta}"));
    }
    rate_range(s_bound, power)?;
    let target = ((s_bound * power).log2() / (beta * epsilon)).powi(2);
    let ratio = |n: u64| n as f64 / (n as f64).ln();
    if ratio(3) >= target {
        return Ok(3);
    }
    let mut hi: u64 = 4;
    while ratio(hi) < target {
        hi = hi
            .checked_mul(2)
            .filter(|h| *h < 1 << 62)
            .ok_or_else(|| Error::Numerical("sample complexity exceeds 2^62".into()))?;
    }
    let mut lo = hi / 2;
    // ratio(lo) < target ≤ ratio(hi), and the ratio increases for N ≥ 3.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ratio(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rayleigh_profile_matches_closed_form_pieces() {
        let m = FadingModel::rayleigh(1.0);
        for &u in &[0.1, 0.4, 0.9] {
            assert_relative_eq!(interference_profile(&m, u), 1.0 / (u * u) - 1.0 / u, max_relative = 1e-12);
            assert_relative_eq!(power_density(&m, u), (2.0 - u) / (u * u * u), max_relative = 1e-12);
        }
    }

    #[test]
    fn rayleigh_baseline_at_20_db() {
        let sol = infinite_layer_rate(&FadingModel::rayleigh(1.0), 100.0).unwrap();
        assert_relative_eq!(sol.u0, 2.0 / (1.0 + 401f64.sqrt()), epsilon = 1e-9);
        assert_relative_eq!(sol.u1, 1.0, epsilon = 1e-9);
        assert!(!sol.u1_ambiguous);
        assert!((sol.expected_rate - 3.97659973760885).abs() < 1e-6);
        assert!((rayleigh_closed_form(100.0) - 3.97659973760885).abs() < 1e-9);
    }

    #[test]
    fn closed_form_and_quadrature_agree() {
        for &p in &[1.0, 10.0, 100.0, 1e4] {
            let q = infinite_layer_rate(&FadingModel::rayleigh(1.0), p).unwrap().expected_rate;
            assert!((q - rayleigh_closed_form(p)).abs() < 1e-6, "P={p}");
        }
        assert!(rayleigh_closed_form(1e-9) < 1e-8);
    }

    #[test]
    fn rayleigh_variance_acts_as_power_scaling() {
        let a = infinite_layer_rate(&FadingModel::rayleigh(2.5), 40.0).unwrap().expected_rate;
        assert!((a - rayleigh_closed_form(100.0)).abs() < 1e-6);
    }

    #[test]
    fn rician_profile_is_nonnegative_between_roots() {
        let m = FadingModel::rician(2.0, 1.0);
        let sol = infinite_layer_rate(&m, 100.0).unwrap();
        assert!(sol.u0 > 0.0 && sol.u0 < sol.u1);
        for k in 0..=100 {
            let u = sol.u0 + (sol.u1 - sol.u0) * k as f64 / 100.0;
            assert!(interference_profile(&m, u) >= -1e-8);
        }
        assert!((interference_profile(&m, sol.u0) - 100.0).abs() < 1e-4);
    }

    #[test]
    fn bounds_formulas() {
        let n = 100.0f64;
        let bracket = 4.0 * ((2.0 * n + 1.0) * (n + 1.0).ln() / (3.0 * n * (n + 1.0))).sqrt()
            + (2.0 * 40f64.ln() / n).sqrt();
        let direct = bracket * 2.0 * 1001f64.log2();
        assert_relative_eq!(expected_rate_gap_bound(100, 0.05, 10.0, 100.0).unwrap(), direct, max_relative = 1e-14);
        let e = expected_rate_gap_bound(500, 0.05, 10.0, 100.0).unwrap();
        assert_relative_eq!(cvar_gap_bound(500, 0.05, 0.1, 10.0, 100.0).unwrap(), e / 0.1, max_relative = 1e-15);
        assert_eq!(ccdf_deviation_bound(1, 0.05).unwrap(), 1.0);
        assert_relative_eq!(ccdf_deviation_bound(10_000, 0.05).unwrap(), 0.1262780156572694, max_relative = 1e-9);
        assert!(expected_rate_gap_bound(10, 1.0, 10.0, 100.0).unwrap().is_finite());
        assert!(expected_rate_gap_bound(0, 0.05, 10.0, 100.0).is_err());
        assert!(cvar_gap_bound(10, 0.05, 0.0, 10.0, 100.0).is_err());
    }

    #[test]
    fn sample_complexity_is_minimal() {
        let ratio = |n: u64| n as f64 / (n as f64).ln();
        let target = (1000f64.log2() / (0.1 * 0.5)).powi(2);
        let n = sample_complexity(0.5, 0.1, 10.0, 100.0).unwrap();
        assert!(ratio(n) >= target && ratio(n - 1) < target);
        assert_eq!(sample_complexity(100.0, 1.0, 10.0, 100.0).unwrap(), 3);
    }
}
