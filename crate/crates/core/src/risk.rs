//! Outage-rate and CVaR functionals: empirical, surrogate and analytic.
//!
//! For a dataset of `N` gains and risk level `β` the empirical CVaR is the
//! maximum over `r` of the concave piecewise-linear function
//!
//! ```text
//! f(r) = r − (1/(Nβ)) Σ_i (r − R_i)^+
//! ```
//!
//! whose slope between consecutive sorted rates `R_[k]` and `R_[k+1]` is
//! `1 − k/(Nβ)`. The maximum is attained at `R_[k]` for the smallest `k` with
//! `k ≥ Nβ`, i.e. `k = ⌈Nβ⌉`; that index is what [`cvar_index`] returns and
//! what every empirical functional here uses. Evaluating `f` at that point
//! gives the weighted sum over the `k` worst clients
//!
//! ```text
//! CVaR = (1/(Nβ)) Σ_{i ≤ k} R_[i] + (1 − k/(Nβ)) R_[k].
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::fading::{FadingModel, GainDataset};
use crate::layer::{layer_rates, step_rate, weighted_surrogate, LayerAllocation, RiskSpec, SurrogateEval};
use crate::numerics::pairwise_sum;

/// Mean, outage and CVaR rates of one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub mean_rate: f64,
    pub outage_rate: f64,
    pub cvar_rate: f64,
    pub beta: f64,
    /// Number of order statistics entering the empirical CVaR; absent for
    /// analytic reports.
    pub n_used: Option<usize>,
}

/// Nearest positive integer, ties away from zero, clamped below at 1.
pub fn nint(x: f64) -> Result<usize> {
    if !(x > 0.0 && x.is_finite()) {
        return param(format!("nint needs a positive finite argument, got {x}"));
    }
    Ok((x.round() as usize).max(1))
}

/// Index `k = ⌈Nβ⌉` of the order statistic that maximizes the variational
/// CVaR objective. Products that land within a few ulps of an integer are
/// snapped to it so that e.g. `10 × 0.3` gives 3, not 4.
pub fn cvar_index(n: usize, beta: f64) -> usize {
    let x = n as f64 * beta;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, n)
}

/// Weights of the `k` smallest order statistics in the empirical CVaR.
pub fn cvar_weights(n: usize, beta: f64) -> Vec<f64> {
    let k = cvar_index(n, beta);
    let nb = n as f64 * beta;
    let mut w = vec![1.0 / nb; k];
    w[k - 1] = 1.0 - (k - 1) as f64 / nb;
    w
}

/// Per-client exact rates, in the dataset's sorted order.
fn client_rates(alloc: &LayerAllocation, gains: &[f64], spec: &RiskSpec) -> Vec<f64> {
    let rates = layer_rates(alloc, spec.power);
    let t = alloc.thresholds();
    gains.iter().map(|&g| step_rate(&t, &rates, g)).collect()
}

/// `(1/N) Σ_i R(g_i)`.
pub fn empirical_mean_rate(alloc: &LayerAllocation, data: &GainDataset, spec: &RiskSpec) -> f64 {
    // Sorted gains: the fraction decoding layer m is a tail count.
    let rates = layer_rates(alloc, spec.power);
    let n = data.len() as f64;
    alloc
        .thresholds()
        .iter()
        .zip(&rates)
        .map(|(&t, r)| {
            let below = data.gains().partition_point(|&g| g < t);
            r * (data.len() - below) as f64 / n
        })
        .sum()
}

/// Rate of the client at order statistic `⌈Nβ⌉`.
pub fn empirical_outage_rate(alloc: &LayerAllocation, data: &GainDataset, spec: &RiskSpec) -> f64 {
    let k = cvar_index(data.len(), spec.beta);
    let rates = layer_rates(alloc, spec.power);
    step_rate(&alloc.thresholds(), &rates, data.gains()[k - 1])
}

/// `r − (1/(Nβ)) Σ_i (r − R(g_i))^+`.
pub fn variational_f(alloc: &LayerAllocation, r: f64, data: &GainDataset, spec: &RiskSpec) -> f64 {
    let hinge: Vec<f64> = client_rates(alloc, data.gains(), spec)
        .into_iter()
        .map(|x| (r - x).max(0.0))
        .collect();
    r - pairwise_sum(&hinge) / (data.len() as f64 * spec.beta)
}

/// Empirical β-CVaR rate.
pub fn empirical_cvar(alloc: &LayerAllocation, data: &GainDataset, spec: &RiskSpec) -> f64 {
    let w = cvar_weights(data.len(), spec.beta);
    let rates = client_rates(alloc, &data.gains()[..w.len()], spec);
    let terms: Vec<f64> = rates.iter().zip(&w).map(|(r, w)| r * w).collect();
    pairwise_sum(&terms)
}

/// Smooth CVaR surrogate and its gradient. The contributing index set is the
/// `⌈Nβ⌉` smallest gains and does not depend on `(s, λ)`.
pub(crate) fn cvar_objective(s: &[f64], lambda: &[f64], data: &GainDataset, spec: &RiskSpec) -> SurrogateEval<f64> {
    let w = cvar_weights(data.len(), spec.beta);
    weighted_surrogate(s, lambda, &data.gains()[..w.len()], &w, spec.c, spec.power)
}

pub fn surrogate_empirical_cvar(alloc: &LayerAllocation, data: &GainDataset, spec: &RiskSpec) -> f64 {
    cvar_objective(&alloc.s, &alloc.lambda, data, spec).value
}

/// Gradient of [`surrogate_empirical_cvar`] with respect to `(s, λ)`.
pub fn surrogate_empirical_cvar_grad(
    alloc: &LayerAllocation,
    data: &GainDataset,
    spec: &RiskSpec,
) -> (Vec<f64>, Vec<f64>) {
    let e = cvar_objective(&alloc.s, &alloc.lambda, data, spec);
    (e.grad_s, e.grad_lambda)
}

/// Outcome distribution of the step rate under a continuous gain law:
/// cumulative rates `C_0 = 0, C_1, …, C_M` and their probabilities.
fn rate_atoms(alloc: &LayerAllocation, model: &FadingModel, spec: &RiskSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    model.validate()?;
    alloc.validate()?;
    let rates = layer_rates(alloc, spec.power);
    let m = alloc.layers();
    let mut levels = Vec::with_capacity(m + 1);
    levels.push(0.0);
    let mut acc = 0.0;
    for r in &rates {
        acc += r;
        levels.push(acc);
    }
    let mut tails = Vec::with_capacity(m + 2);
    tails.push(1.0);
    tails.extend(alloc.thresholds().iter().map(|&t| model.tail(t)));
    tails.push(0.0);
    // Pr[R ≥ C_m] = F̄(T_m); enforce monotonicity against rounding.
    for i in 1..tails.len() {
        tails[i] = tails[i].min(tails[i - 1]);
    }
    let probs = (0..=m).map(|i| tails[i] - tails[i + 1]).collect();
    Ok((levels, probs))
}

/// `E[R] = Σ_m ρ_m F̄(T_m)`.
pub fn analytic_mean_rate(alloc: &LayerAllocation, model: &FadingModel, spec: &RiskSpec) -> Result<f64> {
    let (levels, probs) = rate_atoms(alloc, model, spec)?;
    Ok(levels.iter().zip(&probs).map(|(c, p)| c * p).sum())
}

/// Largest cumulative rate `C_m` with `Pr[R ≥ C_m] ≥ 1 − β`.
pub fn analytic_outage_rate(alloc: &LayerAllocation, model: &FadingModel, spec: &RiskSpec) -> Result<f64> {
    let (levels, probs) = rate_atoms(alloc, model, spec)?;
    Ok(outage_level(&levels, &probs, spec.beta))
}

fn outage_level(levels: &[f64], probs: &[f64], beta: f64) -> f64 {
    let mut tail = 1.0;
    let mut best = 0.0;
    for (c, p) in levels.iter().zip(probs) {
        if tail >= 1.0 - beta - 1e-12 {
            best = *c;
        }
        tail -= p;
    }
    best
}

/// `r_β − (1/β) E[(r_β − R)^+]`, the variational CVaR at its maximizer.
pub fn analytic_cvar(alloc: &LayerAllocation, model: &FadingModel, spec: &RiskSpec) -> Result<f64> {
    let (levels, probs) = rate_atoms(alloc, model, spec)?;
    let r = outage_level(&levels, &probs, spec.beta);
    let shortfall: f64 = levels
        .iter()
        .zip(&probs)
        .map(|(c, p)| p * (r - c).max(0.0))
        .sum();
    Ok(r - shortfall / spec.beta)
}

/// All three empirical functionals at once.
pub fn empirical_report(alloc: &LayerAllocation, data: &GainDataset, spec: &RiskSpec) -> RiskReport {
    RiskReport {
        mean_rate: empirical_mean_rate(alloc, data, spec),
        outage_rate: empirical_outage_rate(alloc, data, spec),
        cvar_rate: empirical_cvar(alloc, data, spec),
        beta: spec.beta,
        n_used: Some(cvar_index(data.len(), spec.beta)),
    }
}

/// All three analytic functionals at once.
pub fn analytic_report(alloc: &LayerAllocation, model: &FadingModel, spec: &RiskSpec) -> Result<RiskReport> {
    Ok(RiskReport {
        mean_rate: analytic_mean_rate(alloc, model, spec)?,
        outage_rate: analytic_outage_rate(alloc, model, spec)?,
        cvar_rate: analytic_cvar(alloc, model, spec)?,
        beta: spec.beta,
        n_used: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::total_rate;
    use approx::assert_relative_eq;

    fn spec(beta: f64) -> RiskSpec {
        RiskSpec::new(beta, 10.0, 10.0, 10.0).unwrap()
    }

    fn two_layer() -> LayerAllocation {
        LayerAllocation::new(vec![1.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn nint_rounding() {
        assert_eq!(nint(2.4).unwrap(), 2);
        assert_eq!(nint(2.5).unwrap(), 3);
        assert_eq!(nint(0.3).unwrap(), 1);
        assert_eq!(nint(7.0).unwrap(), 7);
        assert_eq!(nint(0.9999).unwrap(), 1);
        assert!(nint(0.0).is_err());
        assert!(nint(-1.0).is_err());
    }

    #[test]
    fn cvar_index_snaps_integer_products() {
        assert_eq!(cvar_index(10, 0.3), 3);
        assert_eq!(cvar_index(10, 0.25), 3);
        assert_eq!(cvar_index(10, 0.21), 3);
        assert_eq!(cvar_index(10, 0.2), 2);
        assert_eq!(cvar_index(10, 0.01), 1);
        assert_eq!(cvar_index(10, 1.0), 10);
        let w = cvar_weights(10, 0.25);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hand_built_mean_rate() {
        let a = two_layer();
        let s = spec(1.0);
        let r1 = (11.0f64 / 6.0).log2();
        let r2 = 11f64.log2();
        let d = GainDataset::new(vec![0.5, 1.2, 1.9, 2.4], 0).unwrap();
        let expect = (0.0 + r1 + r1 + (r1 + r2)) / 4.0;
        assert_relative_eq!(empirical_mean_rate(&a, &d, &s), expect, epsilon = 1e-14);
        let low = GainDataset::new(vec![0.1, 0.2], 0).unwrap();
        assert_eq!(empirical_mean_rate(&a, &low, &s), 0.0);
        let one = GainDataset::new(vec![2.0], 0).unwrap();
        assert_relative_eq!(empirical_mean_rate(&a, &one, &s), total_rate(&a, 2.0, &s), epsilon = 1e-14);
    }

    #[test]
    fn hand_built_cvar_at_fractional_index() {
        // N = 10, β = 0.25: Nβ = 2.5, three worst clients contribute.
        let a = two_layer();
        let s = spec(0.25);
        let gains = vec![0.5, 1.1, 2.2, 0.2, 3.0, 1.5, 2.5, 4.0, 0.9, 5.0];
        let d = GainDataset::new(gains, 0).unwrap();
        let rates: Vec<f64> = d.gains().iter().map(|&g| total_rate(&a, g, &s)).collect();
        let expect = (rates[0] + rates[1] + rates[2]) / 2.5 + (1.0 - 3.0 / 2.5) * rates[2];
        assert_relative_eq!(empirical_cvar(&a, &d, &s), expect, epsilon = 1e-14);
        assert_relative_eq!(empirical_outage_rate(&a, &d, &s), rates[2], epsilon = 1e-14);
        assert!(empirical_cvar(&a, &d, &s) <= empirical_outage_rate(&a, &d, &s));
    }

    #[test]
    fn outage_index_arithmetic() {
        let a = two_layer();
        let gains: Vec<f64> = (1..=10).map(|i| i as f64 * 0.25).collect();
        let d = GainDataset::new(gains, 0).unwrap();
        let s = spec(0.2);
        assert_eq!(empirical_outage_rate(&a, &d, &s), total_rate(&a, 0.5, &s));
        let s = spec(1.0);
        assert_eq!(empirical_outage_rate(&a, &d, &s), total_rate(&a, 2.5, &s));
    }

    #[test]
    fn variational_limits() {
        let a = two_layer();
        let d = GainDataset::new(vec![0.5, 1.2, 1.9, 2.4], 0).unwrap();
        assert_eq!(variational_f(&a, 0.0, &d, &spec(0.5)), 0.0);
        let s = spec(1.0);
        assert_relative_eq!(variational_f(&a, 100.0, &d, &s), empirical_mean_rate(&a, &d, &s), epsilon = 1e-12);
    }

    #[test]
    fn beta_one_cvar_is_mean() {
        let a = two_layer();
        let d = GainDataset::new(vec![0.5, 1.2, 1.9, 2.4, 0.7], 0).unwrap();
        let s = spec(1.0);
        assert!((empirical_cvar(&a, &d, &s) - empirical_mean_rate(&a, &d, &s)).abs() < 1e-12);
    }

    #[test]
    fn analytic_single_threshold() {
        // M = 1, Rayleigh: R = ρ w.p. e^{-s}, else 0.
        let model = FadingModel::rayleigh(1.0);
        let beta = 0.1;
        let s1 = -(1.0f64 - beta).ln() * 0.9;
        let a = LayerAllocation::new(vec![s1], vec![1.0]).unwrap();
        let sp = RiskSpec::new(beta, 10.0, 100.0, 10.0).unwrap();
        let rho = (1.0 + s1 * 100.0).log2();
        assert_relative_eq!(analytic_outage_rate(&a, &model, &sp).unwrap(), rho, epsilon = 1e-14);
        let p0 = 1.0 - (-s1).exp();
        assert_relative_eq!(analytic_cvar(&a, &model, &sp).unwrap(), rho * (1.0 - p0 / beta), epsilon = 1e-13);

        let far = LayerAllocation::new(vec![1.0], vec![1.0]).unwrap();
        assert_eq!(analytic_outage_rate(&far, &model, &sp).unwrap(), 0.0);
        assert_eq!(analytic_cvar(&far, &model, &sp).unwrap(), 0.0);
    }

    #[test]
    fn analytic_beta_one_is_mean() {
        let model = FadingModel::rician(2.0, 1.0);
        let a = LayerAllocation::new(vec![1.0, 2.0, 0.5], vec![0.2, 0.3, 0.5]).unwrap();
        let sp = RiskSpec::new(1.0, 10.0, 100.0, 10.0).unwrap();
        let mean = analytic_mean_rate(&a, &model, &sp).unwrap();
        assert_relative_eq!(analytic_cvar(&a, &model, &sp).unwrap(), mean, epsilon = 1e-12);
        let direct: f64 = layer_rates(&a, 100.0)
            .iter()
            .zip(a.thresholds())
            .map(|(r, t)| r * model.tail(t))
            .sum();
        assert_relative_eq!(mean, direct, epsilon = 1e-13);
    }
}
