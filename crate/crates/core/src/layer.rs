//! Layer allocations, the decoded-rate step function and its sigmoid surrogate.
//!
//! Notation: `T_m = s_1 + … + s_m` is the decoding threshold of layer `m`,
//! `I_m = λ_{m+1} + … + λ_M` the residual interference and
//! `J_m = λ_m + I_m`. The layer rate in nats is
//!
//! ```text
//! ρ_m = ln(1 + T_m J_m P) − ln(1 + T_m J_{m+1} P)
//! ```
//!
//! and every public rate is reported in bits.
//!
//! # Surrogate gradient
//!
//! For a weighted sum of surrogate rates `Σ_i w_i Σ_m ρ_m σ(c(g_i − T_m))`
//! write `σ_mi = σ(c(g_i − T_m))`, `A_m = Σ_i w_i σ_mi` and
//! `B_m = Σ_i w_i σ_mi (1 − σ_mi)`. With `a_m = 1 + T_m J_m P` and
//! `b_m = 1 + T_m J_{m+1} P`:
//!
//! ```text
//! ∂/∂T_m  = (J_m P / a_m − J_{m+1} P / b_m) A_m − c ρ_m B_m          =: G_m
//! ∂/∂s_k  = Σ_{m ≥ k} G_m
//! H_m     = A_m T_m P / a_m − A_{m−1} T_{m−1} P / b_{m−1}   (second term absent for m = 1)
//! ∂/∂λ_k  = Σ_{m ≤ k} H_m
//! ```
//!
//! `s_k` enters every threshold `T_m` with `m ≥ k`, hence the suffix sum;
//! `λ_k` enters `J_m` for `m ≤ k` and `J_{m+1}` for `m ≤ k − 1`, hence the
//! prefix sum. All terms are divided by `ln 2` for bits.
//!
//! Replacing `A_m` by `F̄(T_m)` and `−c B_m` by `−p_g(T_m)` gives the
//! expected rate `Σ_m ρ_m F̄(T_m)` under a known gain law and its gradient.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::scalar::Scalar;

/// Threshold increments `s` and normalized layer powers `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAllocation {
    pub s: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl LayerAllocation {
    pub fn new(s: Vec<f64>, lambda: Vec<f64>) -> Result<Self> {
        let alloc = LayerAllocation { s, lambda };
        alloc.validate()?;
        Ok(alloc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s.is_empty() {
            return param("allocation needs at least one layer");
        }
        if self.s.len() != self.lambda.len() {
            return param(format!(
                "s has {} entries but lambda has {}",
                self.s.len(),
                self.lambda.len()
            ));
        }
        if let Some(x) = self.s.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return param(format!("threshold increments must be finite and non-negative, got {x}"));
        }
        if let Some(x) = self.lambda.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return param(format!("layer powers must be finite and non-negative, got {x}"));
        }
        let total: f64 = self.lambda.iter().sum();
        if total > 1.0 + 1e-9 {
            return param(format!("layer powers sum to {total} > 1"));
        }
        Ok(())
    }

    /// Number of layers `M`.
    pub fn layers(&self) -> usize {
        self.s.len()
    }

    /// Cumulative thresholds `T_m`.
    pub fn thresholds(&self) -> Vec<f64> {
        self.s
            .iter()
            .scan(0.0, |acc, x| {
                *acc += x;
                Some(*acc)
            })
            .collect()
    }

    fn check_layer(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.layers() {
            return Err(Error::IndexOutOfRange {
                index: m,
                len: self.layers(),
            });
        }
        Ok(())
    }
}

/// Target risk level and problem constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    /// Fraction of worst clients, in (0, 1].
    pub beta: f64,
    /// Sigmoid sharpness.
    pub c: f64,
    /// Linear transmit power `P`.
    pub power: f64,
    /// Norm bound `S` on the threshold vector.
    pub norm_bound: f64,
}

impl RiskSpec {
    pub fn new(beta: f64, c: f64, power: f64, norm_bound: f64) -> Result<Self> {
        let spec = RiskSpec {
            beta,
            c,
            power,
            norm_bound,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return param(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return param(format!("sigmoid sharpness must be positive, got {}", self.c));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return param(format!("power must be positive, got {}", self.power));
        }
        if self.norm_bound.is_nan() || self.norm_bound <= 0.0 {
            return param(format!("norm bound must be positive, got {}", self.norm_bound));
        }
        Ok(())
    }

    /// `log2(1 + S P)`, the largest rate any admissible allocation can reach.
    pub fn rate_ceiling(&self) -> f64 {
        (self.norm_bound * self.power).ln_1p() / LN_2
    }
}

/// Convert decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `I_m`, the power of the layers above `m` (1-based).
pub fn interference(alloc: &LayerAllocation, m: usize) -> Result<f64> {
    alloc.check_layer(m)?;
    Ok(alloc.lambda[m..].iter().sum())
}

/// `ρ_m` in bits (1-based `m`).
pub fn layer_rate(alloc: &LayerAllocation, m: usize, spec: &RiskSpec) -> Result<f64> {
    alloc.check_layer(m)?;
    Ok(layer_rates(alloc, spec.power)[m - 1])
}

/// All layer rates in bits.
pub fn layer_rates(alloc: &LayerAllocation, power: f64) -> Vec<f64> {
    let t = alloc.thresholds();
    let mut rates = vec![0.0; alloc.layers()];
    let mut above = 0.0;
    for m in (0..alloc.layers()).rev() {
        let tp = t[m] * power;
        rates[m] = (tp * alloc.lambda[m] / (1.0 + tp * above)).ln_1p() / LN_2;
        above += alloc.lambda[m];
    }
    rates
}

/// Decoded rate at gain `g`: the sum of the layers whose threshold `g` meets.
pub fn total_rate(alloc: &LayerAllocation, g: f64, spec: &RiskSpec) -> f64 {
    let rates = layer_rates(alloc, spec.power);
    step_rate(&alloc.thresholds(), &rates, g)
}

pub(crate) fn step_rate(thresholds: &[f64], rates: &[f64], g: f64) -> f64 {
    thresholds
        .iter()
        .zip(rates)
        .take_while(|(t, _)| g >= **t)
        .map(|(_, r)| r)
        .sum()
}

/// `Σ_m ρ_m σ(c(g − T_m))`.
pub fn surrogate_rate(alloc: &LayerAllocation, g: f64, spec: &RiskSpec) -> f64 {
    weighted_surrogate(&alloc.s, &alloc.lambda, &[g], &[1.0], spec.c, spec.power).value
}

/// Gradient of [`surrogate_rate`] with respect to `s` and `λ`.
pub fn surrogate_rate_grad(alloc: &LayerAllocation, g: f64, spec: &RiskSpec) -> (Vec<f64>, Vec<f64>) {
    let e = weighted_surrogate(&alloc.s, &alloc.lambda, &[g], &[1.0], spec.c, spec.power);
    (e.grad_s, e.grad_lambda)
}

/// Value and gradient of a weighted sum of surrogate rates.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SurrogateEval<S> {
    pub value: S,
    pub grad_s: Vec<S>,
    pub grad_lambda: Vec<S>,
}

/// `Σ_i w_i R_σ(s, λ, g_i)` and its gradient, for any [`Scalar`].
pub(crate) fn weighted_surrogate<S: Scalar>(
    s: &[S],
    lambda: &[S],
    gains: &[f64],
    weights: &[f64],
    c: f64,
    power: f64,
) -> SurrogateEval<S> {
    let one = S::cst(1.0);
    rate_functional(s, lambda, power, |t| {
        let mut big_a = S::zero();
        let mut big_b = S::zero();
        for (&g, &w) in gains.iter().zip(weights) {
            let sig = ((S::cst(g) - t).scale(c)).sigmoid();
            big_a += sig.scale(w);
            big_b += (sig * (one - sig)).scale(w);
        }
        (big_a, -big_b.scale(c))
    })
}

/// `Σ_m ρ_m A(T_m)` and its gradient, where `coverage(T)` returns the
/// decoding weight `A(T)` of a threshold and its derivative `A'(T)`.
pub(crate) fn rate_functional<S: Scalar, F: FnMut(S) -> (S, S)>(
    s: &[S],
    lambda: &[S],
    power: f64,
    mut coverage: F,
) -> SurrogateEval<S> {
    let m_layers = s.len();
    let zero = S::zero();
    let one = S::cst(1.0);

    let mut t = Vec::with_capacity(m_layers);
    let mut acc = zero;
    for &x in s {
        acc += x;
        t.push(acc);
    }
    // j[m] = Σ_{i ≥ m} λ_i, with j[M] = 0.
    let mut j = vec![zero; m_layers + 1];
    for m in (0..m_layers).rev() {
        j[m] = j[m + 1] + lambda[m];
    }

    let mut value = zero;
    let mut g_t = vec![zero; m_layers];
    let mut h = vec![zero; m_layers];
    let mut prev_tail = zero;
    for m in 0..m_layers {
        let tp = t[m].scale(power);
        let a = one + tp * j[m];
        let b = one + tp * j[m + 1];
        let rho = (tp * lambda[m] / b).ln_1p();

        let (big_a, slope) = coverage(t[m]);

        value += rho * big_a;
        let drho_dt = j[m].scale(power) / a - j[m + 1].scale(power) / b;
        g_t[m] = drho_dt * big_a + rho * slope;
        h[m] = big_a * tp / a - prev_tail;
        prev_tail = big_a * tp / b;
    }

    let mut grad_s = vec![zero; m_layers];
    let mut run = zero;
    for m in (0..m_layers).rev() {
        run += g_t[m];
        grad_s[m] = run.scale(1.0 / LN_2);
    }
    let mut grad_lambda = vec![zero; m_layers];
    let mut run = zero;
    for m in 0..m_layers {
        run += h[m];
        grad_lambda[m] = run.scale(1.0 / LN_2);
    }

    SurrogateEval {
        value: value.scale(1.0 / LN_2),
        grad_s,
        grad_lambda,
    }
}
