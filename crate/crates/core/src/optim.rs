//! Block mirror ascent on the smooth CVaR surrogate.
//!
//! Thresholds are parametrized as `s = exp(u)` and updated by gradient ascent
//! in `u`; the power split `λ` is updated by exponentiated gradient, which
//! keeps it in the interior of the simplex.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fading::{FadingModel, GainDataset};
use crate::layer::{rate_functional, LayerAllocation, RiskSpec, SurrogateEval};
use crate::risk::{cvar_index, cvar_objective, cvar_weights};
use crate::scalar::Scalar;

/// Gradient components are clipped to this magnitude before every step.
pub const GRAD_CLIP: f64 = 1e6;

/// Floor applied to every power after an exponentiated-gradient step so that
/// no layer underflows to an exact (and absorbing) zero.
pub const LAMBDA_FLOOR: f64 = 1e-300;

/// Which iterate the `λ` block sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    /// Both blocks step from the previous iterate.
    #[default]
    Jacobi,
    /// The `λ` block sees the freshly updated `u`.
    GaussSeidel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    /// Number of layers `M`.
    pub layers: usize,
    pub eta: f64,
    pub gamma: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub order: UpdateOrder,
    /// Initial log-thresholds; quantile-spread when absent.
    pub u_init: Option<Vec<f64>>,
    /// Initial power split; uniform when absent.
    pub lambda_init: Option<Vec<f64>>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            layers: 6,
            eta: 0.01,
            gamma: 0.01,
            max_iters: 20_000,
            rel_tol: 1e-7,
            order: UpdateOrder::Jacobi,
            u_init: None,
            lambda_init: None,
        }
    }
}

impl OptimConfig {
    pub fn with_layers(layers: usize) -> Self {
        OptimConfig {
            layers,
            ..Default::default()
        }
    }

    pub fn with_init(mut self, u: Vec<f64>, lambda: Vec<f64>) -> Self {
        self.layers = u.len();
        self.u_init = Some(u);
        self.lambda_init = Some(lambda);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return param("at least one layer is required");
        }
        if !(self.eta >= 0.0 && self.eta.is_finite() && self.gamma >= 0.0 && self.gamma.is_finite()) {
            return param(format!("step sizes must be finite and non-negative, got {} and {}", self.eta, self.gamma));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return param(format!("rel_tol must be positive, got {}", self.rel_tol));
        }
        if let Some(u) = &self.u_init {
            if u.len() != self.layers || u.iter().any(|x| !x.is_finite()) {
                return param("u_init must hold one finite value per layer");
            }
        }
        if let Some(l) = &self.lambda_init {
            check_simplex(l, self.layers)?;
        }
        Ok(())
    }
}

pub(crate) fn check_simplex(lambda: &[f64], layers: usize) -> Result<()> {
    if lambda.len() != layers {
        return param(format!("expected {layers} layer powers, got {}", lambda.len()));
    }
    if lambda.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return param("initial layer powers must be non-negative");
    }
    let total: f64 = lambda.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return param(format!("initial layer powers must sum to 1, got {total}"));
    }
    Ok(())
}

/// Objective values recorded during one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    /// Objective at every visited iterate, starting with the initial point.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl OptimTrace {
    /// Fraction of iterations whose objective did not decrease.
    pub fn ascent_fraction(&self) -> f64 {
        if self.objective.len() < 2 {
            return 1.0;
        }
        let up = self.objective.windows(2).filter(|w| w[1] >= w[0]).count();
        up as f64 / (self.objective.len() - 1) as f64
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["iter", "objective"])?;
        for (i, v) in self.objective.iter().enumerate() {
            wtr.write_record([i.to_string(), format!("{v:?}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `u + η · exp(u) ⊙ g` with `g` clipped.
pub(crate) fn gd_update<S: Scalar>(u: &[S], grad_s: &[S], eta: f64) -> Vec<S> {
    u.iter()
        .zip(grad_s)
        .map(|(&ui, &g)| ui + (ui.exp() * g.clamp_abs(GRAD_CLIP)).scale(eta))
        .collect()
}

/// `λ_m exp(γ g_m) / Σ λ_m' exp(γ g_m')`, with the largest exponent
/// subtracted before exponentiation.
pub(crate) fn eg_update<S: Scalar>(lambda: &[S], grad_lambda: &[S], gamma: f64) -> Vec<S> {
    let z: Vec<S> = grad_lambda.iter().map(|g| g.clamp_abs(GRAD_CLIP).scale(gamma)).collect();
    let top = z.iter().map(|x| x.re()).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<S> = lambda
        .iter()
        .zip(&z)
        .map(|(&l, &x)| l * (x - S::cst(top)).exp())
        .collect();
    let mut total = S::zero();
    for &x in &w {
        total += x;
    }
    w.into_iter()
        .map(|x| {
            let v = x / total;
            if v.re() < LAMBDA_FLOOR {
                S::cst(LAMBDA_FLOOR)
            } else {
                v
            }
        })
        .collect()
}

fn check_finite(what: &str, e: &SurrogateEval<f64>) -> Result<()> {
    let bad = !e.value.is_finite()
        || e.grad_s.iter().chain(&e.grad_lambda).any(|x| !x.is_finite());
    if bad {
        return Err(Error::Numerical(format!(
            "{what}: non-finite objective or gradient (value {}, grad_s {:?}, grad_lambda {:?})",
            e.value, e.grad_s, e.grad_lambda
        )));
    }
    Ok(())
}

fn exp_all(u: &[f64]) -> Vec<f64> {
    u.iter().map(|x| x.exp()).collect()
}

/// One ascent step on `u` for the surrogate CVaR at `(exp(u), λ)`.
pub fn gd_step(u: &[f64], lambda: &[f64], data: &GainDataset, spec: &RiskSpec, eta: f64) -> Result<Vec<f64>> {
    let e = cvar_objective(&exp_all(u), lambda, data, spec);
    check_finite("gd_step", &e)?;
    Ok(gd_update(u, &e.grad_s, eta))
}

/// One exponentiated-gradient step on `λ` for the surrogate CVaR at `(exp(u), λ)`.
pub fn eg_step(lambda: &[f64], u: &[f64], data: &GainDataset, spec: &RiskSpec, gamma: f64) -> Result<Vec<f64>> {
    let e = cvar_objective(&exp_all(u), lambda, data, spec);
    check_finite("eg_step", &e)?;
    Ok(eg_update(lambda, &e.grad_lambda, gamma))
}

/// Thresholds at the gain quantiles `β(m − ½)/M`, uniform power.
pub fn quantile_init(data: &GainDataset, beta: f64, layers: usize) -> (Vec<f64>, Vec<f64>) {
    let n = data.len();
    let levels: Vec<f64> = (1..=layers)
        .map(|m| {
            let q = beta * (m as f64 - 0.5) / layers as f64;
            let k = cvar_index(n, q.max(f64::MIN_POSITIVE));
            data.gains()[k - 1]
        })
        .collect();
    (thresholds_to_u(&levels), vec![1.0 / layers as f64; layers])
}

/// Thresholds at the model quantiles `β(m − ½)/M`, uniform power.
pub fn model_quantile_init(model: &FadingModel, beta: f64, layers: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let levels = (1..=layers)
        .map(|m| model.quantile(beta * (m as f64 - 0.5) / layers as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok((thresholds_to_u(&levels), vec![1.0 / layers as f64; layers]))
}

/// Standard-normal log-thresholds, uniform power.
pub fn random_init<R: Rng + ?Sized>(layers: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let u = (0..layers).map(|_| rng.sample(StandardNormal)).collect();
    (u, vec![1.0 / layers as f64; layers])
}

// Increments of a nondecreasing threshold list, floored so that log is finite.
fn thresholds_to_u(levels: &[f64]) -> Vec<f64> {
    let top = levels.last().copied().unwrap_or(1.0).max(1e-12);
    let floor = 1e-3 * top;
    let mut prev = 0.0;
    levels
        .iter()
        .map(|&t| {
            let inc = (t - prev).max(floor);
            prev = prev.max(t);
            inc.ln()
        })
        .collect()
}

fn initial_point(config: &OptimConfig, default: impl FnOnce() -> Result<(Vec<f64>, Vec<f64>)>) -> Result<(Vec<f64>, Vec<f64>)> {
    config.validate()?;
    let (du, dl) = match (&config.u_init, &config.lambda_init) {
        (Some(u), Some(l)) => return Ok((u.clone(), l.clone())),
        _ => default()?,
    };
    Ok((
        config.u_init.clone().unwrap_or(du),
        config.lambda_init.clone().unwrap_or(dl),
    ))
}

/// Shared ascent loop; `objective(s, λ)` returns the value and gradient.
fn ascend<F>(mut u: Vec<f64>, mut lambda: Vec<f64>, config: &OptimConfig, objective: F) -> Result<(LayerAllocation, OptimTrace)>
where
    F: Fn(&[f64], &[f64]) -> SurrogateEval<f64>,
{
    let mut trace = OptimTrace {
        objective: Vec::new(),
        iterations: 0,
        converged: false,
    };
    let mut current = objective(&exp_all(&u), &lambda);
    check_finite("optimize", &current)?;
    trace.objective.push(current.value);
    for _ in 0..config.max_iters {
        let u_next = gd_update(&u, &current.grad_s, config.eta);
        let lambda_next = match config.order {
            UpdateOrder::Jacobi => eg_update(&lambda, &current.grad_lambda, config.gamma),
            UpdateOrder::GaussSeidel => {
                let mid = objective(&exp_all(&u_next), &lambda);
                check_finite("optimize", &mid)?;
                eg_update(&lambda, &mid.grad_lambda, config.gamma)
            }
        };
        u = u_next;
        lambda = lambda_next;
        trace.iterations += 1;

        let prev = current.value;
        current = objective(&exp_all(&u), &lambda);
        check_finite("optimize", &current)?;
        trace.objective.push(current.value);
        if (current.value - prev).abs() / prev.abs().max(1.0) < config.rel_tol {
            trace.converged = true;
            break;
        }
    }
    let alloc = LayerAllocation {
        s: exp_all(&u),
        lambda,
    };
    Ok((alloc, trace))
}

/// Maximize the surrogate empirical CVaR of `data`.
pub fn optimize(data: &GainDataset, spec: &RiskSpec, config: &OptimConfig) -> Result<(LayerAllocation, OptimTrace)> {
    spec.validate()?;
    let (u, lambda) = initial_point(config, || Ok(quantile_init(data, spec.beta, config.layers)))?;
    // The index set and weights depend only on (N, β); hoist them out of the loop.
    let w = cvar_weights(data.len(), spec.beta);
    let gains = &data.gains()[..w.len()];
    ascend(u, lambda, config, |s, l| {
        crate::layer::weighted_surrogate(s, l, gains, &w, spec.c, spec.power)
    })
}

/// `Σ_m ρ_m F̄(T_m)` and its gradient under a known gain law.
pub(crate) fn expected_rate_objective(s: &[f64], lambda: &[f64], model: &FadingModel, power: f64) -> SurrogateEval<f64> {
    rate_functional(s, lambda, power, |t| (model.tail(t), -model.density(t)))
}

/// Maximize the exact expected rate under a known gain law. `spec.beta` and
/// `spec.c` are not used.
pub fn optimize_known_distribution(
    model: &FadingModel,
    spec: &RiskSpec,
    config: &OptimConfig,
) -> Result<(LayerAllocation, OptimTrace)> {
    spec.validate()?;
    model.validate()?;
    let (u, lambda) = initial_point(config, || model_quantile_init(model, 1.0, config.layers))?;
    ascend(u, lambda, config, |s, l| expected_rate_objective(s, l, model, spec.power))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::sample_gains;
    use crate::risk::surrogate_empirical_cvar_grad;
    use approx::assert_relative_eq;

    #[test]
    fn eg_known_values_and_invariances() {
        let l = eg_update(&[0.5, 0.5], &[1.0, 0.0], 0.01);
        let e = 0.01f64.exp();
        assert_relative_eq!(l[0], 0.5 * e / (0.5 * e + 0.5), epsilon = 1e-15);
        assert_relative_eq!(l[1], 0.5 / (0.5 * e + 0.5), epsilon = 1e-15);

        let lam = [0.2, 0.3, 0.5];
        let same = eg_update(&lam, &[4.0, 4.0, 4.0], 0.3);
        for (a, b) in same.iter().zip(&lam) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        let frozen = eg_update(&lam, &[1.0, -2.0, 7.0], 0.0);
        for (a, b) in frozen.iter().zip(&lam) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
        let big = eg_update(&lam, &[1e6, 0.0, -1e6], 1.0);
        assert!(big.iter().all(|x| x.is_finite() && *x > 0.0));
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gd_step_is_chained_gradient() {
        let data = sample_gains(&FadingModel::rayleigh(1.0), 40, 3).unwrap();
        let spec = RiskSpec::new(0.3, 10.0, 100.0, 10.0).unwrap();
        let u = vec![-1.0, -1.5, -0.7];
        let lam = vec![0.3, 0.3, 0.4];
        let alloc = LayerAllocation::new(exp_all(&u), lam.clone()).unwrap();
        let (gs, _) = surrogate_empirical_cvar_grad(&alloc, &data, &spec);
        let next = gd_step(&u, &lam, &data, &spec, 0.05).unwrap();
        for i in 0..3 {
            assert_relative_eq!(next[i], u[i] + 0.05 * u[i].exp() * gs[i], epsilon = 1e-14);
        }
        assert_eq!(gd_step(&u, &lam, &data, &spec, 0.0).unwrap(), u);
        let same = eg_step(&lam, &u, &data, &spec, 0.0).unwrap();
        for (a, b) in same.iter().zip(&lam) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        // Every gain far below every threshold: the surrogate and its gradient vanish.
        let data = GainDataset::new(vec![0.0; 5], 0).unwrap();
        let spec = RiskSpec::new(1.0, 1e3, 10.0, 10.0).unwrap();
        let u = vec![2.0, 2.0];
        let lam = vec![0.4, 0.6];
        assert_eq!(gd_step(&u, &lam, &data, &spec, 0.1).unwrap(), u);
        let l2 = eg_step(&lam, &u, &data, &spec, 0.1).unwrap();
        assert_relative_eq!(l2[0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = OptimConfig::with_layers(2);
        c.lambda_init = Some(vec![0.5, 0.6]);
        assert!(c.validate().is_err());
        let c = OptimConfig::with_layers(2).with_init(vec![0.0, 0.0], vec![0.5, 0.5]);
        c.validate().unwrap();
        let c: OptimConfig = serde_json::from_str(r#"{"layers":3,"order":"gauss-seidel"}"#).unwrap();
        assert_eq!(c.order, UpdateOrder::GaussSeidel);
        assert_eq!(c.eta, 0.01);
    }

    #[test]
    fn quantile_init_is_increasing() {
        let data = sample_gains(&FadingModel::rayleigh(1.0), 200, 1).unwrap();
        let (u, l) = quantile_init(&data, 0.5, 4);
        assert_eq!(u.len(), 4);
        assert!(u.iter().all(|x| x.is_finite()));
        assert_relative_eq!(l.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        let single = GainDataset::new(vec![2.0], 0).unwrap();
        let (u, _) = quantile_init(&single, 1.0, 3);
        assert!(u.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn trace_csv_header() {
        let t = OptimTrace {
            objective: vec![1.0, 1.5],
            iterations: 1,
            converged: true,
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,objective\n0,1.0\n1,1.5\n");
        assert_eq!(t.ascent_fraction(), 1.0);
    }

    #[test]
    fn known_distribution_single_layer() {
        let model = FadingModel::rayleigh(1.0);
        let spec = RiskSpec::new(1.0, 10.0, 100.0, 10.0).unwrap();
        let (a, trace) = optimize_known_distribution(&model, &spec, &OptimConfig::with_layers(1)).unwrap();
        assert!(trace.objective.len() >= 2);
        // Grid search oracle over s with λ = 1.
        let best = (1..200_000)
            .map(|i| {
                let s = i as f64 * 1e-5;
                (1.0 + s * 100.0).log2() * (-s).exp()
            })
            .fold(0.0, f64::max);
        let got = (1.0 + a.s[0] * 100.0).log2() * (-a.s[0]).exp();
        assert!((got - best).abs() < 1e-3, "{got} vs {best}");
    }
}
