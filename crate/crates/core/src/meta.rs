//! Meta-learning an initialization over earlier deployments.
//!
//! Each task adapts the shared initialization `(u, λ)` with one step of the
//! block mirror-ascent update. The meta-objective is the sum over tasks of the
//! surrogate CVaR at the adapted point, and its gradient is pulled back
//! through the adaptation map:
//!
//! ```text
//! ∇_u φ = Σ_τ J_{u_τ,u}ᵀ a_τ + J_{λ_τ,u}ᵀ b_τ      a_τ = exp(u_τ) ⊙ ∇_s R̃,  b_τ = ∇_λ R̃
//! ∇_λ φ = Σ_τ J_{u_τ,λ}ᵀ a_τ + J_{λ_τ,λ}ᵀ b_τ
//! ```
//!
//! The Jacobians of the adaptation map are formed column by column with
//! forward-mode dual numbers (2M directional derivatives per task), including
//! the normalization inside the exponentiated-gradient step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::fading::GainDataset;
use crate::layer::{weighted_surrogate, RiskSpec};
use crate::optim::{check_simplex, eg_update, gd_update, random_init};
use crate::risk::cvar_weights;
use crate::scalar::{Dual, Scalar};

/// Datasets from earlier deployments, one per task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSet {
    tasks: Vec<GainDataset>,
}

impl TaskSet {
    pub fn new(tasks: Vec<GainDataset>) -> Result<Self> {
        if tasks.is_empty() {
            return param("a task set needs at least one deployment");
        }
        Ok(TaskSet { tasks })
    }

    pub fn tasks(&self) -> &[GainDataset] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// How the adaptation-map Jacobians are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    /// Forward-mode dual numbers.
    #[default]
    Exact,
    /// Central differences on the adaptation map.
    FiniteDifference,
    /// Identity on the matching block and zero across blocks.
    FirstOrder,
}

/// Step used by [`JacobianMode::FiniteDifference`].
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    pub layers: usize,
    /// Meta step on `u`; `0.01 / D` when absent.
    pub eta_bar: Option<f64>,
    /// Meta step on `λ`; `0.01 / D` when absent.
    pub gamma_bar: Option<f64>,
    /// Inner (per-task) steps.
    pub eta: f64,
    pub gamma: f64,
    pub meta_iters: usize,
    pub jacobian_mode: JacobianMode,
    /// Seed of the random starting point when no explicit one is given.
    pub seed: u64,
    pub u_init: Option<Vec<f64>>,
    pub lambda_init: Option<Vec<f64>>,
}

impl Default for MetaConfig {
    fn default() -> Self {
        MetaConfig {
            layers: 6,
            eta_bar: None,
            gamma_bar: None,
            eta: 0.01,
            gamma: 0.01,
            meta_iters: 2000,
            jacobian_mode: JacobianMode::Exact,
            seed: 0,
            u_init: None,
            lambda_init: None,
        }
    }
}

impl MetaConfig {
    pub fn with_layers(layers: usize) -> Self {
        MetaConfig {
            layers,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return param("at least one layer is required");
        }
        if self.meta_iters == 0 {
            return param("meta_iters must be at least 1");
        }
        let steps = [self.eta, self.gamma, self.eta_bar.unwrap_or(0.0), self.gamma_bar.unwrap_or(0.0)];
        if steps.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return param("step sizes must be finite and non-negative");
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

    /// Resolved `(η̄, γ̄)` for `d` tasks.
    pub fn meta_steps(&self, d: usize) -> (f64, f64) {
        let default = 0.01 / d as f64;
        (self.eta_bar.unwrap_or(default), self.gamma_bar.unwrap_or(default))
    }
}

/// Meta-objective value at every meta-iterate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaTrace {
    pub objective: Vec<f64>,
}

/// CVaR weights of one task, hoisted out of the meta loop.
struct Prepared<'a> {
    gains: &'a [f64],
    weights: Vec<f64>,
}

fn prepare<'a>(tasks: &'a TaskSet, spec: &RiskSpec) -> Vec<Prepared<'a>> {
    tasks
        .tasks
        .iter()
        .map(|d| {
            let weights = cvar_weights(d.len(), spec.beta);
            Prepared {
                gains: &d.gains()[..weights.len()],
                weights,
            }
        })
        .collect()
}

/// One inner update, generic so it can carry directional derivatives.
fn adapt<S: Scalar>(u: &[S], lambda: &[S], task: &Prepared, spec: &RiskSpec, eta: f64, gamma: f64) -> (Vec<S>, Vec<S>) {
    let s: Vec<S> = u.iter().map(|x| x.exp()).collect();
    let e = weighted_surrogate(&s, lambda, task.gains, &task.weights, spec.c, spec.power);
    (gd_update(u, &e.grad_s, eta), eg_update(lambda, &e.grad_lambda, gamma))
}

/// Surrogate CVaR at `(exp(u), λ)` and the adjoint `(exp(u) ⊙ ∇_s, ∇_λ)`.
fn outer_gradient(u: &[f64], lambda: &[f64], task: &Prepared, spec: &RiskSpec) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let s: Vec<f64> = u.iter().map(|x| x.exp()).collect();
    let e = weighted_surrogate(&s, lambda, task.gains, &task.weights, spec.c, spec.power);
    let a: Vec<f64> = s.iter().zip(&e.grad_s).map(|(s, g)| s * g).collect();
    if !e.value.is_finite() || a.iter().chain(&e.grad_lambda).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite meta-objective gradient".into()));
    }
    Ok((e.value, a, e.grad_lambda))
}

/// Single inner adaptation of `(u, λ)` to one task.
pub fn inner_adapt(
    u: &[f64],
    lambda: &[f64],
    task: &GainDataset,
    spec: &RiskSpec,
    eta: f64,
    gamma: f64,
) -> (Vec<f64>, Vec<f64>) {
    let weights = cvar_weights(task.len(), spec.beta);
    let prepared = Prepared {
        gains: &task.gains()[..weights.len()],
        weights,
    };
    adapt(u, lambda, &prepared, spec, eta, gamma)
}

/// `φ(u, λ) = Σ_τ R̃_τ(exp(u_τ), λ_τ)`.
pub fn meta_objective(u: &[f64], lambda: &[f64], tasks: &TaskSet, spec: &RiskSpec, config: &MetaConfig) -> f64 {
    prepare(tasks, spec)
        .iter()
        .map(|t| {
            let (ut, lt) = adapt(u, lambda, t, spec, config.eta, config.gamma);
            let s: Vec<f64> = ut.iter().map(|x| x.exp()).collect();
            weighted_surrogate(&s, &lt, t.gains, &t.weights, spec.c, spec.power).value
        })
        .sum()
}

/// Jacobian of the adaptation map as columns: `cols[j]` is the derivative of
/// `(u_τ, λ_τ)` (concatenated) with respect to input `j` of `(u, λ)`.
fn adaptation_jacobian(
    u: &[f64],
    lambda: &[f64],
    task: &Prepared,
    spec: &RiskSpec,
    config: &MetaConfig,
) -> Vec<Vec<f64>> {
    let m = u.len();
    (0..2 * m)
        .map(|j| match config.jacobian_mode {
            JacobianMode::Exact => {
                let ud: Vec<Dual> = (0..m).map(|i| Dual::new(u[i], if i == j { 1.0 } else { 0.0 })).collect();
                let ld: Vec<Dual> = (0..m)
                    .map(|i| Dual::new(lambda[i], if i + m == j { 1.0 } else { 0.0 }))
                    .collect();
                let (ut, lt) = adapt(&ud, &ld, task, spec, config.eta, config.gamma);
                ut.iter().chain(&lt).map(|d| d.eps).collect()
            }
            JacobianMode::FiniteDifference => {
                let shifted = |h: f64| {
                    let mut up = u.to_vec();
                    let mut lp = lambda.to_vec();
                    if j < m {
                        up[j] += h;
                    } else {
                        lp[j - m] += h;
                    }
                    let (ut, lt) = adapt(&up, &lp, task, spec, config.eta, config.gamma);
                    ut.into_iter().chain(lt).collect::<Vec<f64>>()
                };
                let plus = shifted(FD_STEP);
                let minus = shifted(-FD_STEP);
                plus.iter().zip(&minus).map(|(p, q)| (p - q) / (2.0 * FD_STEP)).collect()
            }
            JacobianMode::FirstOrder => {
                let mut col = vec![0.0; 2 * m];
                col[j] = 1.0;
                col
            }
        })
        .collect()
}

/// Meta-objective and its gradient `(∇_u φ, ∇_λ φ)`.
pub fn meta_gradient(
    u: &[f64],
    lambda: &[f64],
    tasks: &TaskSet,
    spec: &RiskSpec,
    config: &MetaConfig,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let m = u.len();
    let mut value = 0.0;
    let mut gu = vec![0.0; m];
    let mut gl = vec![0.0; m];
    for task in prepare(tasks, spec) {
        let (ut, lt) = adapt(u, lambda, &task, spec, config.eta, config.gamma);
        let (v, a, b) = outer_gradient(&ut, &lt, &task, spec)?;
        value += v;
        let adjoint: Vec<f64> = a.into_iter().chain(b).collect();
        for (j, col) in adaptation_jacobian(u, lambda, &task, spec, config).iter().enumerate() {
            let dot: f64 = col.iter().zip(&adjoint).map(|(x, y)| x * y).sum();
            if j < m {
                gu[j] += dot;
            } else {
                gl[j - m] += dot;
            }
        }
    }
    if gu.iter().chain(&gl).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite meta-gradient".into()));
    }
    Ok((value, gu, gl))
}

/// `u + η̄ ∇_u φ`.
pub fn meta_gd_step(u: &[f64], lambda: &[f64], tasks: &TaskSet, spec: &RiskSpec, config: &MetaConfig) -> Result<Vec<f64>> {
    let (_, gu, _) = meta_gradient(u, lambda, tasks, spec, config)?;
    let (eta_bar, _) = config.meta_steps(tasks.len());
    Ok(u.iter().zip(&gu).map(|(x, g)| x + eta_bar * g).collect())
}

/// Exponentiated-gradient meta step on `λ` followed by normalization.
pub fn meta_eg_step(lambda: &[f64], u: &[f64], tasks: &TaskSet, spec: &RiskSpec, config: &MetaConfig) -> Result<Vec<f64>> {
    let (_, _, gl) = meta_gradient(u, lambda, tasks, spec, config)?;
    let (_, gamma_bar) = config.meta_steps(tasks.len());
    Ok(eg_update(lambda, &gl, gamma_bar))
}

/// Learn an initialization `(u, λ)` over `tasks`.
pub fn maml_train(tasks: &TaskSet, spec: &RiskSpec, config: &MetaConfig) -> Result<(Vec<f64>, Vec<f64>, MetaTrace)> {
    spec.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (ru, rl) = random_init(config.layers, &mut rng);
    let mut u = config.u_init.clone().unwrap_or(ru);
    let mut lambda = config.lambda_init.clone().unwrap_or(rl);
    let (eta_bar, gamma_bar) = config.meta_steps(tasks.len());
    let mut trace = MetaTrace { objective: Vec::with_capacity(config.meta_iters) };
    for _ in 0..config.meta_iters {
        let (value, gu, gl) = meta_gradient(&u, &lambda, tasks, spec, config)?;
        trace.objective.push(value);
        u = u.iter().zip(&gu).map(|(x, g)| x + eta_bar * g).collect();
        lambda = eg_update(&lambda, &gl, gamma_bar);
    }
    Ok((u, lambda, trace))
}
