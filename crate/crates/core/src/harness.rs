//! Seeded experiment runner.
//!
//! An [`ExperimentSpec`] names a scenario, one sweep variable and the arm
//! (pipeline) to run. Every `(grid point, replication)` pair draws its data
//! from its own seed, learns an allocation, and scores it with the exact step
//! rate against the true gain law or a large holdout sample.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::{sample_gains, FadingModel, GainDataset};
use crate::layer::{db_to_linear, LayerAllocation, RiskSpec};
use crate::meta::{inner_adapt, maml_train, MetaConfig, TaskSet};
use crate::optim::{optimize, optimize_known_distribution, random_init, OptimConfig};
use crate::risk::{analytic_report, empirical_report, RiskReport};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CVAR_LDM_THREADS";

/// Smallest holdout sample accepted for holdout evaluation.
pub const MIN_HOLDOUT: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Expected rate against the number of layers or the sample size.
    #[default]
    Fig3,
    /// Multi-layer over single-layer expected-rate ratio against power.
    Fig4,
    /// CVaR of CVaR-trained and mean-trained allocations against β.
    Fig5,
    /// Meta-learned versus random initialization against sample size.
    Fig6,
    /// Meta-learned initialization against the number of earlier deployments.
    Fig7,
    Custom,
}

/// Parameter varied along the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    /// Number of layers.
    M,
    /// Power in dB.
    P,
    Beta,
    /// Dataset size.
    N,
    /// Number of earlier deployments.
    D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// How a learned allocation is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    /// Block ascent on the surrogate empirical CVaR at the configured β.
    #[default]
    Empirical,
    /// Block ascent on the empirical mean rate (β = 1), scored at the configured β.
    Mean,
    /// Gradient ascent on the exact expected rate under the true law.
    Known,
    /// Meta-learned initialization adapted to the new dataset.
    Maml,
    /// Block ascent from a random initialization.
    Random,
}

/// Scored functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mean,
    Cvar,
    Outage,
}

/// How the meta-learned initialization is used on the new deployment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MamlAdaptation {
    /// The single inner update that meta-training optimizes for.
    #[default]
    OneStep,
    /// Block ascent run to convergence from the meta-learned point.
    Converge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EvalMode {
    /// Closed-form functionals of the true gain law.
    #[default]
    Analytic,
    /// Empirical functionals on a fresh sample of size `n`.
    Holdout { n: usize },
}

/// Evaluator that produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "oracle", rename_all = "lowercase")]
pub enum Oracle {
    Analytic,
    Holdout { n: usize },
    /// The learning dataset itself.
    Empirical { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: RiskReport,
    pub oracle: Oracle,
}

/// A full experiment description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    /// Gain law of the (new) deployment.
    pub model: FadingModel,
    pub sweep: Sweep,
    pub replications: usize,
    pub seed: u64,
    pub eval: EvalMode,
    pub arm: Arm,
    /// Defaults to the scenario's natural metric.
    pub metric: Option<Metric>,
    pub layers: usize,
    /// Dataset size.
    pub n: usize,
    pub power_db: f64,
    pub beta: f64,
    /// Sigmoid steepness of the surrogate.
    pub c: f64,
    pub norm_bound: f64,
    /// Earlier deployments used for meta-training.
    pub deployments: usize,
    /// Variance of the complex deviation added to the line-of-sight mean of
    /// each earlier deployment.
    pub task_mean_var: f64,
    pub maml_adaptation: MamlAdaptation,
    /// Layers of the reference allocation in the fig4 ratio.
    pub ratio_base_layers: usize,
    /// Nested `layers` fields are overridden by the top-level one.
    pub optim: OptimConfig,
    pub meta: MetaConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            scenario: Scenario::Fig3,
            model: FadingModel::rayleigh(1.0),
            sweep: Sweep {
                variable: SweepVariable::M,
                values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            },
            replications: 50,
            seed: 1,
            eval: EvalMode::Analytic,
            arm: Arm::Empirical,
            metric: None,
            layers: 6,
            n: 1000,
            power_db: 20.0,
            beta: 1.0,
            c: 10.0,
            norm_bound: 10.0,
            deployments: 10,
            task_mean_var: 2.0,
            maml_adaptation: MamlAdaptation::OneStep,
            ratio_base_layers: 1,
            optim: OptimConfig::default(),
            meta: MetaConfig::default(),
        }
    }
}

/// One aggregated grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep: f64,
    pub mean: f64,
    /// Standard error of the mean; needs at least two replications.
    pub stderr: Option<f64>,
    pub reps: usize,
    /// Summed wall-clock seconds of the replications. Not written to CSV.
    pub wall_time: f64,
}

/// Rows plus the provenance needed to read them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub scenario: Scenario,
    pub arm: Arm,
    pub metric: Metric,
    pub sweep_variable: SweepVariable,
    pub oracle: Oracle,
    /// How earlier-deployment means were formed, for meta-learning runs.
    pub task_mean_convention: Option<String>,
    pub rows: Vec<ResultRow>,
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 || !v.is_finite() {
        return config_err(format!("{what} must be a positive integer, got {v}"));
    }
    Ok(v as usize)
}

impl ExperimentSpec {
    /// Scenario's metric unless overridden.
    pub fn resolved_metric(&self) -> Metric {
        self.metric.unwrap_or(match self.scenario {
            Scenario::Fig3 | Scenario::Fig4 => Metric::Mean,
            Scenario::Fig5 | Scenario::Fig6 | Scenario::Fig7 | Scenario::Custom => Metric::Cvar,
        })
    }

    pub fn validate(&self) -> Result<()> {
        use Arm::*;
        use SweepVariable as V;
        if self.replications == 0 {
            return config_err("replications must be at least 1");
        }
        if self.sweep.values.is_empty() {
            return config_err("sweep grid is empty");
        }
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let EvalMode::Holdout { n } = self.eval {
            if n < MIN_HOLDOUT {
                return config_err(format!("holdout evaluation needs at least {MIN_HOLDOUT} samples, got {n}"));
            }
        }
        let (arms, vars): (&[Arm], &[V]) = match self.scenario {
            Scenario::Fig3 => (&[Empirical, Mean, Known], &[V::M, V::N]),
            Scenario::Fig4 => (&[Empirical, Known], &[V::P]),
            Scenario::Fig5 => (&[Empirical, Mean], &[V::Beta]),
            Scenario::Fig6 => (&[Maml, Random], &[V::N]),
            Scenario::Fig7 => (&[Maml, Random], &[V::D]),
            Scenario::Custom => (&[Empirical, Mean, Known, Maml, Random], &[V::M, V::P, V::Beta, V::N, V::D]),
        };
        if !arms.contains(&self.arm) {
            return config_err(format!("arm {:?} does not apply to scenario {:?}", self.arm, self.scenario));
        }
        if !vars.contains(&self.sweep.variable) {
            return config_err(format!(
                "sweep over {:?} does not apply to scenario {:?}",
                self.sweep.variable, self.scenario
            ));
        }
        if self.sweep.variable == V::D && !matches!(self.arm, Maml | Random) {
            return config_err("a sweep over deployments needs the maml or random arm");
        }
        if self.arm == Maml && matches!(self.model, FadingModel::Mixture { .. }) {
            return config_err("meta-learning scenarios need a Rayleigh or Rician deployment model");
        }
        if self.scenario == Scenario::Fig4 && self.ratio_base_layers == 0 {
            return config_err("ratio_base_layers must be at least 1");
        }
        if !(self.task_mean_var >= 0.0 && self.task_mean_var.is_finite()) {
            return config_err("task_mean_var must be non-negative");
        }
        for &v in &self.sweep.values {
            self.at(v)?.point_checks()?;
        }
        Ok(())
    }

    /// Copy with the sweep variable set to `v`.
    fn at(&self, v: f64) -> Result<ExperimentSpec> {
        let mut s = self.clone();
        match self.sweep.variable {
            SweepVariable::M => s.layers = as_count(v, "layer count")?,
            SweepVariable::P => s.power_db = v,
            SweepVariable::Beta => s.beta = v,
            SweepVariable::N => s.n = as_count(v, "dataset size")?,
            SweepVariable::D => s.deployments = as_count(v, "deployment count")?,
        }
        s.optim.layers = s.layers;
        s.meta.layers = s.layers;
        Ok(s)
    }

    fn point_checks(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.risk_spec().map_err(wrap)?;
        self.optim.validate().map_err(wrap)?;
        self.meta.validate().map_err(wrap)?;
        if self.n == 0 || self.deployments == 0 || self.layers == 0 {
            return config_err("n, deployments and layers must be positive");
        }
        Ok(())
    }

    fn risk_spec(&self) -> Result<RiskSpec> {
        RiskSpec::new(self.beta, self.c, db_to_linear(self.power_db), self.norm_bound)
    }

    fn oracle(&self) -> Oracle {
        match self.eval {
            EvalMode::Analytic => Oracle::Analytic,
            EvalMode::Holdout { n } => Oracle::Holdout { n },
        }
    }
}

/// Stable 64-bit seed for replication `rep` of grid point `grid`.
pub fn replication_seed(base: u64, grid: usize, rep: usize) -> u64 {
    let mut z = base
        ^ (grid as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (rep as u64).wrapping_mul(0xD1B5_4A32_D192_ED03).rotate_left(29);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    splitmix(z)
}

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent sub-stream `k` of a replication seed.
fn substream(seed: u64, k: u64) -> u64 {
    splitmix(seed ^ splitmix(k.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Score `alloc` on a known law, analytically or with a holdout sample drawn
/// from `seed`.
pub fn evaluate(
    alloc: &LayerAllocation,
    model: &FadingModel,
    mode: EvalMode,
    seed: u64,
    spec: &RiskSpec,
) -> Result<Evaluation> {
    match mode {
        EvalMode::Analytic => Ok(Evaluation {
            report: analytic_report(alloc, model, spec)?,
            oracle: Oracle::Analytic,
        }),
        EvalMode::Holdout { n } => {
            let data = sample_gains(model, n, seed)?;
            Ok(Evaluation {
                report: empirical_report(alloc, &data, spec),
                oracle: Oracle::Holdout { n },
            })
        }
    }
}

/// Score `alloc` on a fixed dataset.
pub fn evaluate_on_data(alloc: &LayerAllocation, data: &GainDataset, spec: &RiskSpec) -> Evaluation {
    Evaluation {
        report: empirical_report(alloc, data, spec),
        oracle: Oracle::Empirical { n: data.len() },
    }
}

fn pick(report: &RiskReport, metric: Metric) -> f64 {
    match metric {
        Metric::Mean => report.mean_rate,
        Metric::Cvar => report.cvar_rate,
        Metric::Outage => report.outage_rate,
    }
}

/// Earlier-deployment gain laws: the line-of-sight mean of `model` shifted by
/// a complex Gaussian deviation of total variance `spec.task_mean_var`.
pub fn task_models<R: Rng + ?Sized>(model: &FadingModel, spec_var: f64, d: usize, rng: &mut R) -> Result<Vec<FadingModel>> {
    let (nu, var) = match model {
        FadingModel::Rayleigh { var } => (0.0, *var),
        FadingModel::Rician { nu, var } => (*nu, *var),
        FadingModel::Mixture { .. } => return config_err("task models need a Rayleigh or Rician base"),
    };
    let sd = (spec_var / 2.0).sqrt();
    Ok((0..d)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            FadingModel::rician_complex(nu + sd * re, sd * im, var)
        })
        .collect())
}

/// Learned allocation of one replication, before scoring.
fn learn(spec: &ExperimentSpec, risk: &RiskSpec, seed: u64) -> Result<LayerAllocation> {
    let data = || sample_gains(&spec.model, spec.n, substream(seed, 0));
    match spec.arm {
        Arm::Empirical => Ok(optimize(&data()?, risk, &spec.optim)?.0),
        Arm::Mean => {
            let mean_spec = RiskSpec { beta: 1.0, ..*risk };
            Ok(optimize(&data()?, &mean_spec, &spec.optim)?.0)
        }
        Arm::Known => Ok(optimize_known_distribution(&spec.model, risk, &spec.optim)?.0),
        Arm::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, 1));
            let (u, l) = random_init(spec.layers, &mut rng);
            Ok(optimize(&data()?, risk, &spec.optim.clone().with_init(u, l))?.0)
        }
        Arm::Maml => {
            let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, 2));
            let models = task_models(&spec.model, spec.task_mean_var, spec.deployments, &mut rng)?;
            let tasks = models
                .iter()
                .enumerate()
                .map(|(t, m)| sample_gains(m, spec.n, substream(seed, 100 + t as u64)))
                .collect::<Result<Vec<_>>>()?;
            let mut meta = spec.meta.clone();
            meta.seed = substream(seed, 1);
            let (u, l, _) = maml_train(&TaskSet::new(tasks)?, risk, &meta)?;
            let data = data()?;
            match spec.maml_adaptation {
                MamlAdaptation::OneStep => {
                    let (ua, la) = inner_adapt(&u, &l, &data, risk, meta.eta, meta.gamma);
                    Ok(LayerAllocation {
                        s: ua.iter().map(|x| x.exp()).collect(),
                        lambda: la,
                    })
                }
                MamlAdaptation::Converge => Ok(optimize(&data, risk, &spec.optim.clone().with_init(u, l))?.0),
            }
        }
    }
}

/// Metric value of one replication at one grid point.
fn replicate(spec: &ExperimentSpec, seed: u64) -> Result<f64> {
    let risk = spec.risk_spec()?;
    let metric = spec.resolved_metric();
    let score = |alloc: &LayerAllocation| -> Result<f64> {
        Ok(pick(&evaluate(alloc, &spec.model, spec.eval, substream(seed, 3), &risk)?.report, metric))
    };
    if spec.scenario == Scenario::Fig4 {
        let mut base = spec.clone();
        base.layers = spec.ratio_base_layers;
        base.optim.layers = spec.ratio_base_layers;
        let top = score(&learn(spec, &risk, seed)?)?;
        let bottom = score(&learn(&base, &risk, seed)?)?;
        if bottom <= 0.0 {
            return Err(Error::Numerical("reference allocation has zero rate".into()));
        }
        return Ok(top / bottom);
    }
    score(&learn(spec, &risk, seed)?)
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

fn aggregate(sweep: f64, values: &[(f64, f64)]) -> ResultRow {
    let reps = values.len();
    let mean = values.iter().map(|v| v.0).sum::<f64>() / reps as f64;
    let stderr = (reps >= 2).then(|| {
        let ss: f64 = values.iter().map(|v| (v.0 - mean).powi(2)).sum();
        (ss / (reps - 1) as f64 / reps as f64).sqrt()
    });
    ResultRow {
        sweep,
        mean,
        stderr,
        reps,
        wall_time: values.iter().map(|v| v.1).sum(),
    }
}

/// Run every `(grid point, replication)` pair and aggregate per grid point.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let points = spec
        .sweep
        .values
        .iter()
        .map(|&v| spec.at(v))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|g| (0..spec.replications).map(move |r| (g, r)))
        .collect();
    let run = || -> Vec<Result<(f64, f64)>> {
        jobs.par_iter()
            .map(|&(g, r)| {
                let start = Instant::now();
                let v = replicate(&points[g], replication_seed(spec.seed, g, r))?;
                Ok((v, start.elapsed().as_secs_f64()))
            })
            .collect()
    };
    let results = match thread_cap() {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    };
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let rows = results
        .chunks(spec.replications)
        .zip(&spec.sweep.values)
        .map(|(vals, &v)| aggregate(v, vals))
        .collect();
    let task_mean_convention = matches!(spec.arm, Arm::Maml).then(|| {
        format!(
            "task mean = base mean + complex deviation with variance {} ({} per component); gain law uses its modulus",
            spec.task_mean_var,
            spec.task_mean_var / 2.0
        )
    });
    Ok(ExperimentOutput {
        scenario: spec.scenario,
        arm: spec.arm,
        metric: spec.resolved_metric(),
        sweep_variable: spec.sweep.variable,
        oracle: spec.oracle(),
        task_mean_convention,
        rows,
    })
}

/// CSV with header `sweep,mean,stderr,reps`; a missing standard error is an
/// empty field.
pub fn write_rows_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sweep", "mean", "stderr", "reps"])?;
    for r in rows {
        out.write_record([
            format!("{:?}", r.sweep),
            format!("{:?}", r.mean),
            r.stderr.map(|s| format!("{s:?}")).unwrap_or_default(),
            r.reps.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario, arm: Arm, variable: SweepVariable, values: Vec<f64>) -> ExperimentSpec {
        ExperimentSpec {
            scenario,
            arm,
            sweep: Sweep { variable, values },
            replications: 3,
            n: 50,
            layers: 2,
            optim: OptimConfig {
                max_iters: 300,
                ..Default::default()
            },
            meta: MetaConfig {
                meta_iters: 5,
                ..Default::default()
            },
            deployments: 2,
            ..Default::default()
        }
    }

    #[test]
    fn seeds_differ_across_grid_and_replications() {
        let a = replication_seed(7, 0, 0);
        assert_ne!(a, replication_seed(7, 0, 1));
        assert_ne!(a, replication_seed(7, 1, 0));
        assert_ne!(a, replication_seed(8, 0, 0));
        assert_eq!(a, replication_seed(7, 0, 0));
        assert_ne!(substream(a, 0), substream(a, 1));
    }

    #[test]
    fn scenario_mismatches_are_config_errors() {
        let bad = small(Scenario::Fig3, Arm::Maml, SweepVariable::M, vec![1.0]);
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = small(Scenario::Fig5, Arm::Empirical, SweepVariable::M, vec![1.0]);
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = small(Scenario::Fig3, Arm::Empirical, SweepVariable::M, vec![1.5]);
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let mut bad = small(Scenario::Fig3, Arm::Empirical, SweepVariable::M, vec![]);
        assert!(bad.validate().is_err());
        bad.sweep.values = vec![2.0];
        bad.eval = EvalMode::Holdout { n: 10 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rows_are_ordered_and_reproducible() {
        let spec = small(Scenario::Fig3, Arm::Empirical, SweepVariable::M, vec![2.0, 1.0]);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        assert_eq!(a.rows.len(), 2);
        assert_eq!(a.rows[0].sweep, 2.0);
        assert_eq!(a.rows[1].reps, 3);
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        write_rows_csv(&a.rows, &mut ca).unwrap();
        write_rows_csv(&b.rows, &mut cb).unwrap();
        assert_eq!(ca, cb);
        assert!(String::from_utf8(ca).unwrap().starts_with("sweep,mean,stderr,reps\n"));
        let ceiling = (1.0 + 10.0 * 100.0f64).log2();
        for r in &a.rows {
            assert!(r.mean >= 0.0 && r.mean <= ceiling);
            assert!(r.stderr.unwrap() >= 0.0);
        }
    }

    #[test]
    fn single_replication_has_no_stderr() {
        let row = aggregate(1.0, &[(2.0, 0.1)]);
        assert_eq!(row.stderr, None);
        let row = aggregate(1.0, &[(1.0, 0.0), (3.0, 0.0)]);
        assert!((row.stderr.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn meta_arm_runs_and_records_convention() {
        let mut spec = small(Scenario::Fig6, Arm::Maml, SweepVariable::N, vec![5.0]);
        spec.model = FadingModel::rician(10f64.sqrt(), 5.0);
        spec.beta = 0.2;
        let out = run_experiment(&spec).unwrap();
        assert!(out.task_mean_convention.is_some());
        assert!(out.rows[0].mean.is_finite());
    }

    #[test]
    fn beta_one_report_has_equal_mean_and_cvar() {
        let alloc = LayerAllocation::new(vec![0.3, 0.5], vec![0.6, 0.4]).unwrap();
        let spec = RiskSpec::new(1.0, 10.0, 100.0, 10.0).unwrap();
        let model = FadingModel::rayleigh(1.0);
        let e = evaluate(&alloc, &model, EvalMode::Analytic, 0, &spec).unwrap();
        assert!((e.report.cvar_rate - e.report.mean_rate).abs() < 1e-12);
        let h = evaluate(&alloc, &model, EvalMode::Holdout { n: 1000 }, 5, &spec).unwrap();
        assert_eq!(h.oracle, Oracle::Holdout { n: 1000 });
        assert!((h.report.cvar_rate - h.report.mean_rate).abs() < 1e-12);
    }
}
