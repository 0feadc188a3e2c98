//! Channel-gain distributions.
//!
//! A [`FadingModel`] describes the law of the complex fading coefficient `h`;
//! everything downstream works with the power gain `g = |h|^2`. Rayleigh and
//! Rician gains have closed-form or series CCDFs, and finite mixtures of them
//! inherit both.
//!
//! The Rician gain CCDF is the first-order Marcum Q-function. It is evaluated
//! through its Poisson-mixture form: with `K ~ Poisson(ν²/σ²)` and
//! `L ~ Poisson(t/σ²)` independent, `Pr[g ≥ t] = Pr[K ≥ L]`. Summing whichever
//! of the two tails is small keeps the absolute error far below 1e-10.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Parametric law of the fading coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FadingModel {
    /// `h ~ CN(0, var)`; the gain is exponential with mean `var`.
    Rayleigh { var: f64 },
    /// `h ~ CN(m, var)` with `|m| = nu`.
    Rician { nu: f64, var: f64 },
    /// Finite mixture; weights must be non-negative and sum to one.
    Mixture { parts: Vec<(f64, FadingModel)> },
}

impl FadingModel {
    pub fn rayleigh(var: f64) -> Self {
        FadingModel::Rayleigh { var }
    }

    pub fn rician(nu: f64, var: f64) -> Self {
        FadingModel::Rician { nu, var }
    }

    /// Rician model from a complex line-of-sight mean. Only `|mean|` affects
    /// the gain law.
    pub fn rician_complex(mean_re: f64, mean_im: f64, var: f64) -> Self {
        FadingModel::Rician {
            nu: mean_re.hypot(mean_im),
            var,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FadingModel::Rayleigh { var } => {
                if !(var.is_finite() && *var > 0.0) {
                    return param(format!("variance must be positive, got {var}"));
                }
            }
            FadingModel::Rician { nu, var } => {
                if !(var.is_finite() && *var > 0.0) {
                    return param(format!("variance must be positive, got {var}"));
                }
                if !(nu.is_finite() && *nu >= 0.0) {
                    return param(format!("line-of-sight magnitude must be non-negative, got {nu}"));
                }
            }
            FadingModel::Mixture { parts } => {
                if parts.is_empty() {
                    return param("mixture has no components");
                }
                let mut total = 0.0;
                for (w, m) in parts {
                    if !(w.is_finite() && *w >= 0.0) {
                        return param(format!("mixture weight must be non-negative, got {w}"));
                    }
                    m.validate()?;
                    total += w;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return param(format!("mixture weights sum to {total}, expected 1"));
                }
            }
        }
        Ok(())
    }

    /// `E[g]`.
    pub fn mean_gain(&self) -> f64 {
        match self {
            FadingModel::Rayleigh { var } => *var,
            FadingModel::Rician { nu, var } => nu * nu + var,
            FadingModel::Mixture { parts } => parts.iter().map(|(w, m)| w * m.mean_gain()).sum(),
        }
    }

    /// `Pr[g ≥ t]`.
    pub fn ccdf(&self, t: f64) -> Result<f64> {
        self.validate()?;
        check_point(t)?;
        Ok(self.tail(t))
    }

    /// Density of the gain at `g`.
    pub fn pdf(&self, g: f64) -> Result<f64> {
        self.validate()?;
        check_point(g)?;
        Ok(self.density(g))
    }

    /// Derivative of the density with respect to the gain.
    pub fn pdf_derivative(&self, g: f64) -> Result<f64> {
        self.validate()?;
        check_point(g)?;
        Ok(self.density_slope(g))
    }

    /// Gain `t` with `Pr[g < t] = p`, by bisection on the CCDF.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.validate()?;
        if !(0.0..1.0).contains(&p) {
            return param(format!("quantile level must lie in [0, 1), got {p}"));
        }
        if p == 0.0 {
            return Ok(0.0);
        }
        let mut hi = self.mean_gain().max(f64::MIN_POSITIVE);
        while self.tail(hi) > 1.0 - p {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Numerical("quantile bracket diverged".into()));
            }
        }
        crate::numerics::bisect(|t| self.tail(t) - (1.0 - p), 0.0, hi, 1e-12 * hi)
    }

    /// CCDF without validation. Callers must have validated the model.
    pub(crate) fn tail(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match self {
            FadingModel::Rayleigh { var } => (-t / var).exp(),
            FadingModel::Rician { nu, var } => rician_ccdf(nu * nu / var, t / var),
            FadingModel::Mixture { parts } => parts.iter().map(|(w, m)| w * m.tail(t)).sum(),
        }
    }

    pub(crate) fn density(&self, g: f64) -> f64 {
        if g < 0.0 {
            return 0.0;
        }
        match self {
            FadingModel::Rayleigh { var } => (-g / var).exp() / var,
            FadingModel::Rician { nu, var } => {
                let (p, _) = rician_density(nu * nu / var, g / var);
                p / var
            }
            FadingModel::Mixture { parts } => parts.iter().map(|(w, m)| w * m.density(g)).sum(),
        }
    }

    pub(crate) fn density_slope(&self, g: f64) -> f64 {
        if g < 0.0 {
            return 0.0;
        }
        match self {
            FadingModel::Rayleigh { var } => -(-g / var).exp() / (var * var),
            FadingModel::Rician { nu, var } => {
                let (_, dp) = rician_density(nu * nu / var, g / var);
                dp / (var * var)
            }
            FadingModel::Mixture { parts } => {
                parts.iter().map(|(w, m)| w * m.density_slope(g)).sum()
            }
        }
    }

    /// Draw one gain.
    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            FadingModel::Rayleigh { var } => complex_gain(rng, 0.0, *var),
            FadingModel::Rician { nu, var } => complex_gain(rng, *nu, *var),
            FadingModel::Mixture { parts } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, m) in parts {
                    acc += w;
                    if u < acc {
                        return m.draw(rng);
                    }
                }
                parts.last().expect("validated non-empty").1.draw(rng)
            }
        }
    }
}

fn check_point(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return param(format!("gain argument must be non-negative, got {t}"));
    }
    Ok(())
}

// |m + sqrt(var/2) (z1 + i z2)|^2 with the line-of-sight component on the real axis.
fn complex_gain<R: Rng + ?Sized>(rng: &mut R, nu: f64, var: f64) -> f64 {
    let scale = (0.5 * var).sqrt();
    let re: f64 = rng.sample::<f64, _>(StandardNormal) * scale + nu;
    let im: f64 = rng.sample::<f64, _>(StandardNormal) * scale;
    re * re + im * im
}

/// Poisson log-pmf for `k = 0..=kmax`, built by recursion.
fn poisson_pmf(mean: f64, kmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    if mean == 0.0 {
        out.push(1.0);
        out.resize(kmax + 1, 0.0);
        return out;
    }
    let ln_mean = mean.ln();
    let mut log_p = -mean;
    for k in 0..=kmax {
        if k > 0 {
            log_p += ln_mean - (k as f64).ln();
        }
        out.push(log_p.exp());
    }
    out
}

fn poisson_span(mean: f64) -> usize {
    (mean + 12.0 * mean.sqrt() + 40.0).ceil() as usize
}

/// `Pr[K ≥ L]` for `K ~ Poisson(mu)`, `L ~ Poisson(y)`; equals `Q1(√(2mu), √(2y))`.
fn rician_ccdf(mu: f64, y: f64) -> f64 {
    let jmax = poisson_span(mu);
    let imax = jmax.max(poisson_span(y));
    let pk = poisson_pmf(mu, jmax);
    let pl = poisson_pmf(y, imax + 1);
    if y <= mu + 1.0 {
        // Small lower tail: CDF = Σ_j p_K(j) Pr[L > j].
        let mut upper = vec![0.0; pl.len() + 1];
        for i in (0..pl.len()).rev() {
            upper[i] = upper[i + 1] + pl[i];
        }
        let cdf: f64 = pk.iter().enumerate().map(|(j, p)| p * upper[j + 1]).sum();
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        // Small upper tail: CCDF = Σ_j p_K(j) Pr[L ≤ j].
        let mut lower = 0.0;
        let mut ccdf = 0.0;
        for (j, p) in pk.iter().enumerate() {
            lower += pl[j];
            ccdf += p * lower;
        }
        ccdf.clamp(0.0, 1.0)
    }
}

/// Normalized Rician gain density and its slope in units of `y = g/var`.
fn rician_density(mu: f64, y: f64) -> (f64, f64) {
    let jmax = poisson_span(mu);
    let pk = poisson_pmf(mu, jmax);
    let pl = poisson_pmf(y, jmax);
    let mut dens = 0.0;
    let mut slope = 0.0;
    for j in 0..=jmax {
        dens += pk[j] * pl[j];
        let prev = if j == 0 { 0.0 } else { pl[j - 1] };
        slope += pk[j] * (prev - pl[j]);
    }
    (dens, slope)
}

/// Sorted multiset of channel-gain samples.
#[derive(Debug, Clone, PartialEq)]
pub struct GainDataset {
    gains: Vec<f64>,
    seed: u64,
}

impl GainDataset {
    /// Build a dataset from raw gains; sorts ascending.
    pub fn new(mut gains: Vec<f64>, seed: u64) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(bad) = gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return param(format!("gains must be finite and non-negative, got {bad}"));
        }
        gains.sort_by(f64::total_cmp);
        Ok(GainDataset { gains, seed })
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The `i`-th smallest gain, 1-based (`g_[i]`).
    pub fn order_stat(&self, i: usize) -> Result<f64> {
        if i == 0 || i > self.gains.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.gains.len(),
            });
        }
        Ok(self.gains[i - 1])
    }

    /// Fraction of samples with gain ≥ `t`.
    pub fn empirical_ccdf(&self, t: f64) -> f64 {
        let below = self.gains.partition_point(|&g| g < t);
        (self.gains.len() - below) as f64 / self.gains.len() as f64
    }

    /// Write as CSV with a `gain` header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["gain"])?;
        for g in &self.gains {
            wtr.write_record([format!("{g:?}")])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read the CSV format produced by [`GainDataset::write_csv`].
    pub fn read_csv<R: Read>(r: R, seed: u64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() != 1 || headers.get(0).map(str::trim) != Some("gain") {
            return Err(Error::Config(format!(
                "expected a single `gain` column, found {headers:?}"
            )));
        }
        let mut gains = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = rec.get(0).unwrap_or("").trim();
            let g: f64 = field
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse gain `{field}`")))?;
            gains.push(g);
        }
        GainDataset::new(gains, seed)
    }
}

/// Draw `n` i.i.d. gains from `model`; deterministic for a fixed seed.
pub fn sample_gains(model: &FadingModel, n: usize, seed: u64) -> Result<GainDataset> {
    model.validate()?;
    if n == 0 {
        return param("sample size must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gains = (0..n).map(|_| model.draw(&mut rng)).collect();
    GainDataset::new(gains, seed)
}
