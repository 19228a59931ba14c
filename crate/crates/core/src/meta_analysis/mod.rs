//! Random-effects meta-analysis of log-MTD estimates under the
//! normal-normal hierarchical model.
//!
//! The overall mean `mu` is integrated out analytically; the heterogeneity
//! `tau` is integrated numerically on a fixed linear grid. Every posterior
//! quantity is then a finite mixture of normals, one component per grid
//! point, and quantiles come from bisection on the mixture CDF.

mod bridge;
mod mixture;

use serde::Serialize;

use crate::dose_response::MtdEstimate;
use crate::error::{Error, Result};

pub use bridge::{bridge, BridgeGroup, BridgeResult, StageOneEstimate};
pub use mixture::NormalMixture;

/// Number of points in the heterogeneity grid.
pub const TAU_GRID_POINTS: usize = 1601;
/// Default credible level for reported intervals.
pub const LEVEL: f64 = 0.95;

const TAIL_RATIO: f64 = 1e-8;
const MAX_DOUBLINGS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MuPrior {
    ImproperUniform,
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TauPrior {
    ImproperUniform,
    HalfNormal { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriorSpec {
    pub mu_prior: MuPrior,
    pub tau_prior: TauPrior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self::uniform()
    }
}

impl PriorSpec {
    pub fn uniform() -> Self {
        Self {
            mu_prior: MuPrior::ImproperUniform,
            tau_prior: TauPrior::ImproperUniform,
        }
    }

    /// Uniform effect prior with a half-normal heterogeneity prior.
    pub fn half_normal(scale: f64) -> Self {
        Self {
            mu_prior: MuPrior::ImproperUniform,
            tau_prior: TauPrior::HalfNormal { scale },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let MuPrior::Normal { mean, sd } = self.mu_prior {
            if !(mean.is_finite() && sd.is_finite() && sd > 0.0) {
                return Err(Error::Config(format!(
                    "normal mu prior needs finite mean and positive sd, got ({mean}, {sd})"
                )));
            }
        }
        if let TauPrior::HalfNormal { scale } = self.tau_prior {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::Config(format!(
                    "half-normal scale must be positive, got {scale}"
                )));
            }
        }
        Ok(())
    }

    fn log_tau_density(&self, tau: f64) -> f64 {
        match self.tau_prior {
            TauPrior::ImproperUniform => 0.0,
            TauPrior::HalfNormal { scale } => -0.5 * (tau / scale).powi(2),
        }
    }
}

/// Study-level estimates `(y_i, s_i)` entering the meta-analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaInput {
    estimates: Vec<MtdEstimate>,
}

impl MetaInput {
    pub fn new(estimates: Vec<MtdEstimate>) -> Result<Self> {
        if estimates.is_empty() {
            return Err(Error::Validation("meta-analysis needs at least one study".into()));
        }
        for e in &estimates {
            if !e.estimate.is_finite() {
                return Err(Error::Validation(format!(
                    "study `{}` has non-finite estimate {}",
                    e.study_id, e.estimate
                )));
            }
            if !(e.std_err.is_finite() && e.std_err > 0.0) {
                return Err(Error::Validation(format!(
                    "study `{}` has standard error {}; a positive finite value is required",
                    e.study_id, e.std_err
                )));
            }
        }
        Ok(Self { estimates })
    }

    /// Builds an input from bare `(y, s)` pairs, labelling studies by position.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .enumerate()
                .map(|(i, &(y, s))| MtdEstimate {
                    study_id: format!("study{}", i + 1),
                    estimate: y,
                    std_err: s,
                    warning: None,
                })
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.estimates.len()
    }

    pub fn estimates(&self) -> &[MtdEstimate] {
        &self.estimates
    }

    pub fn y(&self, i: usize) -> f64 {
        self.estimates[i].estimate
    }

    pub fn s(&self, i: usize) -> f64 {
        self.estimates[i].std_err
    }

    pub fn index_of(&self, study_id: &str) -> Option<usize> {
        self.estimates.iter().position(|e| e.study_id == study_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Interval {
        Interval {
            lower: f(self.lower),
            upper: f(self.upper),
        }
    }
}

/// Posterior summary of a scalar quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    /// Equal-tailed interval.
    pub central: Interval,
    pub shortest: Interval,
}

/// Quantile-based summary on a transformed scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileSummary {
    pub median: f64,
    pub central: Interval,
    pub shortest: Interval,
}

impl Summary {
    /// Exponentiated quantiles; moments do not carry over.
    pub fn exp(&self) -> QuantileSummary {
        QuantileSummary {
            median: self.median.exp(),
            central: self.central.map(f64::exp),
            shortest: self.shortest.map(f64::exp),
        }
    }
}

/// Marginal posterior of `tau` on a grid, with the conditional posterior of
/// `mu` given each grid value.
#[derive(Debug, Clone)]
pub struct TauGridPosterior {
    grid: Vec<f64>,
    density: Vec<f64>,
    /// Quadrature mass of each grid point; sums to one.
    mass: Vec<f64>,
    cond_mean: Vec<f64>,
    cond_sd: Vec<f64>,
    /// Warning raised while building the posterior, if any.
    pub warning: Option<String>,
}

struct Conditional {
    mean: f64,
    sd: f64,
    log_marginal: f64,
}

fn conditional(input: &MetaInput, mu_prior: MuPrior, tau: f64) -> Conditional {
    let t2 = tau * tau;
    let (mut sw, mut swy, mut sum_log_var) = (0.0, 0.0, 0.0);
    for e in &input.estimates {
        let var = e.std_err * e.std_err + t2;
        sw += 1.0 / var;
        swy += e.estimate / var;
        sum_log_var += var.ln();
    }
    if let MuPrior::Normal { mean, sd } = mu_prior {
        let v0 = sd * sd;
        sw += 1.0 / v0;
        swy += mean / v0;
    }
    let mean = swy / sw;
    let mut q = 0.0;
    for e in &input.estimates {
        q += (e.estimate - mean).powi(2) / (e.std_err * e.std_err + t2);
    }
    if let MuPrior::Normal { mean: m0, sd } = mu_prior {
        q += (m0 - mean).powi(2) / (sd * sd);
    }
    Conditional {
        mean,
        sd: sw.recip().sqrt(),
        log_marginal: -0.5 * (sw.ln() + sum_log_var + q),
    }
}

fn log_density(input: &MetaInput, prior: &PriorSpec, tau: f64) -> f64 {
    prior.log_tau_density(tau) + conditional(input, prior.mu_prior, tau).log_marginal
}

/// Scale below which the grid is roughly uniform; above it the spacing
/// grows in proportion to `tau`.
fn grid_scale(input: &MetaInput, prior: &PriorSpec) -> f64 {
    let s_min = input
        .estimates
        .iter()
        .map(|e| e.std_err)
        .fold(f64::INFINITY, f64::min);
    match prior.tau_prior {
        TauPrior::HalfNormal { scale } => s_min.min(scale),
        TauPrior::ImproperUniform => s_min,
    }
}

/// Upper grid limit: doubles from a small base until the unnormalized
/// density has dropped below `TAIL_RATIO` times the largest value seen.
fn tau_upper_limit(input: &MetaInput, prior: &PriorSpec) -> Result<f64> {
    let s_min = input
        .estimates
        .iter()
        .map(|e| e.std_err)
        .fold(f64::INFINITY, f64::min);
    let mut base = s_min;
    if let TauPrior::HalfNormal { scale } = prior.tau_prior {
        base = base.min(scale);
    }
    base *= 1e-3;
    let mut peak = log_density(input, prior, 0.0);
    let mut tau = base;
    for _ in 0..MAX_DOUBLINGS {
        let ld = log_density(input, prior, tau);
        if ld > peak {
            peak = ld;
        } else if ld < peak + TAIL_RATIO.ln() {
            return Ok(tau);
        }
        tau *= 2.0;
    }
    Err(Error::Numerical(
        "heterogeneity posterior does not decay; use a proper tau prior".into(),
    ))
}

/// Posterior of `(mu, tau)` on the heterogeneity grid.
pub fn posterior(input: &MetaInput, prior: &PriorSpec) -> Result<TauGridPosterior> {
    prior.validate()?;
    let mut warning = None;
    if prior.tau_prior == TauPrior::ImproperUniform {
        match input.k() {
            1 => {
                return Err(Error::ImproperPosterior(
                    "a single study with a uniform tau prior; specify a proper (e.g. half-normal) tau prior".into(),
                ))
            }
            2 => {
                let msg = "only two studies with a uniform tau prior; a proper tau prior is recommended".to_string();
                log::warn!("{msg}");
                warning = Some(msg);
            }
            _ => {}
        }
    }

    let tau_max = tau_upper_limit(input, prior)?;
    let n = TAU_GRID_POINTS;
    let c = grid_scale(input, prior);
    let stretch = (tau_max / c).ln_1p();
    let mut grid: Vec<f64> = (0..n)
        .map(|j| c * (stretch * j as f64 / (n - 1) as f64).exp_m1())
        .collect();
    grid[n - 1] = tau_max;

    let mut log_d = Vec::with_capacity(n);
    let mut cond_mean = Vec::with_capacity(n);
    let mut cond_sd = Vec::with_capacity(n);
    for &tau in &grid {
        let c = conditional(input, prior.mu_prior, tau);
        log_d.push(prior.log_tau_density(tau) + c.log_marginal);
        cond_mean.push(c.mean);
        cond_sd.push(c.sd);
    }
    let top = log_d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numerical("heterogeneity density is not finite".into()));
    }
    let raw: Vec<f64> = log_d.iter().map(|l| (l - top).exp()).collect();
    let trap: Vec<f64> = (0..n)
        .map(|j| {
            let left = if j > 0 { grid[j] - grid[j - 1] } else { 0.0 };
            let right = if j + 1 < n { grid[j + 1] - grid[j] } else { 0.0 };
            0.5 * (left + right)
        })
        .collect();
    let integral: f64 = raw.iter().zip(&trap).map(|(d, w)| d * w).sum();
    let density: Vec<f64> = raw.iter().map(|d| d / integral).collect();
    let mass: Vec<f64> = density.iter().zip(&trap).map(|(d, w)| d * w).collect();

    Ok(TauGridPosterior {
        grid,
        density,
        mass,
        cond_mean,
        cond_sd,
        warning,
    })
}

impl TauGridPosterior {
    /// Degenerate posterior with `tau` known.
    pub fn at_fixed_tau(input: &MetaInput, mu_prior: MuPrior, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::Config(format!("tau must be non-negative, got {tau}")));
        }
        let c = conditional(input, mu_prior, tau);
        Ok(Self {
            grid: vec![tau],
            density: vec![1.0],
            mass: vec![1.0],
            cond_mean: vec![c.mean],
            cond_sd: vec![c.sd],
            warning: None,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn cond_mean(&self) -> &[f64] {
        &self.cond_mean
    }

    pub fn cond_sd(&self) -> &[f64] {
        &self.cond_sd
    }

    /// Trapezoid integral of the density; one by construction.
    pub fn integral(&self) -> f64 {
        if self.grid.len() == 1 {
            return self.density[0];
        }
        self.grid
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1]))
            .sum()
    }

    /// Mixture over the grid with the given per-point mean and sd.
    fn mixture(&self, f: impl Fn(usize) -> (f64, f64)) -> NormalMixture {
        let (means, sds): (Vec<f64>, Vec<f64>) = (0..self.grid.len()).map(f).unzip();
        NormalMixture::new(&self.mass, &means, &sds)
    }

    pub fn mu_mixture(&self) -> NormalMixture {
        self.mixture(|j| (self.cond_mean[j], self.cond_sd[j]))
    }

    pub fn prediction_mixture(&self) -> NormalMixture {
        self.mixture(|j| {
            let t = self.grid[j];
            (self.cond_mean[j], (self.cond_sd[j].powi(2) + t * t).sqrt())
        })
    }

    /// Posterior of study `i`'s true effect.
    pub fn shrinkage_mixture(&self, input: &MetaInput, i: usize) -> Result<NormalMixture> {
        check_index(input, i)?;
        let (y, s2) = (input.y(i), input.s(i).powi(2));
        Ok(self.mixture(|j| {
            let t2 = self.grid[j].powi(2);
            let b = s2 / (s2 + t2);
            let mean = (1.0 - b) * y + b * self.cond_mean[j];
            let var = (1.0 - b) * s2 + b * b * self.cond_sd[j].powi(2);
            (mean, var.sqrt())
        }))
    }

    fn tau_cdf_nodes(&self) -> Vec<f64> {
        let mut cdf = vec![0.0; self.grid.len()];
        for j in 1..self.grid.len() {
            let h = self.grid[j] - self.grid[j - 1];
            cdf[j] = cdf[j - 1] + 0.5 * h * (self.density[j - 1] + self.density[j]);
        }
        cdf
    }

    /// Quantile of `tau` under the piecewise-linear density.
    pub fn tau_quantile(&self, p: f64) -> f64 {
        tau_quantile_with(&self.grid, &self.density, &self.tau_cdf_nodes(), p)
    }
}

fn tau_quantile_with(grid: &[f64], density: &[f64], cdf: &[f64], p: f64) -> f64 {
    if grid.len() == 1 {
        return grid[0];
    }
    let total = *cdf.last().unwrap();
    let target = (p * total).clamp(0.0, total);
    let j = match cdf.iter().position(|&c| c >= target) {
        Some(0) => return grid[0],
        Some(j) => j - 1,
        None => return *grid.last().unwrap(),
    };
    let h = grid[j + 1] - grid[j];
    let (f0, f1) = (density[j], density[j + 1]);
    let rem = target - cdf[j];
    let slope = (f1 - f0) / h;
    // solve f0 u + slope u^2 / 2 = rem
    let u = if slope.abs() < 1e-300 {
        if f0 > 0.0 {
            rem / f0
        } else {
            0.0
        }
    } else {
        let disc = (f0 * f0 + 2.0 * slope * rem).max(0.0);
        2.0 * rem / (f0 + disc.sqrt())
    };
    grid[j] + u.clamp(0.0, h)
}

fn check_index(input: &MetaInput, i: usize) -> Result<()> {
    if i >= input.k() {
        return Err(Error::IndexOutOfRange { index: i, k: input.k() });
    }
    Ok(())
}

/// Posterior summary of the overall mean `mu`.
pub fn combined_estimate(post: &TauGridPosterior) -> Summary {
    post.mu_mixture().summary(LEVEL)
}

/// Posterior predictive summary for a new study's effect.
pub fn prediction(post: &TauGridPosterior) -> Summary {
    post.prediction_mixture().summary(LEVEL)
}

/// Shrinkage summary of study `i` (zero-based).
pub fn shrinkage(post: &TauGridPosterior, input: &MetaInput, i: usize) -> Result<Summary> {
    Ok(post.shrinkage_mixture(input, i)?.summary(LEVEL))
}

/// Posterior summary of the heterogeneity `tau`.
pub fn tau_summary(post: &TauGridPosterior) -> Summary {
    let cdf = post.tau_cdf_nodes();
    let q = |p: f64| tau_quantile_with(&post.grid, &post.density, &cdf, p);
    let mean: f64 = post.grid.iter().zip(&post.mass).map(|(t, m)| t * m).sum();
    let second: f64 = post.grid.iter().zip(&post.mass).map(|(t, m)| t * t * m).sum();
    let slack = 1.0 - LEVEL;
    let shortest = mixture::shortest_by_tail_mass(
        slack,
        0.0,
        |p| q(p + LEVEL) - q(p),
        None,
        |p| Interval {
            lower: q(p),
            upper: q(p + LEVEL),
        },
    );
    Summary {
        median: q(0.5),
        mean,
        sd: (second - mean * mean).max(0.0).sqrt(),
        central: Interval {
            lower: q(0.5 * slack),
            upper: q(1.0 - 0.5 * slack),
        },
        shortest,
    }
}

/// Contribution of each study to the overall mean: the tau-averaged share
/// of total precision.
pub fn study_weights(post: &TauGridPosterior, input: &MetaInput) -> Vec<f64> {
    let k = input.k();
    let mut weights = vec![0.0; k];
    for (j, &tau) in post.grid.iter().enumerate() {
        let w: Vec<f64> = (0..k).map(|i| 1.0 / (input.s(i).powi(2) + tau * tau)).collect();
        let total: f64 = w.iter().sum();
        for i in 0..k {
            weights[i] += post.mass[j] * w[i] / total;
        }
    }
    normalize(weights)
}

/// Contribution of each study to the shrinkage estimate of study `target`:
/// the tau-averaged coefficient of `y_l` in the conditional posterior mean
/// of `theta_target`.
pub fn shrinkage_weights(
    post: &TauGridPosterior,
    input: &MetaInput,
    target: usize,
) -> Result<Vec<f64>> {
    check_index(input, target)?;
    let k = input.k();
    let mut weights = vec![0.0; k];
    for (j, &tau) in post.grid.iter().enumerate() {
        let w: Vec<f64> = (0..k).map(|i| 1.0 / (input.s(i).powi(2) + tau * tau)).collect();
        let total: f64 = w.iter().sum();
        let s2 = input.s(target).powi(2);
        let b = s2 / (s2 + tau * tau);
        for l in 0..k {
            let own = if l == target { 1.0 - b } else { 0.0 };
            weights[l] += post.mass[j] * (own + b * w[l] / total);
        }
    }
    Ok(normalize(weights))
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Keeps the studies whose standard error is at most `threshold`.
pub fn sensitivity_filter(input: &MetaInput, threshold: f64) -> Result<MetaInput> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("threshold must be positive, got {threshold}")));
    }
    let kept: Vec<MtdEstimate> = input
        .estimates
        .iter()
        .filter(|e| e.std_err <= threshold)
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptySelection { threshold });
    }
    MetaInput::new(kept)
}

/// Full set of summaries for one meta-analysis.
#[derive(Debug, Clone, Serialize)]
pub struct MetaResult {
    pub study_ids: Vec<String>,
    pub mu: Summary,
    pub tau: Summary,
    pub prediction: Summary,
    pub shrinkage: Vec<Summary>,
    pub weights: Vec<f64>,
    pub warning: Option<String>,
}

pub fn analyze(input: &MetaInput, prior: &PriorSpec) -> Result<MetaResult> {
    let post = posterior(input, prior)?;
    let shrinkage = (0..input.k())
        .map(|i| shrinkage(&post, input, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetaResult {
        study_ids: input.estimates.iter().map(|e| e.study_id.clone()).collect(),
        mu: combined_estimate(&post),
        tau: tau_summary(&post),
        prediction: prediction(&post),
        shrinkage,
        weights: study_weights(&post, input),
        warning: post.warning.clone(),
    })
}
