//! Stage one: logistic dose-toxicity fits and MTD estimates.
//!
//! The model is `logit(p) = beta0 + beta1 * x` where `x` is the (optionally
//! log-transformed) dose. Three estimators are available:
//!
//! * [`FitMethod::PlainMl`]: binomial maximum likelihood. Separated data make
//!   this diverge; the last iterate is returned with `converged = false`.
//! * [`FitMethod::Firth`]: Jeffreys-penalized likelihood, solved through the
//!   hat-diagonal modified score. Always finite.
//! * [`FitMethod::Flac`]: a Firth fit, followed by a plain fit on the data
//!   augmented with hat-weighted pseudo-observations flagged by an extra
//!   indicator covariate.
//!
//! All fits are pure functions of the dataset and configuration.

mod newton;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::study_data::DoseToxicityDataset;
use newton::{NewtonOptions, NewtonOutput, Row};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FitMethod {
    PlainMl,
    Firth,
    Flac,
}

impl FitMethod {
    pub const ALL: [FitMethod; 3] = [FitMethod::PlainMl, FitMethod::Firth, FitMethod::Flac];

    pub fn name(self) -> &'static str {
        match self {
            FitMethod::PlainMl => "plain",
            FitMethod::Firth => "firth",
            FitMethod::Flac => "flac",
        }
    }
}

impl std::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "ml" | "plainml" => Ok(FitMethod::PlainMl),
            "firth" => Ok(FitMethod::Firth),
            "flac" => Ok(FitMethod::Flac),
            other => Err(Error::Config(format!("unknown fit method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DoseTransform {
    Identity,
    /// Natural logarithm.
    Log,
}

impl DoseTransform {
    pub fn apply(self, dose: f64) -> f64 {
        match self {
            DoseTransform::Identity => dose,
            DoseTransform::Log => dose.ln(),
        }
    }

    /// Maps a value on the transformed scale back to the dose scale.
    pub fn invert(self, x: f64) -> f64 {
        match self {
            DoseTransform::Identity => x,
            DoseTransform::Log => x.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: FitMethod,
    pub dose_transform: DoseTransform,
    /// Target DLT probability defining the MTD.
    pub target_toxicity: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: FitMethod::Flac,
            dose_transform: DoseTransform::Log,
            target_toxicity: 0.33,
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

impl FitConfig {
    pub fn with_method(mut self, method: FitMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_transform(mut self, transform: DoseTransform) -> Self {
        self.dose_transform = transform;
        self
    }

    pub fn with_target(mut self, target: f64) -> Self {
        self.target_toxicity = target;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_toxicity > 0.0 && self.target_toxicity < 1.0) {
            return Err(Error::Config(format!(
                "target toxicity must lie in (0, 1), got {}",
                self.target_toxicity
            )));
        }
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::Config(
                "tolerance and max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Fitted logistic coefficients with their covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub study_id: String,
    pub beta0: f64,
    pub beta1: f64,
    /// Row-major 2x2 covariance of `(beta0, beta1)`.
    pub covariance: [[f64; 2]; 2],
    pub converged: bool,
    pub separation_detected: bool,
    pub method: FitMethod,
    pub iterations: usize,
}

impl FitResult {
    /// Builds a fit from known coefficients, mostly useful for evaluating
    /// given curves.
    pub fn from_coefficients(beta0: f64, beta1: f64, covariance: [[f64; 2]; 2]) -> Self {
        Self {
            study_id: String::new(),
            beta0,
            beta1,
            covariance,
            converged: true,
            separation_detected: false,
            method: FitMethod::PlainMl,
            iterations: 0,
        }
    }
}

/// Why an MTD estimate should be read with care.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MtdWarning {
    /// The underlying fit did not converge (typically separation in plain ML).
    FitNotConverged,
    /// The delta-method variance is not finite.
    NonFiniteStdErr,
}

/// MTD on the transformed dose scale, with its delta-method standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtdEstimate {
    pub study_id: String,
    pub estimate: f64,
    pub std_err: f64,
    pub warning: Option<MtdWarning>,
}

/// A dose level with real-valued patient and event counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinomialPoint {
    /// Covariate on the scale the model is fitted on.
    pub x: f64,
    pub trials: f64,
    pub events: f64,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn starting_values(points: &[BinomialPoint], extra: usize) -> DVector<f64> {
    let events: f64 = points.iter().map(|p| p.events).sum();
    let trials: f64 = points.iter().map(|p| p.trials).sum();
    let rate = (events / trials).clamp(0.01, 0.99);
    let mut start = vec![logit(rate), 0.0];
    start.extend(std::iter::repeat(0.0).take(extra));
    DVector::from_vec(start)
}

/// Weighted least squares on continuity-corrected empirical logits.
fn empirical_logit_start(points: &[BinomialPoint]) -> Option<DVector<f64>> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points.iter().filter(|p| p.trials > 0.0) {
        let q = (p.events + 0.5) / (p.trials + 1.0);
        let w = (p.trials + 1.0) * q * (1.0 - q);
        let y = logit(q);
        sw += w;
        sx += w * p.x;
        sy += w * y;
        sxx += w * p.x * p.x;
        sxy += w * p.x * y;
    }
    let det = sw * sxx - sx * sx;
    if !(det.abs() > 1e-12 * sw * sxx.abs()) {
        return None;
    }
    let b1 = (sw * sxy - sx * sy) / det;
    let b0 = (sy - b1 * sx) / sw;
    (b0.is_finite() && b1.is_finite()).then(|| DVector::from_vec(vec![b0, b1]))
}

/// The penalized likelihood need not be unimodal, so try two starts and
/// keep the better converged optimum.
fn firth_fit(rows: &[Row], points: &[BinomialPoint], opts: NewtonOptions) -> NewtonOutput {
    let first = newton::fit(rows, starting_values(points, 0), opts);
    let Some(start) = empirical_logit_start(points) else {
        return first;
    };
    let second = newton::fit(rows, start, opts);
    let better = match (first.converged, second.converged) {
        (true, false) => false,
        (false, true) => true,
        _ => second.objective > first.objective,
    };
    if better { second } else { first }
}

/// Fits the logistic model to already-transformed covariates.
pub fn fit_points(points: &[BinomialPoint], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let mut distinct: Vec<f64> = points.iter().filter(|p| p.trials > 0.0).map(|p| p.x).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InsufficientDoses {
            study_id: String::new(),
            distinct: distinct.len(),
        });
    }
    let total: f64 = points.iter().map(|p| p.trials).sum();
    if total < 2.0 {
        return Err(Error::Validation(format!(
            "at least 2 patients are required, got {total}"
        )));
    }

    let rows: Vec<Row> = points
        .iter()
        .map(|p| Row {
            covariates: vec![1.0, p.x],
            events: p.events,
            trials: p.trials,
        })
        .collect();
    let opts = |firth: bool, detect_stall: bool| NewtonOptions {
        firth,
        detect_stall,
        tolerance: cfg.tolerance,
        max_iterations: cfg.max_iterations,
    };

    let (beta, cov, converged, separation, iterations) = match cfg.method {
        FitMethod::PlainMl => {
            let out = newton::fit(&rows, starting_values(points, 0), opts(false, true));
            let sep = out.diverged || !out.converged;
            (out.beta, out.covariance, out.converged, sep, out.iterations)
        }
        FitMethod::Firth => {
            let out = firth_fit(&rows, points, opts(true, false));
            (out.beta, out.covariance, out.converged, false, out.iterations)
        }
        FitMethod::Flac => {
            let firth = firth_fit(&rows, points, opts(true, false));
            // Each patient of group j contributes two pseudo-patients of
            // weight h_j / (2 n_j), one with its observed outcome and one
            // flipped. Summed over the group: h_j pseudo-trials with
            // h_j / 2 pseudo-events, all with indicator 1.
            let mut augmented: Vec<Row> = rows
                .iter()
                .map(|r| Row {
                    covariates: vec![1.0, r.covariates[1], 0.0],
                    events: r.events,
                    trials: r.trials,
                })
                .collect();
            augmented.extend(rows.iter().zip(&firth.hat).filter(|(_, h)| **h > 0.0).map(
                |(r, &h)| Row {
                    covariates: vec![1.0, r.covariates[1], 1.0],
                    events: 0.5 * h,
                    trials: h,
                },
            ));
            let start =
                DVector::from_vec(vec![firth.beta[0], firth.beta[1], 0.0]);
            let out = newton::fit(&augmented, start, opts(false, false));
            (
                out.beta.rows(0, 2).into_owned(),
                out.covariance.view((0, 0), (2, 2)).into_owned(),
                out.converged && firth.converged,
                false,
                firth.iterations + out.iterations,
            )
        }
    };

    Ok(FitResult {
        study_id: String::new(),
        beta0: beta[0],
        beta1: beta[1],
        covariance: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        converged,
        separation_detected: separation,
        method: cfg.method,
        iterations,
    })
}

/// Fits the logistic dose-toxicity model to one study.
pub fn fit_logistic(ds: &DoseToxicityDataset, cfg: &FitConfig) -> Result<FitResult> {
    let points: Vec<BinomialPoint> = ds
        .groups()
        .iter()
        .map(|g| BinomialPoint {
            x: cfg.dose_transform.apply(g.dose),
            trials: g.n_patients as f64,
            events: g.n_dlt as f64,
        })
        .collect();
    let mut fit = fit_points(&points, cfg).map_err(|e| match e {
        Error::InsufficientDoses { distinct, .. } => Error::InsufficientDoses {
            study_id: ds.study_id.clone(),
            distinct,
        },
        other => other,
    })?;
    fit.study_id = ds.study_id.clone();
    Ok(fit)
}

/// MTD `(logit(target) - beta0) / beta1` with delta-method standard error.
pub fn mtd_from_fit(fit: &FitResult, cfg: &FitConfig) -> Result<MtdEstimate> {
    cfg.validate()?;
    if fit.beta1 == 0.0 || !fit.beta1.is_finite() || !fit.beta0.is_finite() {
        return Err(Error::UndefinedMtd(format!(
            "slope {} does not define an MTD for study `{}`",
            fit.beta1, fit.study_id
        )));
    }
    let estimate = (logit(cfg.target_toxicity) - fit.beta0) / fit.beta1;
    let g = [-1.0 / fit.beta1, -estimate / fit.beta1];
    let s = &fit.covariance;
    let var = g[0] * g[0] * s[0][0] + 2.0 * g[0] * g[1] * s[0][1] + g[1] * g[1] * s[1][1];
    let std_err = if var.is_nan() { f64::NAN } else { var.max(0.0).sqrt() };

    let warning = if !std_err.is_finite() {
        log::warn!(
            "non-finite MTD standard error for study `{}`",
            fit.study_id
        );
        Some(MtdWarning::NonFiniteStdErr)
    } else if !fit.converged {
        Some(MtdWarning::FitNotConverged)
    } else {
        None
    };

    Ok(MtdEstimate {
        study_id: fit.study_id.clone(),
        estimate,
        std_err,
        warning,
    })
}

/// Fitted DLT probability at transformed dose `x`.
pub fn dlt_probability(fit: &FitResult, x: f64) -> f64 {
    inv_logit(fit.beta0 + fit.beta1 * x)
}

/// Emax parameters `(E50, hill exponent)` of a log-dose fit with `Emax = 1`.
pub fn emax_convert(fit: &FitResult) -> Result<(f64, f64)> {
    let n = fit.beta1;
    if n == 0.0 || !n.is_finite() {
        return Err(Error::UndefinedMtd(
            "Emax parametrization requires a non-zero slope".into(),
        ));
    }
    Ok(((-fit.beta0 / n).exp(), n))
}

/// Intercept of the log-dose logistic model equivalent to an Emax curve.
pub fn intercept_from_emax(e50: f64, hill: f64) -> f64 {
    -hill * e50.ln()
}

#[cfg(test)]
mod tests;
