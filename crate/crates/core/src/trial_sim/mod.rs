//! Synthetic phase I studies and the Monte-Carlo evaluation of the two-stage
//! estimation pipeline.
//!
//! Doses are indexed `1..=6`; every curve is kept on the logit scale. A
//! study draws an intercept shift `delta`, which moves the study's MTD by
//! `-delta / slope_at_mtd` doses, so `tau` is the between-study standard
//! deviation of the MTD in dose units.

mod designs;
mod harness;
#[cfg(test)]
mod tests;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::study_data::DoseToxicityDataset;

pub use designs::{
    simulate_3p3, simulate_blrm, simulate_crm, BlrmCovariate, Design, DesignConfig, EwocRule,
    SampleSize, Simulator, TopDoseRule,
};
pub use harness::{
    evaluate_replication, run_grid, run_replication, run_study_set, sub_seed, summarize_cells,
    write_results_csv, CellSpec, CellSummary, ReplicationResult, SimulationConfig, Target,
    TargetMetrics, RESULTS_HEADER,
};

/// Default target toxicity.
pub const TARGET: f64 = 0.33;
/// Prior guess of the dose-toxicity curve used by model-based designs.
pub const SKELETON: [f64; 6] = [0.02, 0.05, 0.10, 0.20, 0.40, 0.80];

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub(crate) fn inv_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Dose-toxicity curve over dose indices `1..=n`, stored as logits.
#[derive(Debug, Clone, PartialEq)]
pub struct DoseCurve {
    logits: Vec<f64>,
}

impl DoseCurve {
    pub fn from_probs(probs: &[f64]) -> Self {
        Self {
            logits: probs.iter().map(|&p| logit(p)).collect(),
        }
    }

    pub fn from_logits(logits: Vec<f64>) -> Self {
        Self { logits }
    }

    pub fn n_doses(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    /// DLT probability at zero-based dose index `j`.
    pub fn prob(&self, j: usize) -> f64 {
        inv_logit(self.logits[j])
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logits.iter().map(|&l| inv_logit(l)).collect()
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            logits: self.logits.iter().map(|l| l + delta).collect(),
        }
    }

    /// Logit at a (one-based, continuous) dose position: piecewise linear
    /// between panel doses, extended linearly beyond both ends.
    pub fn logit_at(&self, x: f64) -> f64 {
        let n = self.logits.len();
        let seg = ((x.floor() as isize - 1).clamp(0, n as isize - 2)) as usize;
        let (l0, l1) = (self.logits[seg], self.logits[seg + 1]);
        l0 + (l1 - l0) * (x - (seg + 1) as f64)
    }

    /// DLT probability at a continuous dose position.
    pub fn dlt_at(&self, x: f64) -> f64 {
        inv_logit(self.logit_at(x))
    }

    /// Dose position where the interpolated curve crosses `target`.
    pub fn mtd(&self, target: f64) -> f64 {
        let t = logit(target);
        let n = self.logits.len();
        let seg = (0..n - 1)
            .find(|&j| self.logits[j + 1] >= t)
            .unwrap_or(n - 2);
        let (l0, l1) = (self.logits[seg], self.logits[seg + 1]);
        (seg + 1) as f64 + (t - l0) / (l1 - l0)
    }

    /// Logit slope of the segment containing the MTD.
    pub fn slope_at(&self, target: f64) -> f64 {
        let x = self.mtd(target);
        let n = self.logits.len();
        let seg = ((x.floor() as isize - 1).clamp(0, n as isize - 2)) as usize;
        self.logits[seg + 1] - self.logits[seg]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Moderate,
    Steep,
    Gentle,
    Convex,
    Concave,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 5] = [
        ScenarioName::Moderate,
        ScenarioName::Steep,
        ScenarioName::Gentle,
        ScenarioName::Convex,
        ScenarioName::Concave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioName::Moderate => "moderate",
            ScenarioName::Steep => "steep",
            ScenarioName::Gentle => "gentle",
            ScenarioName::Convex => "convex",
            ScenarioName::Concave => "concave",
        }
    }

    pub(crate) fn index(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

/// One of the five reference dose-toxicity scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: ScenarioName,
    pub curve: DoseCurve,
    pub skeleton: Vec<f64>,
    pub true_mtd: f64,
    /// Logit slope per dose at the MTD.
    pub slope_at_mtd: f64,
}

impl Scenario {
    pub fn new(name: ScenarioName) -> Self {
        let linear = |a: f64, b: f64| DoseCurve::from_logits((1..=6).map(|j| a + b * j as f64).collect());
        let curve = match name {
            ScenarioName::Moderate => linear(-5.0, 1.0),
            ScenarioName::Steep => linear(-10.0, 2.0),
            ScenarioName::Gentle => linear(-3.5, 0.5),
            ScenarioName::Convex => {
                DoseCurve::from_probs(&[0.018, 0.023, 0.047, 0.148, 0.5, 0.905])
            }
            ScenarioName::Concave => {
                DoseCurve::from_probs(&[0.018, 0.119, 0.237, 0.369, 0.5, 0.616])
            }
        };
        Self {
            name,
            true_mtd: curve.mtd(TARGET),
            slope_at_mtd: curve.slope_at(TARGET),
            curve,
            skeleton: SKELETON.to_vec(),
        }
    }

    pub fn all() -> Vec<Scenario> {
        ScenarioName::ALL.into_iter().map(Scenario::new).collect()
    }
}

/// Draws a study-specific curve: the intercept shift `delta` has standard
/// deviation `tau * slope_at_mtd`. Returns the shifted curve and `delta`.
pub fn perturb_scenario<R: Rng + ?Sized>(
    sc: &Scenario,
    tau: f64,
    rng: &mut R,
) -> Result<(DoseCurve, f64)> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::Config(format!("tau must be non-negative, got {tau}")));
    }
    if tau == 0.0 {
        return Ok((sc.curve.clone(), 0.0));
    }
    let normal = Normal::new(0.0, tau * sc.slope_at_mtd)
        .map_err(|e| Error::Config(e.to_string()))?;
    let delta = normal.sample(rng);
    Ok((sc.curve.shifted(delta), delta))
}

/// Data generated by one simulated trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Dose groups with doses given as indices `1..=6`.
    pub dataset: DoseToxicityDataset,
    pub design_used: Design,
    pub scenario_name: ScenarioName,
    pub intercept_offset: f64,
    pub seed: u64,
    /// Zero-based dose index assigned to each cohort, in order.
    pub cohort_doses: Vec<usize>,
    pub max_n: u32,
}

impl TrialRecord {
    /// The study's realized MTD on its own perturbed curve.
    pub fn true_mtd(&self, sc: &Scenario, target: f64) -> f64 {
        sc.curve.shifted(self.intercept_offset).mtd(target)
    }
}
