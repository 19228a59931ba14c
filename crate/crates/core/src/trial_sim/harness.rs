//! Replicated study sets, their two-stage analysis and per-cell summaries.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::designs::{Design, Simulator};
use super::{perturb_scenario, Scenario, ScenarioName, TrialRecord, TARGET};
use crate::dose_response::{fit_logistic, mtd_from_fit, DoseTransform, FitConfig, FitMethod};
use crate::error::{Error, Result};
use crate::meta_analysis::{posterior, MetaInput, NormalMixture, PriorSpec, LEVEL};

/// Settings of one simulation cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub k: usize,
    pub tau: f64,
    pub replications: usize,
    pub master_seed: u64,
    /// Probabilities of 3+3, CRM and BLRM.
    pub design_mix: [f64; 3],
    pub fit: FitConfig,
    pub prior: PriorSpec,
}

impl SimulationConfig {
    pub fn new(k: usize, tau: f64, replications: usize, master_seed: u64) -> Self {
        Self {
            k,
            tau,
            replications,
            master_seed,
            design_mix: [1.0 / 3.0; 3],
            fit: FitConfig::default()
                .with_method(FitMethod::Flac)
                .with_transform(DoseTransform::Identity),
            prior: PriorSpec::uniform(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::Config(format!("tau must be non-negative, got {}", self.tau)));
        }
        let total: f64 = self.design_mix.iter().sum();
        if self.design_mix.iter().any(|&p| !(p >= 0.0)) || !(total > 0.0) {
            return Err(Error::Config("design mix must be non-negative with positive sum".into()));
        }
        self.fit.validate()?;
        self.prior.validate()
    }

    fn cell_index(&self) -> u64 {
        splitmix64(self.k as u64 ^ splitmix64(self.tau.to_bits()))
    }

    fn pick_design<R: Rng + ?Sized>(&self, rng: &mut R) -> Design {
        let total: f64 = self.design_mix.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (i, &p) in self.design_mix.iter().enumerate() {
            acc += p;
            if u < acc {
                return Design::ALL[i];
            }
        }
        Design::ALL[self.design_mix.iter().rposition(|&p| p > 0.0).unwrap()]
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one study: a splitmix64 chain over the master seed, scenario,
/// cell, replication and study index. Stable across platforms and releases.
pub fn sub_seed(master: u64, scenario: u64, cell: u64, replication: u64, study: u64) -> u64 {
    [scenario, cell, replication, study]
        .into_iter()
        .fold(splitmix64(master), |h, v| splitmix64(h ^ splitmix64(v)))
}

/// The `k` trials of one replication.
pub fn run_study_set(
    sim: &SimulationConfig,
    sc: &Scenario,
    simulator: &Simulator,
    replication: usize,
) -> Result<Vec<TrialRecord>> {
    sim.validate()?;
    (0..sim.k)
        .map(|i| {
            let seed = sub_seed(
                sim.master_seed,
                sc.name.index(),
                sim.cell_index(),
                replication as u64,
                i as u64,
            );
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let design = sim.pick_design(&mut rng);
            let (curve, delta) = perturb_scenario(sc, sim.tau, &mut rng)?;
            let mut record = simulator.simulate(design, &curve, &mut rng)?;
            record.dataset.study_id = format!("study{}", i + 1);
            record.dataset.label = record.dataset.study_id.clone();
            record.scenario_name = sc.name;
            record.intercept_offset = delta;
            record.seed = seed;
            Ok(record)
        })
        .collect()
}

/// Intercept shift of the hypothetical next study of a replication.
fn new_study_offset(sim: &SimulationConfig, sc: &Scenario, replication: usize) -> Result<f64> {
    let seed = sub_seed(
        sim.master_seed,
        sc.name.index(),
        sim.cell_index(),
        replication as u64,
        sim.k as u64,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(perturb_scenario(sc, sim.tau, &mut rng)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// Individual study estimates from stage one, summarized within the
    /// replication.
    Estimate,
    Combined,
    Prediction,
    Shrinkage,
}

impl Target {
    pub const ALL: [Target; 4] = [
        Target::Estimate,
        Target::Combined,
        Target::Prediction,
        Target::Shrinkage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::Estimate => "estimate",
            Target::Combined => "combined",
            Target::Prediction => "prediction",
            Target::Shrinkage => "shrinkage",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TargetMetrics {
    pub target: Target,
    /// Estimate minus true MTD, in doses.
    pub error: f64,
    /// True DLT probability at the estimated MTD.
    pub dlt_at_estimate: f64,
    pub ci_width: f64,
    /// Coverage indicator; the covered fraction for [`Target::Estimate`].
    pub covered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub scenario: ScenarioName,
    pub k: usize,
    pub tau: f64,
    pub replication: usize,
    pub design_counts: [u32; 3],
    /// Studies whose stage-one fit failed.
    pub excluded: u32,
    pub metrics: Vec<TargetMetrics>,
}

fn interval_metrics(
    target: Target,
    mix: &NormalMixture,
    truth: f64,
    curve_dlt: impl Fn(f64) -> f64,
) -> TargetMetrics {
    let median = mix.quantile(0.5);
    let ci = mix.central_interval(LEVEL);
    TargetMetrics {
        target,
        error: median - truth,
        dlt_at_estimate: curve_dlt(median),
        ci_width: ci.width(),
        covered: if ci.contains(truth) { 1.0 } else { 0.0 },
    }
}

/// Stage-one fits and stage-two meta-analysis of one replication. Studies
/// whose fit fails, does not converge or is not increasing are excluded and
/// counted; if too few remain for the meta-analysis, only the
/// estimate-level metrics are returned. A plain fit stopped by separation
/// is kept, with the estimate and standard error at the stopping point. A
/// fitted slope that is zero up to rounding (flat observed rates, common in
/// 3+3 data) counts as a failure.
pub fn evaluate_replication(
    records: &[TrialRecord],
    sc: &Scenario,
    cfg: &FitConfig,
    prior: &PriorSpec,
    new_study_offset: f64,
) -> (Vec<TargetMetrics>, u32) {
    let z = normal_quantile();
    let mut estimates = Vec::new();
    let mut truths = Vec::new();
    let mut offsets = Vec::new();
    let mut excluded = 0;
    for rec in records {
        let est = fit_logistic(&rec.dataset, cfg)
            .and_then(|fit| {
                if !fit.converged && !fit.separation_detected {
                    Err(Error::Numerical("fit did not converge".into()))
                } else if fit.beta1 <= FLAT_SLOPE * (1.0 + fit.beta0.abs()) {
                    Err(Error::UndefinedMtd("fitted curve is not increasing".into()))
                } else {
                    mtd_from_fit(&fit, cfg)
                }
            });
        match est {
            Ok(e) if e.estimate.is_finite() && e.std_err.is_finite() && e.std_err > 0.0 => {
                truths.push(rec.true_mtd(sc, TARGET));
                offsets.push(rec.intercept_offset);
                estimates.push(e);
            }
            _ => excluded += 1,
        }
    }

    let mut metrics = Vec::new();
    if estimates.is_empty() {
        return (metrics, excluded);
    }
    let n = estimates.len() as f64;
    let errors: Vec<f64> = estimates.iter().zip(&truths).map(|(e, t)| e.estimate - t).collect();
    let widths: Vec<f64> = estimates.iter().map(|e| 2.0 * z * e.std_err).collect();
    let mut est = TargetMetrics {
        target: Target::Estimate,
        error: errors.iter().sum::<f64>() / n,
        dlt_at_estimate: 0.0,
        ci_width: widths.iter().sum::<f64>() / n,
        covered: 0.0,
    };
    for (i, e) in estimates.iter().enumerate() {
        est.dlt_at_estimate += sc.curve.shifted(offsets[i]).dlt_at(e.estimate) / n;
        if errors[i].abs() <= z * e.std_err {
            est.covered += 1.0 / n;
        }
    }
    metrics.push(est);

    let Ok(input) = MetaInput::new(estimates) else {
        return (metrics, excluded);
    };
    let Ok(post) = posterior(&input, prior) else {
        return (metrics, excluded);
    };
    metrics.push(interval_metrics(
        Target::Combined,
        &post.mu_mixture(),
        sc.true_mtd,
        |x| sc.curve.dlt_at(x),
    ));
    let new_curve = sc.curve.shifted(new_study_offset);
    metrics.push(interval_metrics(
        Target::Prediction,
        &post.prediction_mixture(),
        new_curve.mtd(TARGET),
        |x| new_curve.dlt_at(x),
    ));
    if let Ok(mix) = post.shrinkage_mixture(&input, 0) {
        let curve = sc.curve.shifted(offsets[0]);
        metrics.push(interval_metrics(Target::Shrinkage, &mix, truths[0], |x| {
            curve.dlt_at(x)
        }));
    }
    (metrics, excluded)
}

/// Fitted slopes at or below this (relative to the intercept) count as flat.
const FLAT_SLOPE: f64 = 1e-8;

fn normal_quantile() -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(0.5 + 0.5 * LEVEL)
}

/// Simulates and analyzes one replication.
pub fn run_replication(
    sim: &SimulationConfig,
    sc: &Scenario,
    simulator: &Simulator,
    replication: usize,
) -> Result<ReplicationResult> {
    let records = run_study_set(sim, sc, simulator, replication)?;
    let mut design_counts = [0u32; 3];
    for r in &records {
        design_counts[r.design_used.index()] += 1;
    }
    let offset = new_study_offset(sim, sc, replication)?;
    let (metrics, excluded) = evaluate_replication(&records, sc, &sim.fit, &sim.prior, offset);
    Ok(ReplicationResult {
        scenario: sc.name,
        k: sim.k,
        tau: sim.tau,
        replication,
        design_counts,
        excluded,
        metrics,
    })
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub scenario: ScenarioName,
    pub config: SimulationConfig,
}

/// Runs every replication of every cell. Replications execute in parallel;
/// results come back in cell order, then replication order, independent of
/// the thread count.
pub fn run_grid(cells: &[CellSpec], simulator: &Simulator) -> Result<Vec<ReplicationResult>> {
    for c in cells {
        c.config.validate()?;
    }
    let scenarios: Vec<Scenario> = cells.iter().map(|c| Scenario::new(c.scenario)).collect();
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| (0..c.config.replications).map(move |r| (ci, r)))
        .collect();
    jobs.par_iter()
        .map(|&(ci, r)| run_replication(&cells[ci].config, &scenarios[ci], simulator, r))
        .collect()
}

pub const RESULTS_HEADER: [&str; 13] = [
    "scenario",
    "k",
    "tau",
    "replication",
    "n_3p3",
    "n_crm",
    "n_blrm",
    "excluded",
    "target",
    "error",
    "dlt_at_estimate",
    "ci_width",
    "covered",
];

/// One row per replication and target.
pub fn write_results_csv<W: Write>(results: &[ReplicationResult], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        for m in &r.metrics {
            w.write_record([
                r.scenario.name().to_string(),
                r.k.to_string(),
                r.tau.to_string(),
                r.replication.to_string(),
                r.design_counts[0].to_string(),
                r.design_counts[1].to_string(),
                r.design_counts[2].to_string(),
                r.excluded.to_string(),
                m.target.name().to_string(),
                m.error.to_string(),
                m.dlt_at_estimate.to_string(),
                m.ci_width.to_string(),
                m.covered.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Averages over the replications of one cell and target.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scenario: ScenarioName,
    pub k: usize,
    pub tau: f64,
    pub target: Target,
    pub n: usize,
    pub mean_error: f64,
    pub mean_abs_error: f64,
    pub mean_dlt_at_estimate: f64,
    pub mean_ci_width: f64,
    pub coverage: f64,
}

pub fn summarize_cells(results: &[ReplicationResult]) -> Vec<CellSummary> {
    let mut out: Vec<CellSummary> = Vec::new();
    for r in results {
        for m in &r.metrics {
            let pos = out.iter().position(|c| {
                c.scenario == r.scenario && c.k == r.k && c.tau == r.tau && c.target == m.target
            });
            let c = match pos {
                Some(p) => &mut out[p],
                None => {
                    out.push(CellSummary {
                        scenario: r.scenario,
                        k: r.k,
                        tau: r.tau,
                        target: m.target,
                        n: 0,
                        mean_error: 0.0,
                        mean_abs_error: 0.0,
                        mean_dlt_at_estimate: 0.0,
                        mean_ci_width: 0.0,
                        coverage: 0.0,
                    });
                    out.last_mut().unwrap()
                }
            };
            c.n += 1;
            c.mean_error += m.error;
            c.mean_abs_error += m.error.abs();
            c.mean_dlt_at_estimate += m.dlt_at_estimate;
            c.mean_ci_width += m.ci_width;
            c.coverage += m.covered;
        }
    }
    for c in &mut out {
        let n = c.n as f64;
        c.mean_error /= n;
        c.mean_abs_error /= n;
        c.mean_dlt_at_estimate /= n;
        c.mean_ci_width /= n;
        c.coverage /= n;
    }
    out
}
