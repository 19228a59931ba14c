//! Dose-escalation designs: rule-based 3+3, the one-parameter power-model
//! CRM and a two-parameter Bayesian logistic model with overdose control.

use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

use gauss_quad::legendre::GaussLegendre;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::{logit, DoseCurve, ScenarioName, TrialRecord, SKELETON, TARGET};
use crate::error::{Error, Result};
use crate::study_data::{DoseGroup, DoseToxicityDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Design {
    ThreePlusThree,
    Crm,
    Blrm,
}

impl Design {
    pub const ALL: [Design; 3] = [Design::ThreePlusThree, Design::Crm, Design::Blrm];

    pub fn name(self) -> &'static str {
        match self {
            Design::ThreePlusThree => "3+3",
            Design::Crm => "CRM",
            Design::Blrm => "BLRM",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "3+3" | "3p3" | "threeplusthree" => Ok(Design::ThreePlusThree),
            "crm" => Ok(Design::Crm),
            "blrm" => Ok(Design::Blrm),
            _ => Err(Error::Config(format!("unknown design `{s}`"))),
        }
    }
}

/// Maximum sample size of a model-based trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SampleSize {
    Fixed(u32),
    /// Uniform over the multiples of the cohort size in `[min, max]`.
    UniformCohorts { min: u32, max: u32 },
}

/// What 3+3 does after 0/3 DLTs at the highest dose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopDoseRule {
    Stop,
    Expand,
}

/// Dose covariate of the two-parameter model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BlrmCovariate {
    /// Skeleton logits standardized by the prior means of intercept and
    /// slope, so that the prior median curve sits near the skeleton.
    StandardizedSkeleton,
    /// `ln(j / reference)` for dose index `j`.
    LogIndex { reference: f64 },
}

/// Overdose-control decision rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EwocRule {
    /// Next dose: the one closest to the `alpha` posterior quantile of the
    /// MTD.
    MtdQuantile,
    /// Doses with `P(p_j > target) <= alpha` are admissible; the admissible
    /// dose whose posterior mean toxicity is closest to target is chosen.
    /// The trial stops when no dose is admissible.
    Admissible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub design: Design,
    pub cohort_size: u32,
    pub target: f64,
    pub max_n: SampleSize,
    pub skeleton: Vec<f64>,
    pub ewoc_alpha: f64,
    pub no_skipping: bool,
    /// CRM: no escalation right after a cohort with a DLT.
    pub coherent: bool,
    pub crm_prior_var: f64,
    pub top_dose_rule: TopDoseRule,
    pub blrm_covariate: BlrmCovariate,
    pub ewoc_rule: EwocRule,
    pub blrm_intercept_mean: f64,
    pub blrm_intercept_var: f64,
    pub blrm_log_slope_mean: f64,
    pub blrm_log_slope_var: f64,
}

impl DesignConfig {
    pub fn new(design: Design) -> Self {
        Self {
            design,
            cohort_size: 3,
            target: TARGET,
            max_n: SampleSize::UniformCohorts { min: 15, max: 30 },
            skeleton: SKELETON.to_vec(),
            ewoc_alpha: 0.25,
            no_skipping: true,
            coherent: true,
            crm_prior_var: 1.34,
            top_dose_rule: TopDoseRule::Stop,
            blrm_covariate: BlrmCovariate::StandardizedSkeleton,
            ewoc_rule: EwocRule::MtdQuantile,
            blrm_intercept_mean: logit(0.01),
            blrm_intercept_var: 4.0,
            blrm_log_slope_mean: 0.0,
            blrm_log_slope_var: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.cohort_size == 0 {
            return bad("cohort size must be at least 1".into());
        }
        if !(self.target > 0.0 && self.target < 1.0) {
            return bad(format!("target must lie in (0, 1), got {}", self.target));
        }
        if !(self.ewoc_alpha > 0.0 && self.ewoc_alpha <= 1.0) {
            return bad(format!("ewoc alpha must lie in (0, 1], got {}", self.ewoc_alpha));
        }
        if self.skeleton.len() < 2
            || self.skeleton.iter().any(|&p| !(p > 0.0 && p < 1.0))
            || self.skeleton.windows(2).any(|w| w[1] <= w[0])
        {
            return bad("skeleton must be strictly increasing within (0, 1)".into());
        }
        match self.max_n {
            SampleSize::Fixed(n) if n < self.cohort_size => {
                bad(format!("maximum sample size {n} is below one cohort"))
            }
            SampleSize::UniformCohorts { min, max } if min > max || max < self.cohort_size => {
                bad(format!("invalid sample size range [{min}, {max}]"))
            }
            _ => Ok(()),
        }
    }

    fn draw_max_n<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let c = self.cohort_size;
        match self.max_n {
            SampleSize::Fixed(n) => n,
            SampleSize::UniformCohorts { min, max } => {
                let lo = min.div_ceil(c).max(1);
                let hi = max / c;
                c * rng.random_range(lo..=hi)
            }
        }
    }
}

/// Accumulated patients and DLTs per dose plus the escalation path.
#[derive(Debug, Clone, Default)]
pub(crate) struct TrialData {
    pub n: Vec<u32>,
    pub r: Vec<u32>,
    pub cohorts: Vec<usize>,
    pub max_n: u32,
}

impl TrialData {
    fn new(n_doses: usize) -> Self {
        Self {
            n: vec![0; n_doses],
            r: vec![0; n_doses],
            cohorts: Vec::new(),
            max_n: 0,
        }
    }

    fn treat<R: Rng + ?Sized>(&mut self, curve: &DoseCurve, d: usize, size: u32, rng: &mut R) -> u32 {
        let x = Binomial::new(size as u64, curve.prob(d))
            .expect("probability in [0, 1]")
            .sample(rng) as u32;
        self.n[d] += size;
        self.r[d] += x;
        self.cohorts.push(d);
        x
    }

    fn total(&self) -> u32 {
        self.n.iter().sum()
    }

    pub fn into_dataset(self, study_id: &str) -> DoseToxicityDataset {
        let groups = self
            .n
            .iter()
            .zip(&self.r)
            .enumerate()
            .filter(|(_, (n, _))| **n > 0)
            .map(|(j, (&n, &r))| DoseGroup {
                dose: (j + 1) as f64,
                n_patients: n,
                n_dlt: r,
            })
            .collect();
        DoseToxicityDataset::new(study_id, study_id, None, None, groups)
            .expect("simulated groups are valid")
    }
}

struct CrmModel {
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
    log_skeleton: Vec<f64>,
}

impl CrmModel {
    fn new(cfg: &DesignConfig) -> Self {
        let sd = cfg.crm_prior_var.sqrt();
        let half = 6.0 * sd;
        let rule = GaussLegendre::new(NonZeroUsize::new(201).unwrap());
        let (nodes, log_weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| {
                let b = x * half;
                (b, (w * half).ln() - b * b / (2.0 * cfg.crm_prior_var))
            })
            .unzip();
        Self {
            nodes,
            log_weights,
            log_skeleton: cfg.skeleton.iter().map(|p| p.ln()).collect(),
        }
    }

    fn posterior_mean(&self, data: &TrialData) -> f64 {
        let ll: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.log_weights)
            .map(|(&b, &lw)| {
                let e = b.exp();
                let mut l = lw;
                for j in 0..data.n.len() {
                    if data.n[j] == 0 {
                        continue;
                    }
                    let lp = e * self.log_skeleton[j];
                    l += data.r[j] as f64 * lp + (data.n[j] - data.r[j]) as f64 * (-lp.exp_m1()).ln();
                }
                l
            })
            .collect();
        let top = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (b, l) in self.nodes.iter().zip(&ll) {
            let w = (l - top).exp();
            num += w * b;
            den += w;
        }
        num / den
    }
}

struct BlrmModel {
    z: Vec<f64>,
    log_prior: Vec<f64>,
    /// `ln p` and `ln(1 - p)` per dose, each over the whole grid.
    log_p: Vec<Vec<f64>>,
    log_q: Vec<Vec<f64>>,
    /// MTD on the covariate scale for each grid point, with grid points
    /// ordered by it.
    mtd_sorted: Vec<f64>,
    order: Vec<usize>,
}

const BLRM_GRID: usize = 121;

impl BlrmModel {
    fn new(cfg: &DesignConfig) -> Self {
        let k = cfg.skeleton.len();
        let z: Vec<f64> = match cfg.blrm_covariate {
            BlrmCovariate::StandardizedSkeleton => {
                let a0 = cfg.blrm_intercept_mean + 0.5 * cfg.blrm_intercept_var;
                let b0 = (cfg.blrm_log_slope_mean + 0.5 * cfg.blrm_log_slope_var).exp();
                cfg.skeleton.iter().map(|&p| (logit(p) - a0) / b0).collect()
            }
            BlrmCovariate::LogIndex { reference } => {
                (1..=k).map(|j| (j as f64 / reference).ln()).collect()
            }
        };
        let (sa, sb) = (cfg.blrm_intercept_var.sqrt(), cfg.blrm_log_slope_var.sqrt());
        let axis = |mean: f64, sd: f64| -> Vec<f64> {
            (0..BLRM_GRID)
                .map(|i| mean - 5.0 * sd + 10.0 * sd * i as f64 / (BLRM_GRID - 1) as f64)
                .collect()
        };
        let a_axis = axis(cfg.blrm_intercept_mean, sa);
        let lb_axis = axis(cfg.blrm_log_slope_mean, sb);
        let t = logit(cfg.target);
        let mut log_prior = Vec::with_capacity(BLRM_GRID * BLRM_GRID);
        let mut log_p = vec![Vec::with_capacity(BLRM_GRID * BLRM_GRID); k];
        let mut log_q = vec![Vec::with_capacity(BLRM_GRID * BLRM_GRID); k];
        let mut mtd = Vec::with_capacity(BLRM_GRID * BLRM_GRID);
        for &a in &a_axis {
            for &lb in &lb_axis {
                let b = lb.exp();
                log_prior.push(
                    -0.5 * (a - cfg.blrm_intercept_mean).powi(2) / cfg.blrm_intercept_var
                        - 0.5 * (lb - cfg.blrm_log_slope_mean).powi(2) / cfg.blrm_log_slope_var,
                );
                for (j, &zj) in z.iter().enumerate() {
                    let eta = a + b * zj;
                    log_p[j].push(log_sigmoid(eta));
                    log_q[j].push(log_sigmoid(-eta));
                }
                mtd.push((t - a) / b);
            }
        }
        let mut order: Vec<usize> = (0..mtd.len()).collect();
        order.sort_by(|&i, &j| mtd[i].total_cmp(&mtd[j]));
        let mtd_sorted = order.iter().map(|&i| mtd[i]).collect();
        Self {
            z,
            log_prior,
            log_p,
            log_q,
            mtd_sorted,
            order,
        }
    }

    /// Adds one cohort's likelihood to the running log posterior.
    fn update(&self, log_post: &mut [f64], dose: usize, size: u32, events: u32) {
        let (x, y) = (events as f64, (size - events) as f64);
        let (lp, lq) = (&self.log_p[dose], &self.log_q[dose]);
        for g in 0..log_post.len() {
            log_post[g] += x * lp[g] + y * lq[g];
        }
    }

    fn weights(log_post: &[f64]) -> Vec<f64> {
        let top = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = log_post.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        w
    }

    fn mtd_quantile(&self, w: &[f64], alpha: f64) -> f64 {
        let mut acc = 0.0;
        for (pos, &g) in self.order.iter().enumerate() {
            acc += w[g];
            if acc >= alpha {
                return self.mtd_sorted[pos];
            }
        }
        *self.mtd_sorted.last().unwrap()
    }
}

fn log_sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        -(-eta).exp().ln_1p()
    } else {
        eta - eta.exp().ln_1p()
    }
}

/// Prepared designs: quadrature rules and grids are built once and reused
/// for every simulated trial.
pub struct Simulator {
    configs: Vec<DesignConfig>,
    crm: Option<CrmModel>,
    blrm: Option<BlrmModel>,
}

impl Simulator {
    pub fn new(configs: Vec<DesignConfig>) -> Result<Self> {
        for c in &configs {
            c.validate()?;
        }
        let crm = configs.iter().find(|c| c.design == Design::Crm).map(CrmModel::new);
        let blrm = configs.iter().find(|c| c.design == Design::Blrm).map(BlrmModel::new);
        Ok(Self { configs, crm, blrm })
    }

    /// Default configurations of all three designs.
    pub fn standard() -> Self {
        Self::new(Design::ALL.into_iter().map(DesignConfig::new).collect())
            .expect("default configurations are valid")
    }

    pub fn config(&self, design: Design) -> Option<&DesignConfig> {
        self.configs.iter().find(|c| c.design == design)
    }

    pub(crate) fn run<R: Rng + ?Sized>(
        &self,
        design: Design,
        curve: &DoseCurve,
        rng: &mut R,
    ) -> Result<TrialData> {
        let cfg = self
            .config(design)
            .ok_or_else(|| Error::Config(format!("design {design} not configured")))?;
        if curve.n_doses() != cfg.skeleton.len() {
            return Err(Error::Config(format!(
                "curve has {} doses but the skeleton has {}",
                curve.n_doses(),
                cfg.skeleton.len()
            )));
        }
        Ok(match design {
            Design::ThreePlusThree => run_3p3(curve, cfg, rng),
            Design::Crm => run_crm(curve, cfg, self.crm.as_ref().unwrap(), rng),
            Design::Blrm => run_blrm(curve, cfg, self.blrm.as_ref().unwrap(), rng),
        })
    }

    /// Simulates one trial and packages it as a record.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        design: Design,
        curve: &DoseCurve,
        rng: &mut R,
    ) -> Result<TrialRecord> {
        let data = self.run(design, curve, rng)?;
        Ok(TrialRecord {
            cohort_doses: data.cohorts.clone(),
            max_n: data.max_n,
            dataset: data.into_dataset("trial"),
            design_used: design,
            scenario_name: ScenarioName::Moderate,
            intercept_offset: 0.0,
            seed: 0,
        })
    }
}

fn run_3p3<R: Rng + ?Sized>(curve: &DoseCurve, cfg: &DesignConfig, rng: &mut R) -> TrialData {
    let c = cfg.cohort_size;
    let top = curve.n_doses() - 1;
    let mut data = TrialData::new(curve.n_doses());
    data.max_n = 2 * c * curve.n_doses() as u32;
    let mut d = 0;
    loop {
        let x = data.treat(curve, d, c, rng);
        match x {
            0 => {
                if d == top {
                    if cfg.top_dose_rule == TopDoseRule::Expand {
                        data.treat(curve, d, c, rng);
                    }
                    break;
                }
                d += 1;
            }
            1 => {
                let y = data.treat(curve, d, c, rng);
                if y > 0 || d == top {
                    break;
                }
                d += 1;
            }
            _ => break,
        }
    }
    data
}

fn closest_to(values: impl Iterator<Item = f64>, target: f64) -> usize {
    values
        .enumerate()
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .map(|(j, _)| j)
        .unwrap()
}

fn run_crm<R: Rng + ?Sized>(
    curve: &DoseCurve,
    cfg: &DesignConfig,
    model: &CrmModel,
    rng: &mut R,
) -> TrialData {
    let mut data = TrialData::new(curve.n_doses());
    data.max_n = cfg.draw_max_n(rng);
    let mut d = 0;
    while data.total() + cfg.cohort_size <= data.max_n {
        let x = data.treat(curve, d, cfg.cohort_size, rng);
        let beta = model.posterior_mean(&data);
        let mut next = closest_to(
            cfg.skeleton.iter().map(|p| p.powf(beta.exp())),
            cfg.target,
        );
        if cfg.no_skipping {
            next = next.min(d + 1);
        }
        if cfg.coherent && x > 0 {
            next = next.min(d);
        }
        d = next;
    }
    data
}

fn run_blrm<R: Rng + ?Sized>(
    curve: &DoseCurve,
    cfg: &DesignConfig,
    model: &BlrmModel,
    rng: &mut R,
) -> TrialData {
    let k = curve.n_doses();
    let mut data = TrialData::new(k);
    data.max_n = cfg.draw_max_n(rng);
    let mut log_post = model.log_prior.clone();
    let mut d = 0;
    while data.total() + cfg.cohort_size <= data.max_n {
        let x = data.treat(curve, d, cfg.cohort_size, rng);
        model.update(&mut log_post, d, cfg.cohort_size, x);
        let w = BlrmModel::weights(&log_post);
        let cap = if cfg.no_skipping { (d + 1).min(k - 1) } else { k - 1 };
        match cfg.ewoc_rule {
            EwocRule::MtdQuantile => {
                let q = model.mtd_quantile(&w, cfg.ewoc_alpha);
                d = closest_to(model.z.iter().copied(), q).min(cap);
            }
            EwocRule::Admissible => {
                let t = cfg.target;
                let mut best: Option<(usize, f64)> = None;
                for j in 0..=cap {
                    let (mut over, mut mean) = (0.0, 0.0);
                    for (g, &wg) in w.iter().enumerate() {
                        let p = model.log_p[j][g].exp();
                        mean += wg * p;
                        if p > t {
                            over += wg;
                        }
                    }
                    if over <= cfg.ewoc_alpha {
                        let dist = (mean - t).abs();
                        if best.is_none_or(|(_, bd)| dist < bd) {
                            best = Some((j, dist));
                        }
                    }
                }
                match best {
                    Some((j, _)) => d = j,
                    None => break,
                }
            }
        }
    }
    data
}

fn single<R: Rng + ?Sized>(
    design: Design,
    curve: &DoseCurve,
    cfg: &DesignConfig,
    rng: &mut R,
) -> Result<TrialRecord> {
    if cfg.design != design {
        return Err(Error::Config(format!(
            "configuration is for {}, not {design}",
            cfg.design
        )));
    }
    Simulator::new(vec![cfg.clone()])?.simulate(design, curve, rng)
}

/// One 3+3 trial on `curve`.
pub fn simulate_3p3<R: Rng + ?Sized>(
    curve: &DoseCurve,
    cfg: &DesignConfig,
    rng: &mut R,
) -> Result<TrialRecord> {
    single(Design::ThreePlusThree, curve, cfg, rng)
}

/// One CRM trial on `curve`.
pub fn simulate_crm<R: Rng + ?Sized>(
    curve: &DoseCurve,
    cfg: &DesignConfig,
    rng: &mut R,
) -> Result<TrialRecord> {
    single(Design::Crm, curve, cfg, rng)
}

/// One BLRM trial on `curve`.
pub fn simulate_blrm<R: Rng + ?Sized>(
    curve: &DoseCurve,
    cfg: &DesignConfig,
    rng: &mut R,
) -> Result<TrialRecord> {
    single(Design::Blrm, curve, cfg, rng)
}
