//! Two-level meta-analysis: each population is summarized first, and the
//! population summaries are then combined to shrink one of them.

use serde::Serialize;

use super::{
    combined_estimate, posterior, shrinkage, shrinkage_weights, study_weights, MetaInput,
    PriorSpec, Summary,
};
use crate::dose_response::MtdEstimate;
use crate::error::{Error, Result};

/// One population and the prior used for its own meta-analysis.
#[derive(Debug, Clone)]
pub struct BridgeGroup {
    pub label: String,
    pub input: MetaInput,
    pub prior: PriorSpec,
}

impl BridgeGroup {
    pub fn new(label: impl Into<String>, input: MetaInput, prior: PriorSpec) -> Self {
        Self {
            label: label.into(),
            input,
            prior,
        }
    }
}

/// First-stage summary of one population.
#[derive(Debug, Clone, Serialize)]
pub struct StageOneEstimate {
    pub label: String,
    pub k: usize,
    pub mu: Summary,
}

#[derive(Debug, Clone, Serialize)]
pub struct BridgeResult {
    pub stage_one: Vec<StageOneEstimate>,
    pub target: String,
    /// Second-stage shrinkage summary of the target population.
    pub shrinkage: Summary,
    /// Share of the target's own first-stage estimate in its shrinkage
    /// estimate.
    pub target_weight: f64,
    /// Shares of each population in the second-stage overall mean.
    pub overall_weights: Vec<f64>,
}

pub fn bridge(
    groups: &[BridgeGroup],
    second_stage_prior: &PriorSpec,
    target: &str,
) -> Result<BridgeResult> {
    if groups.len() < 2 {
        return Err(Error::Config(format!(
            "bridging needs at least two groups, got {}",
            groups.len()
        )));
    }
    let t = groups
        .iter()
        .position(|g| g.label == target)
        .ok_or_else(|| Error::UnknownGroup(target.to_string()))?;

    let mut stage_one = Vec::with_capacity(groups.len());
    for g in groups {
        let post = posterior(&g.input, &g.prior)?;
        stage_one.push(StageOneEstimate {
            label: g.label.clone(),
            k: g.input.k(),
            mu: combined_estimate(&post),
        });
    }

    let pseudo = MetaInput::new(
        stage_one
            .iter()
            .map(|s| MtdEstimate {
                study_id: s.label.clone(),
                estimate: s.mu.mean,
                std_err: s.mu.sd,
                warning: None,
            })
            .collect(),
    )?;
    let post = posterior(&pseudo, second_stage_prior)?;
    let target_weight = shrinkage_weights(&post, &pseudo, t)?[t];

    Ok(BridgeResult {
        shrinkage: shrinkage(&post, &pseudo, t)?,
        overall_weights: study_weights(&post, &pseudo),
        target: target.to_string(),
        target_weight,
        stage_one,
    })
}
