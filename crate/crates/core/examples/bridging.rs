//! Bridging from Western to Japanese patients: each population is
//! meta-analyzed on its own, then the two summaries are combined under a
//! half-normal heterogeneity prior to shrink the sparse Japanese estimate.

use dosemeta::fixtures::SORAFENIB_CSV;
use dosemeta::meta_analysis::bridge;
use dosemeta::report::{bridge_groups, BridgeOptions};
use dosemeta::study_data::parse_csv;

fn main() -> dosemeta::Result<()> {
    let datasets = parse_csv(SORAFENIB_CSV.as_bytes())?;
    let opts = BridgeOptions::default();
    let groups = bridge_groups(&datasets, &opts)?;
    let res = bridge(&groups, &opts.second_stage_prior, &opts.target_group)?;

    println!("{:<22} {:>3} {:>6} {:>6} {:>22}", "estimate", "k", "mean", "sd", "median [95% CI] mg");
    for s in &res.stage_one {
        let e = s.mu.exp();
        println!(
            "{:<22} {:>3} {:>6.2} {:>6.2} {:>7.0} [{:.0}, {:.0}]",
            s.label, s.k, s.mu.mean, s.mu.sd, e.median, e.central.lower, e.central.upper
        );
    }
    let e = res.shrinkage.exp();
    println!(
        "{:<22} {:>3} {:>6.2} {:>6.2} {:>7.0} [{:.0}, {:.0}]",
        format!("{} (shrinkage)", res.target),
        "",
        res.shrinkage.mean,
        res.shrinkage.sd,
        e.median,
        e.central.lower,
        e.central.upper
    );
    println!("\nweight of the Japanese data in its shrinkage estimate: {:.1}%", 100.0 * res.target_weight);
    Ok(())
}
