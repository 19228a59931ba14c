//! Random-effects meta-analysis of the irinotecan / S-1 combination studies:
//! combined MTD, heterogeneity, prediction for a new study and shrinkage
//! estimates, on the log-dose scale and back-transformed to mg/m2.

use dosemeta::fixtures::IRINOTECAN_CSV;
use dosemeta::meta_analysis::Summary;
use dosemeta::report::{meta_from_datasets, MetaOptions};
use dosemeta::study_data::parse_csv;

fn show(name: &str, s: &Summary) {
    let e = s.exp();
    println!(
        "{name:<18} {:6.3} [{:6.3}, {:6.3}]   {:7.1} mg/m2 [{:7.1}, {:7.1}]",
        s.median, s.central.lower, s.central.upper, e.median, e.central.lower, e.central.upper
    );
}

fn main() -> dosemeta::Result<()> {
    let datasets = parse_csv(IRINOTECAN_CSV.as_bytes())?;
    let (input, res) = meta_from_datasets(&datasets, &MetaOptions::default())?;

    println!("{} studies, uniform priors\n", input.k());
    show("combined", &res.mu);
    show("prediction", &res.prediction);
    println!(
        "{:<18} {:6.3} [{:6.3}, {:6.3}] (shortest interval)\n",
        "tau", res.tau.median, res.tau.shortest.lower, res.tau.shortest.upper
    );
    for (i, id) in res.study_ids.iter().enumerate() {
        print!("{:>5.1}%  ", 100.0 * res.weights[i]);
        show(id, &res.shrinkage[i]);
    }
    Ok(())
}
