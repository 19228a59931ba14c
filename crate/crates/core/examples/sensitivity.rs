//! Sensitivity of the combined estimate to imprecise studies: studies with
//! a standard error above a threshold are dropped and the analysis rerun.
//!
//! `cargo run --example sensitivity -- [threshold]`

use dosemeta::dose_response::{DoseTransform, FitConfig};
use dosemeta::fixtures::{IRINOTECAN_CSV, SORAFENIB_CSV};
use dosemeta::meta_analysis::{analyze, sensitivity_filter, PriorSpec};
use dosemeta::report::estimate_all;
use dosemeta::study_data::parse_csv;

fn main() -> dosemeta::Result<()> {
    let threshold: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let cfg = FitConfig::default().with_transform(DoseTransform::Log);
    let prior = PriorSpec::uniform();

    for (name, csv) in [("sorafenib", SORAFENIB_CSV), ("irinotecan", IRINOTECAN_CSV)] {
        let all = estimate_all(&parse_csv(csv.as_bytes())?, &cfg)?;
        let kept = sensitivity_filter(&all, threshold)?;
        println!("{name}: s.e. <= {threshold} keeps {} of {} studies", kept.k(), all.k());
        for (label, input) in [("all", &all), ("filtered", &kept)] {
            let e = analyze(input, &prior)?.mu.exp();
            println!(
                "  {label:<9} {:8.1} [{:8.1}, {:8.1}]",
                e.median, e.central.lower, e.central.upper
            );
        }
    }
    Ok(())
}
