//! Per-study log-MTD estimates for both bundled data sets, with each of the
//! three fitting methods.

use dosemeta::dose_response::{fit_logistic, mtd_from_fit, FitConfig, FitMethod};
use dosemeta::fixtures::{IRINOTECAN_CSV, SORAFENIB_CSV};
use dosemeta::study_data::parse_csv;

fn main() -> dosemeta::Result<()> {
    for (name, csv) in [("sorafenib", SORAFENIB_CSV), ("irinotecan", IRINOTECAN_CSV)] {
        println!("{name}");
        println!(
            "{:<16} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            "study", "plain", "s.e.", "firth", "s.e.", "flac", "s.e."
        );
        for ds in parse_csv(csv.as_bytes())? {
            let mut line = format!("{:<16}", ds.study_id);
            for method in FitMethod::ALL {
                let cfg = FitConfig::default().with_method(method);
                let fit = fit_logistic(&ds, &cfg)?;
                let mtd = mtd_from_fit(&fit, &cfg)?;
                let flag = if fit.separation_detected { "*" } else { " " };
                line.push_str(&format!(" {:>9.2} {:>8.2}{flag}", mtd.estimate, mtd.std_err));
            }
            println!("{line}");
        }
        println!("* separation: plain maximum likelihood did not converge\n");
    }
    Ok(())
}
