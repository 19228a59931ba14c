//! A log-dose logistic fit read as an Emax curve with maximal response 1:
//! the slope is the Hill exponent and `E50` the dose with 50% DLT risk.

use dosemeta::dose_response::{
    dlt_probability, emax_convert, fit_logistic, intercept_from_emax, DoseTransform, FitConfig,
};
use dosemeta::fixtures::SORAFENIB_CSV;
use dosemeta::study_data::parse_csv;

fn main() -> dosemeta::Result<()> {
    let cfg = FitConfig::default().with_transform(DoseTransform::Log);
    println!("{:<16} {:>9} {:>7} {:>12}", "study", "E50 (mg)", "hill", "P(DLT) 400mg");
    for ds in parse_csv(SORAFENIB_CSV.as_bytes())? {
        let fit = fit_logistic(&ds, &cfg)?;
        let (e50, hill) = emax_convert(&fit)?;
        let emax_p = 400f64.powf(hill) / (e50.powf(hill) + 400f64.powf(hill));
        assert!((emax_p - dlt_probability(&fit, 400f64.ln())).abs() < 1e-9);
        assert!((intercept_from_emax(e50, hill) - fit.beta0).abs() < 1e-9 * (1.0 + fit.beta0.abs()));
        println!("{:<16} {:>9.1} {:>7.2} {:>12.3}", ds.study_id, e50, hill, emax_p);
    }
    Ok(())
}
