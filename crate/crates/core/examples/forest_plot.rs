//! Writes a forest plot of the sorafenib meta-analysis as SVG.
//!
//! `cargo run --example forest_plot -- [output.svg]`

use dosemeta::fixtures::SORAFENIB_CSV;
use dosemeta::report::{meta_from_datasets, render_forest_svg, ForestPlotSpec, MetaOptions};
use dosemeta::study_data::parse_csv;

fn main() -> dosemeta::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "sorafenib_forest.svg".into());
    let datasets = parse_csv(SORAFENIB_CSV.as_bytes())?;
    let (input, res) = meta_from_datasets(&datasets, &MetaOptions::default())?;
    let labels: Vec<String> = datasets
        .iter()
        .map(|d| format!("{} ({})", d.label, d.year.unwrap_or_default()))
        .collect();
    let spec = ForestPlotSpec::from_meta(&input, &res, &labels);
    std::fs::write(&path, render_forest_svg(&spec))?;
    println!("wrote {} rows to {path}", spec.row_count());
    Ok(())
}
