//! Monte-Carlo evaluation of the two-stage estimator on a small grid:
//! bias in doses, DLT probability at the estimate, interval width and
//! coverage for individual, combined, predictive and shrinkage estimates.
//!
//! `cargo run --release --example simulation_grid -- [replications] [method]`

use dosemeta::dose_response::FitMethod;
use dosemeta::trial_sim::{run_grid, summarize_cells, CellSpec, ScenarioName, SimulationConfig, Simulator};

fn main() -> dosemeta::Result<()> {
    let mut args = std::env::args().skip(1);
    let replications: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);
    let method: FitMethod = match args.next() {
        Some(m) => m.parse()?,
        None => FitMethod::Flac,
    };

    let mut cells = Vec::new();
    for scenario in ScenarioName::ALL {
        for (k, tau) in [(5, 0.0), (20, 0.0), (20, 0.5)] {
            let mut config = SimulationConfig::new(k, tau, replications, 2024);
            config.fit.method = method;
            cells.push(CellSpec { scenario, config });
        }
    }
    let results = run_grid(&cells, &Simulator::standard())?;

    println!(
        "{:<9} {:>3} {:>4} {:<10} {:>8} {:>8} {:>7} {:>7} {:>6}",
        "scenario", "k", "tau", "target", "bias", "|error|", "DLT", "width", "cover"
    );
    for c in summarize_cells(&results) {
        println!(
            "{:<9} {:>3} {:>4.1} {:<10} {:>8.3} {:>8.3} {:>7.3} {:>7.2} {:>6.3}",
            c.scenario,
            c.k,
            c.tau,
            c.target.name(),
            c.mean_error,
            c.mean_abs_error,
            c.mean_dlt_at_estimate,
            c.mean_ci_width,
            c.coverage
        );
    }
    Ok(())
}
