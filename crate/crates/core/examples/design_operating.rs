//! Data characteristics of the three escalation designs: mean numbers of
//! doses, patients and DLTs per trial, and mean patients per dose, for each
//! scenario without heterogeneity.
//!
//! `cargo run --release --example design_operating -- [trials] [seed]`

use dosemeta::trial_sim::{Design, Scenario, Simulator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> dosemeta::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10_000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);

    let sim = Simulator::standard();
    println!("{trials} trials per design and scenario\n");
    println!("{:<9} {:<6} {:>24}   per-dose patients", "scenario", "design", "doses / patients / DLTs");
    for sc in Scenario::all() {
        for design in Design::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (mut doses, mut patients, mut events) = (0.0, 0.0, 0.0);
            let mut per_dose = [0.0; 6];
            for _ in 0..trials {
                let rec = sim.simulate(design, &sc.curve, &mut rng)?;
                let s = rec.dataset.summarize();
                doses += s.n_doses as f64;
                patients += s.n_patients as f64;
                events += s.n_events as f64;
                for g in rec.dataset.groups() {
                    per_dose[g.dose as usize - 1] += g.n_patients as f64;
                }
            }
            let n = trials as f64;
            let per: Vec<String> = per_dose.iter().map(|p| format!("{:5.2}", p / n)).collect();
            println!(
                "{:<9} {:<6} {:>8.1} / {:>5.1} / {:>4.1}   {}",
                sc.name,
                design,
                doses / n,
                patients / n,
                events / n,
                per.join(" ")
            );
        }
    }
    Ok(())
}
