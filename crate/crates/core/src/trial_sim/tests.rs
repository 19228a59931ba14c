use super::*;
use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn scenario_mtds_and_slopes() {
    let expected = [
        (ScenarioName::Moderate, 4.29, 1.0),
        (ScenarioName::Steep, 4.65, 2.0),
        (ScenarioName::Gentle, 5.58, 0.5),
        (ScenarioName::Convex, 4.60, 1.75),
        (ScenarioName::Concave, 3.73, 0.632),
    ];
    for (name, mtd, slope) in expected {
        let sc = Scenario::new(name);
        assert_abs_diff_eq!(sc.true_mtd, mtd, epsilon = 0.005);
        assert_abs_diff_eq!(sc.slope_at_mtd, slope, epsilon = 0.005);
        assert_abs_diff_eq!(sc.curve.dlt_at(sc.true_mtd), TARGET, epsilon = 1e-12);
        assert!(sc.curve.logits().windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn moderate_logits_and_table_values() {
    let sc = Scenario::new(ScenarioName::Moderate);
    assert_eq!(sc.curve.logits(), &[-4.0, -3.0, -2.0, -1.0, 0.0, 1.0]);
    let probs = Scenario::new(ScenarioName::Steep).curve.probs();
    assert_abs_diff_eq!(probs[0], 0.00034, epsilon = 5e-6);
    assert_abs_diff_eq!(probs[5], 0.881, epsilon = 5e-4);
}

#[test]
fn dlt_at_estimate_examples() {
    let gentle = Scenario::new(ScenarioName::Gentle);
    assert_abs_diff_eq!(gentle.curve.dlt_at(5.58), 0.33, epsilon = 0.001);
    let one_low = gentle.curve.dlt_at(4.58);
    assert_abs_diff_eq!(one_low, 1.0 / (1.0 + (3.5f64 - 0.5 * 4.58).exp()), epsilon = 1e-12);
    assert!((0.20..=0.25).contains(&one_low));
    // beyond the panel the last segment is extended
    let moderate = Scenario::new(ScenarioName::Moderate);
    assert_abs_diff_eq!(moderate.curve.logit_at(8.0), 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(moderate.curve.logit_at(0.0), -5.0, epsilon = 1e-12);
}

#[test]
fn zero_tau_leaves_curve_unchanged() {
    let sc = Scenario::new(ScenarioName::Concave);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (curve, delta) = perturb_scenario(&sc, 0.0, &mut rng).unwrap();
    assert_eq!(delta, 0.0);
    assert_eq!(curve, sc.curve);
    assert!(perturb_scenario(&sc, -1.0, &mut rng).is_err());
}

#[test]
fn perturbed_mtd_has_tau_spread() {
    let sc = Scenario::new(ScenarioName::Moderate);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws: Vec<f64> = (0..100_000)
        .map(|_| perturb_scenario(&sc, 0.5, &mut rng).unwrap().0.mtd(TARGET))
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
    assert_abs_diff_eq!(sd, 0.5, epsilon = 0.005);
    assert_abs_diff_eq!(mean, sc.true_mtd, epsilon = 0.01);
}

fn flat(p: f64) -> DoseCurve {
    DoseCurve::from_logits(vec![logit(p.clamp(1e-300, 1.0 - 1e-16)); 6])
}

#[test]
fn three_plus_three_deterministic_extremes() {
    let cfg = DesignConfig::new(Design::ThreePlusThree);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let toxic = DoseCurve::from_logits(vec![1e3; 6]);
    let rec = simulate_3p3(&toxic, &cfg, &mut rng).unwrap();
    let s = rec.dataset.summarize();
    assert_eq!((s.n_doses, s.n_patients, s.n_events), (1, 3, 3));

    let safe = DoseCurve::from_logits(vec![-1e3; 6]);
    let rec = simulate_3p3(&safe, &cfg, &mut rng).unwrap();
    let s = rec.dataset.summarize();
    assert_eq!((s.n_doses, s.n_patients, s.n_events), (6, 18, 0));
    assert_eq!(rec.cohort_doses, vec![0, 1, 2, 3, 4, 5]);

    let mut expand = cfg.clone();
    expand.top_dose_rule = TopDoseRule::Expand;
    let rec = simulate_3p3(&safe, &expand, &mut rng).unwrap();
    assert_eq!(rec.dataset.summarize().n_patients, 21);
}

#[test]
fn three_plus_three_bounds() {
    let cfg = DesignConfig::new(Design::ThreePlusThree);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for sc in Scenario::all() {
        for _ in 0..500 {
            let rec = simulate_3p3(&sc.curve, &cfg, &mut rng).unwrap();
            let s = rec.dataset.summarize();
            assert!(s.n_patients <= 6 * s.n_doses as u32);
            assert!(rec.dataset.groups().iter().all(|g| g.n_patients == 3 || g.n_patients == 6));
            assert!(rec.cohort_doses.windows(2).all(|w| w[1] <= w[0] + 1));
        }
    }
}

#[test]
fn model_based_designs_respect_sample_size_and_skipping() {
    let sim = Simulator::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for design in [Design::Crm, Design::Blrm] {
        for sc in Scenario::all() {
            for _ in 0..200 {
                let rec = sim.simulate(design, &sc.curve, &mut rng).unwrap();
                let n = rec.dataset.summarize().n_patients;
                assert!(n <= rec.max_n && n % 3 == 0, "{design} {n} {}", rec.max_n);
                assert_eq!(rec.cohort_doses[0], 0);
                assert!(rec.cohort_doses.windows(2).all(|w| w[1] <= w[0] + 1));
            }
        }
    }
}

#[test]
fn crm_sample_size_is_uniform() {
    let cfg = DesignConfig::new(Design::Crm);
    let sim = Simulator::new(vec![cfg]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let curve = flat(0.0);
    let mut counts = [0usize; 6];
    let reps = 6000;
    for _ in 0..reps {
        let rec = sim.simulate(Design::Crm, &curve, &mut rng).unwrap();
        counts[(rec.max_n / 3 - 5) as usize] += 1;
        assert_eq!(rec.dataset.summarize().n_patients, rec.max_n);
    }
    let se = (reps as f64 / 6.0 * 5.0 / 6.0).sqrt();
    for c in counts {
        assert!((c as f64 - reps as f64 / 6.0).abs() < 4.0 * se, "{counts:?}");
    }
}

#[test]
fn admissible_rule_with_alpha_one_never_stops_early() {
    let mut cfg = DesignConfig::new(Design::Blrm);
    cfg.ewoc_rule = EwocRule::Admissible;
    cfg.ewoc_alpha = 1.0;
    cfg.blrm_covariate = BlrmCovariate::LogIndex { reference: 3.5 };
    let sim = Simulator::new(vec![cfg]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let sc = Scenario::new(ScenarioName::Steep);
    for _ in 0..100 {
        let rec = sim.simulate(Design::Blrm, &sc.curve, &mut rng).unwrap();
        assert_eq!(rec.dataset.summarize().n_patients, rec.max_n);
    }
}

#[test]
fn invalid_design_configs_rejected() {
    let mut cfg = DesignConfig::new(Design::Crm);
    cfg.cohort_size = 0;
    assert!(cfg.validate().is_err());
    let mut cfg = DesignConfig::new(Design::Blrm);
    cfg.ewoc_alpha = 0.0;
    assert!(cfg.validate().is_err());
    let mut cfg = DesignConfig::new(Design::Crm);
    cfg.skeleton = vec![0.2, 0.1];
    assert!(cfg.validate().is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(simulate_crm(&flat(0.1), &DesignConfig::new(Design::Blrm), &mut rng).is_err());
}

#[test]
fn sub_seeds_are_stable_and_distinct() {
    assert_eq!(sub_seed(1, 2, 3, 4, 5), sub_seed(1, 2, 3, 4, 5));
    let mut seen = std::collections::HashSet::new();
    for s in 0..4 {
        for r in 0..50 {
            for i in 0..20 {
                assert!(seen.insert(sub_seed(42, s, 7, r, i)));
            }
        }
    }
}

#[test]
fn study_set_examples() {
    let simulator = Simulator::standard();
    let sc = Scenario::new(ScenarioName::Moderate);
    let sim = SimulationConfig::new(5, 0.0, 1, 9);
    let records = run_study_set(&sim, &sc, &simulator, 0).unwrap();
    assert_eq!(records.len(), 5);
    assert!(records.iter().all(|r| r.intercept_offset == 0.0));
    assert_eq!(records, run_study_set(&sim, &sc, &simulator, 0).unwrap());

    let mut only = sim.clone();
    only.design_mix = [1.0, 0.0, 0.0];
    let records = run_study_set(&only, &sc, &simulator, 3).unwrap();
    assert!(records.iter().all(|r| r.design_used == Design::ThreePlusThree));
}

#[test]
fn perfect_estimate_metrics() {
    let sc = Scenario::new(ScenarioName::Moderate);
    assert_abs_diff_eq!(sc.curve.dlt_at(sc.true_mtd), 0.33, epsilon = 1e-12);
    assert_abs_diff_eq!(sc.true_mtd, 4.29, epsilon = 0.005);
}

#[test]
fn replication_runs_and_reports_all_targets() {
    let simulator = Simulator::standard();
    let sc = Scenario::new(ScenarioName::Moderate);
    let sim = SimulationConfig::new(10, 0.5, 1, 3);
    let res = run_replication(&sim, &sc, &simulator, 0).unwrap();
    assert_eq!(res.design_counts.iter().sum::<u32>(), 10);
    let targets: Vec<Target> = res.metrics.iter().map(|m| m.target).collect();
    if res.excluded <= 7 {
        assert_eq!(targets, Target::ALL.to_vec());
    }
    for m in &res.metrics {
        assert!(m.error.is_finite() && m.ci_width > 0.0);
        assert!((0.0..=1.0).contains(&m.covered));
    }
}
