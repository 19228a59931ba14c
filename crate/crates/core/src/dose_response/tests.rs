use super::*;
use crate::fixtures::SORAFENIB_CSV;
use crate::study_data::{parse_csv, DoseGroup};
use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn points(data: &[(f64, f64, f64)]) -> Vec<BinomialPoint> {
    data.iter()
        .map(|&(x, trials, events)| BinomialPoint { x, trials, events })
        .collect()
}

fn identity_cfg(method: FitMethod) -> FitConfig {
    FitConfig::default()
        .with_method(method)
        .with_transform(DoseTransform::Identity)
}

#[test]
fn saturated_two_dose_fit() {
    let pts = points(&[(0.0, 10.0, 5.0), (1.0, 20.0, 15.0)]);
    let fit = fit_points(&pts, &identity_cfg(FitMethod::PlainMl)).unwrap();
    assert!(fit.converged);
    assert!(!fit.separation_detected);
    assert_abs_diff_eq!(fit.beta0, 0.0, epsilon = 1e-9);
    assert_abs_diff_eq!(fit.beta1, 3f64.ln(), epsilon = 1e-9);
}

#[test]
fn awada_flac_matches_reference() {
    let sets = parse_csv(SORAFENIB_CSV.as_bytes()).unwrap();
    let awada = sets.iter().find(|d| d.study_id == "awada2005").unwrap();
    let cfg = FitConfig::default();
    let fit = fit_logistic(awada, &cfg).unwrap();
    let mtd = mtd_from_fit(&fit, &cfg).unwrap();
    assert_eq!(mtd.study_id, "awada2005");
    assert_abs_diff_eq!(mtd.estimate, 6.22, epsilon = 0.005);
    assert_abs_diff_eq!(mtd.std_err, 0.17, epsilon = 0.005);
}

/// Penalized log-likelihood written out for the 2-parameter case, kept
/// independent of the solver.
fn firth_objective(data: &[(f64, f64, f64)], b0: f64, b1: f64) -> f64 {
    let (mut ll, mut i00, mut i01, mut i11) = (0.0, 0.0, 0.0, 0.0);
    for &(x, n, r) in data {
        let p = 1.0 / (1.0 + (-(b0 + b1 * x)).exp());
        ll += r * p.ln() + (n - r) * (1.0 - p).ln();
        let w = n * p * (1.0 - p);
        i00 += w;
        i01 += w * x;
        i11 += w * x * x;
    }
    ll + 0.5 * (i00 * i11 - i01 * i01).ln()
}

#[test]
fn firth_matches_brute_force_grid() {
    let data = [(1.0, 3.0, 0.0), (2.0, 3.0, 0.0), (3.0, 3.0, 2.0)];
    let step = 0.02;
    let m = (40.0 / step) as i64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..=m {
        let b0 = -20.0 + i as f64 * step;
        for j in 0..=m {
            let b1 = -20.0 + j as f64 * step;
            let v = firth_objective(&data, b0, b1);
            if v > best.0 {
                best = (v, b0, b1);
            }
        }
    }
    let fit = fit_points(&points(&data), &identity_cfg(FitMethod::Firth)).unwrap();
    assert!(fit.converged);
    assert!(fit.beta0.is_finite() && fit.beta1.is_finite());
    assert!((fit.beta0 - best.1).abs() <= step, "{} vs {}", fit.beta0, best.1);
    assert!((fit.beta1 - best.2).abs() <= step, "{} vs {}", fit.beta1, best.2);
}

#[test]
fn separated_plain_fit_is_flagged_not_fatal() {
    let data = [(1.0, 3.0, 0.0), (2.0, 3.0, 0.0), (3.0, 3.0, 3.0)];
    let fit = fit_points(&points(&data), &identity_cfg(FitMethod::PlainMl)).unwrap();
    assert!(fit.separation_detected);
    assert!(!fit.converged);
    for method in [FitMethod::Firth, FitMethod::Flac] {
        let fit = fit_points(&points(&data), &identity_cfg(method)).unwrap();
        assert!(fit.converged, "{method:?}");
        assert!(fit.covariance.iter().flatten().all(|v| v.is_finite()));
    }
}

#[test]
fn single_dose_is_structural_error() {
    let ds = DoseToxicityDataset::new(
        "one",
        "one",
        None,
        None,
        vec![DoseGroup::new(10.0, 6, 1).unwrap()],
    )
    .unwrap();
    match fit_logistic(&ds, &FitConfig::default()) {
        Err(Error::InsufficientDoses { study_id, distinct }) => {
            assert_eq!(study_id, "one");
            assert_eq!(distinct, 1);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn invalid_target_rejected() {
    let pts = points(&[(0.0, 10.0, 5.0), (1.0, 20.0, 15.0)]);
    let cfg = identity_cfg(FitMethod::Firth).with_target(1.0);
    assert!(matches!(fit_points(&pts, &cfg), Err(Error::Config(_))));
}

#[test]
fn mtd_of_known_curves() {
    let cfg = FitConfig::default();
    let zero = [[0.0; 2]; 2];
    let moderate = FitResult::from_coefficients(-5.0, 1.0, zero);
    assert_abs_diff_eq!(mtd_from_fit(&moderate, &cfg).unwrap().estimate, 4.29, epsilon = 0.005);
    let steep = FitResult::from_coefficients(-10.0, 2.0, zero);
    assert_abs_diff_eq!(mtd_from_fit(&steep, &cfg).unwrap().estimate, 4.65, epsilon = 0.005);

    let centered = FitResult::from_coefficients(0.0, 1.0, [[1.0, 0.0], [0.0, 1.0]]);
    let mtd = mtd_from_fit(&centered, &cfg.with_target(0.5)).unwrap();
    assert_abs_diff_eq!(mtd.estimate, 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(mtd.std_err, 1.0, epsilon = 1e-12);
    assert_eq!(mtd.warning, None);
}

#[test]
fn zero_slope_has_no_mtd() {
    let flat = FitResult::from_coefficients(-1.0, 0.0, [[1.0, 0.0], [0.0, 1.0]]);
    assert!(matches!(
        mtd_from_fit(&flat, &FitConfig::default()),
        Err(Error::UndefinedMtd(_))
    ));
}

#[test]
fn non_finite_covariance_is_flagged() {
    let fit = FitResult::from_coefficients(-5.0, 1.0, [[f64::INFINITY; 2]; 2]);
    let mtd = mtd_from_fit(&fit, &FitConfig::default()).unwrap();
    assert!(!mtd.std_err.is_finite());
    assert_eq!(mtd.warning, Some(MtdWarning::NonFiniteStdErr));
}

#[test]
fn dlt_probability_examples() {
    let zero = [[0.0; 2]; 2];
    assert_abs_diff_eq!(
        dlt_probability(&FitResult::from_coefficients(0.0, 1.0, zero), 0.0),
        0.5,
        epsilon = 1e-15
    );
    assert_abs_diff_eq!(
        dlt_probability(&FitResult::from_coefficients(-5.0, 1.0, zero), 4.29),
        0.33,
        epsilon = 0.002
    );
    assert_abs_diff_eq!(
        dlt_probability(&FitResult::from_coefficients(-3.5, 0.5, zero), 3.0),
        0.119,
        epsilon = 0.0005
    );
}

#[test]
fn dlt_probability_is_monotone_for_positive_slope() {
    let fit = FitResult::from_coefficients(-2.0, 0.7, [[0.0; 2]; 2]);
    let mut last = 0.0;
    for i in 0..200 {
        let p = dlt_probability(&fit, -10.0 + 0.1 * i as f64);
        assert!(p > last);
        last = p;
    }
}

#[test]
fn emax_conversion() {
    let zero = [[0.0; 2]; 2];
    let (e50, n) = emax_convert(&FitResult::from_coefficients(0.0, 1.0, zero)).unwrap();
    assert_eq!((e50, n), (1.0, 1.0));
    let (e50, _) = emax_convert(&FitResult::from_coefficients(-5.0, 1.0, zero)).unwrap();
    assert_abs_diff_eq!(e50, 5f64.exp(), epsilon = 1e-12);

    let fit = FitResult::from_coefficients(-3.7, 1.3, zero);
    let (e50, n) = emax_convert(&fit).unwrap();
    assert_abs_diff_eq!(intercept_from_emax(e50, n), -3.7, epsilon = 1e-12);
    assert!(emax_convert(&FitResult::from_coefficients(1.0, 0.0, zero)).is_err());
}

#[test]
fn delta_method_agrees_with_simulation() {
    // slope CV = 0.15
    let (b0, b1) = (-5.0, 1.0);
    let cov = [[0.36, -0.06], [-0.06, 0.0225]];
    let fit = FitResult::from_coefficients(b0, b1, cov);
    let cfg = FitConfig::default();
    let delta = mtd_from_fit(&fit, &cfg).unwrap().std_err;

    let l00 = cov[0][0].sqrt();
    let l10 = cov[1][0] / l00;
    let l11 = (cov[1][1] - l10 * l10).sqrt();
    let target = (0.33f64 / 0.67).ln();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let (mut n, mut sum, mut sum2) = (0.0, 0.0, 0.0);
    for _ in 0..1_000_000 {
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let d0 = b0 + l00 * z0;
        let d1 = b1 + l10 * z0 + l11 * z1;
        if d1.abs() < 1e-6 {
            continue;
        }
        let m = (target - d0) / d1;
        n += 1.0;
        sum += m;
        sum2 += m * m;
    }
    let sd = (sum2 / n - (sum / n).powi(2)).sqrt();
    assert!((delta - sd).abs() / sd < 0.10, "delta {delta} vs simulated {sd}");
}
