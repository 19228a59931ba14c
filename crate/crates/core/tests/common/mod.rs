/// Posterior mean of `mu` by direct 2-D Simpson integration of
/// `p(tau) * prod_i N(y_i | mu, s_i^2 + tau^2)` over a box.
pub fn brute_force_mu_mean(pairs: &[(f64, f64)], hn_scale: f64) -> f64 {
    let simpson = |n: usize, i: usize| match i {
        0 => 1.0,
        i if i == n => 1.0,
        i if i % 2 == 1 => 4.0,
        _ => 2.0,
    };
    let smax = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let ybar = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let spread = pairs.iter().map(|p| (p.0 - ybar).abs()).fold(0.0, f64::max);
    let tau_max = 10.0 * hn_scale;
    let half = spread + 12.0 * (smax + tau_max);
    let (nt, nm) = (2000, 4000);
    let (ht, hm) = (tau_max / nt as f64, 2.0 * half / nm as f64);
    let (mut z, mut zm) = (0.0, 0.0);
    for it in 0..=nt {
        let tau = it as f64 * ht;
        let prior = (-0.5 * (tau / hn_scale).powi(2)).exp();
        for im in 0..=nm {
            let mu = ybar - half + im as f64 * hm;
            let mut lik = prior;
            for &(y, s) in pairs {
                let v = s * s + tau * tau;
                lik *= (-0.5 * (y - mu).powi(2) / v).exp() / v.sqrt();
            }
            let w = simpson(nt, it) * simpson(nm, im) * lik;
            z += w;
            zm += w * mu;
        }
    }
    zm / z
}
