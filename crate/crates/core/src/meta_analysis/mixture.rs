//! Finite mixtures of normal distributions and their quantiles.

use statrs::function::erf::erfc;

use super::{Interval, Summary};

/// Standard normal CDF.
pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Weighted mixture of normal components. Weights sum to one.
#[derive(Debug, Clone)]
pub struct NormalMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

const QUANTILE_TOL: f64 = 1e-8;
const SQRT_2PI: f64 = 2.506_628_274_631_000_2;
/// Components lighter than this fraction of the heaviest are dropped.
const PRUNE: f64 = 1e-16;

impl NormalMixture {
    pub fn new(weights: &[f64], means: &[f64], sds: &[f64]) -> Self {
        assert!(weights.len() == means.len() && means.len() == sds.len());
        let top = weights.iter().cloned().fold(0.0, f64::max);
        let mut w = Vec::with_capacity(weights.len());
        let mut m = Vec::with_capacity(weights.len());
        let mut s = Vec::with_capacity(weights.len());
        for i in 0..weights.len() {
            if weights[i] > PRUNE * top {
                w.push(weights[i]);
                m.push(means[i]);
                s.push(sds[i]);
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        Self {
            weights: w,
            means: m,
            sds: s,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.weights.len() {
            let s = self.sds[i];
            let c = if s > 0.0 {
                std_normal_cdf((x - self.means[i]) / s)
            } else if x >= self.means[i] {
                1.0
            } else {
                0.0
            };
            acc += self.weights[i] * c;
        }
        acc.clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| w * m)
            .sum()
    }

    pub fn sd(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = (0..self.weights.len())
            .map(|i| self.weights[i] * (self.sds[i].powi(2) + (self.means[i] - mean).powi(2)))
            .sum();
        second.max(0.0).sqrt()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.eval(x).1
    }

    /// CDF, density and density derivative at `x` in one pass.
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        let (mut cdf, mut pdf, mut slope) = (0.0, 0.0, 0.0);
        for i in 0..self.weights.len() {
            let s = self.sds[i];
            let w = self.weights[i];
            if s > 0.0 {
                let z = (x - self.means[i]) / s;
                let d = w * (-0.5 * z * z).exp() / (s * SQRT_2PI);
                cdf += w * std_normal_cdf(z);
                pdf += d;
                slope -= d * z / s;
            } else if x >= self.means[i] {
                cdf += w;
            }
        }
        (cdf.clamp(0.0, 1.0), pdf, slope)
    }

    fn bracket(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.weights.len() {
            lo = lo.min(self.means[i] - 40.0 * self.sds[i]);
            hi = hi.max(self.means[i] + 40.0 * self.sds[i]);
        }
        (lo, hi)
    }

    /// Quantile to 1e-8 absolute: Newton steps on the CDF, falling back to
    /// bisection whenever a step leaves the current bracket.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = self.bracket();
        let mut x = self.mean();
        if !(lo < x && x < hi) {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let (c, d, _) = self.eval(x);
            let f = c - p;
            if f < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            if hi - lo <= QUANTILE_TOL {
                break;
            }
            let newton = if d > 0.0 { x - f / d } else { f64::NAN };
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() < 0.1 * QUANTILE_TOL {
                x = next;
                break;
            }
            x = next;
        }
        x
    }

    pub fn central_interval(&self, level: f64) -> Interval {
        let tail = 0.5 * (1.0 - level);
        Interval {
            lower: self.quantile(tail),
            upper: self.quantile(1.0 - tail),
        }
    }

    /// Shortest interval with the given coverage: minimizes
    /// `Q(p + level) - Q(p)` over the lower tail mass `p`. At an interior
    /// optimum the density is equal at both ends, which pins `p` down far
    /// more sharply than the nearly flat width does.
    pub fn shortest_interval(&self, level: f64) -> Interval {
        let central = self.central_interval(level);
        if let Some(found) = self.equal_density_interval(level, central) {
            return found;
        }
        let slack = 1.0 - level;
        let width = |p: f64| self.quantile(p + level) - self.quantile(p);
        let gap = |p: f64| self.pdf(self.quantile(p)) - self.pdf(self.quantile(p + level));
        shortest_by_tail_mass(slack, slack * 1e-6, width, Some(&gap), |p| Interval {
            lower: self.quantile(p),
            upper: self.quantile(p + level),
        })
    }

    /// Newton iteration on the endpoints for `F(U) - F(L) = level` and
    /// `f(L) = f(U)`, started from `start`. Returns `None` unless it
    /// converges to an interval no wider than `start`.
    fn equal_density_interval(&self, level: f64, start: Interval) -> Option<Interval> {
        let (mut lo, mut hi) = (start.lower, start.upper);
        for _ in 0..50 {
            let (cl, fl, dl) = self.eval(lo);
            let (ch, fh, dh) = self.eval(hi);
            let r1 = ch - cl - level;
            let r2 = fl - fh;
            // Jacobian [[-fl, fh], [dl, -dh]]
            let det = fl * dh - fh * dl;
            if !(det.is_finite() && det != 0.0) {
                return None;
            }
            let step_lo = (dh * r1 + fh * r2) / det;
            let step_hi = (dl * r1 + fl * r2) / det;
            lo += step_lo;
            hi += step_hi;
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return None;
            }
            let scale = hi - lo;
            if step_lo.abs().max(step_hi.abs()) < 1e-13 * scale {
                let (cl, fl, _) = self.eval(lo);
                let (ch, fh, _) = self.eval(hi);
                let ok = (ch - cl - level).abs() < 1e-10
                    && (fl - fh).abs() <= 1e-8 * fl.max(fh)
                    && scale <= start.width() * (1.0 + 1e-12);
                return ok.then_some(Interval { lower: lo, upper: hi });
            }
        }
        None
    }

    pub fn summary(&self, level: f64) -> Summary {
        Summary {
            median: self.quantile(0.5),
            mean: self.mean(),
            sd: self.sd(),
            central: self.central_interval(level),
            shortest: self.shortest_interval(level),
        }
    }
}

/// Coarse scan over the lower tail mass in `[eps, slack - eps]`, then
/// refinement around the best scan point: bisection on `gap` (the width's
/// derivative up to a positive factor) when it changes sign there,
/// golden-section search on the width otherwise.
pub(crate) fn shortest_by_tail_mass(
    slack: f64,
    eps: f64,
    width: impl Fn(f64) -> f64,
    gap: Option<&dyn Fn(f64) -> f64>,
    interval: impl Fn(f64) -> Interval,
) -> Interval {
    let n = 40;
    let grid: Vec<f64> = (0..=n)
        .map(|i| eps + (slack - 2.0 * eps) * i as f64 / n as f64)
        .collect();
    let widths: Vec<f64> = grid.iter().map(|&p| width(p)).collect();
    let best = (0..=n)
        .min_by(|&a, &b| widths[a].total_cmp(&widths[b]))
        .unwrap();
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(n)];
    if let Some(gap) = gap {
        let (ga, gb) = (gap(a), gap(b));
        if ga < 0.0 && gb > 0.0 {
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if gap(m) > 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            return interval(0.5 * (a + b));
        }
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (width(c), width(d));
    for _ in 0..60 {
        if (b - a) < slack * 1e-9 {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = width(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = width(d);
        }
    }
    let p = 0.5 * (a + b);
    if widths[best] < width(p) {
        interval(grid[best])
    } else {
        interval(p)
    }
}
