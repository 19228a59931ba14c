//! Damped Newton iterations for (weighted) binomial logistic regression,
//! optionally with the Jeffreys-prior (Firth) penalty.

use nalgebra::{DMatrix, DVector};

/// One row of a grouped binomial design: covariates, events and trials.
/// Events and trials are real so that fractionally weighted pseudo-rows fit
/// the same machinery.
#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub covariates: Vec<f64>,
    pub events: f64,
    pub trials: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonOptions {
    pub firth: bool,
    /// Stop when the objective stalls while the iterate keeps moving. Only
    /// meaningful for unpenalized fits, where this signals separation.
    pub detect_stall: bool,
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutput {
    pub beta: DVector<f64>,
    /// Inverse Fisher information at `beta`; entries are infinite when the
    /// information matrix is singular.
    pub covariance: DMatrix<f64>,
    pub hat: Vec<f64>,
    /// Log-likelihood at `beta`, penalized when fitting with the Firth term.
    pub objective: f64,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
}

const DIVERGENCE_BOUND: f64 = 1e4;
const MAX_HALVINGS: usize = 20;
/// Relative objective change regarded as a stall (deviance-style criterion).
const STALL_EPS: f64 = 1e-8;
/// Steps this long with a stalled objective indicate a receding optimum.
const STALL_MIN_STEP: f64 = 0.25;

fn log_sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        -(-eta).exp().ln_1p()
    } else {
        eta - eta.exp().ln_1p()
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

struct Evaluation {
    objective: f64,
    score: DVector<f64>,
    inverse: Option<DMatrix<f64>>,
    hat: Vec<f64>,
}

fn design(rows: &[Row], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), p, |i, j| rows[i].covariates[j])
}

fn evaluate(rows: &[Row], x: &DMatrix<f64>, beta: &DVector<f64>, firth: bool) -> Evaluation {
    let p = beta.len();
    let eta = x * beta;
    let probs: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
    let weights: Vec<f64> = rows
        .iter()
        .zip(&probs)
        .map(|(r, &pr)| r.trials * pr * (1.0 - pr))
        .collect();

    let mut loglik = 0.0;
    for (r, &e) in rows.iter().zip(eta.iter()) {
        if r.events > 0.0 {
            loglik += r.events * log_sigmoid(e);
        }
        let non = r.trials - r.events;
        if non > 0.0 {
            loglik += non * log_sigmoid(-e);
        }
    }

    let mut information = DMatrix::<f64>::zeros(p, p);
    for (i, &w) in weights.iter().enumerate() {
        for a in 0..p {
            for b in 0..p {
                information[(a, b)] += w * x[(i, a)] * x[(i, b)];
            }
        }
    }
    let inverse = information.clone().try_inverse();

    let hat: Vec<f64> = match &inverse {
        Some(inv) => (0..rows.len())
            .map(|i| {
                let xi = x.row(i);
                weights[i] * (xi * inv * xi.transpose())[(0, 0)]
            })
            .collect(),
        None => vec![0.0; rows.len()],
    };

    let mut score = DVector::<f64>::zeros(p);
    for (i, r) in rows.iter().enumerate() {
        let mut resid = r.events - r.trials * probs[i];
        if firth {
            resid += hat[i] * (0.5 - probs[i]);
        }
        for a in 0..p {
            score[a] += resid * x[(i, a)];
        }
    }

    let objective = if firth {
        let det = information.determinant();
        if det > 0.0 {
            loglik + 0.5 * det.ln()
        } else {
            f64::NEG_INFINITY
        }
    } else {
        loglik
    };

    Evaluation {
        objective,
        score,
        inverse,
        hat,
    }
}

/// Newton step for the penalized objective, using a central-difference
/// Hessian of the (exact) modified score. `None` when that Hessian is not
/// negative definite, in which case Fisher scoring is used instead.
fn penalized_step(
    rows: &[Row],
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    score: &DVector<f64>,
) -> Option<DVector<f64>> {
    let p = beta.len();
    let mut neg_hessian = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let h = 1e-6 * (1.0 + beta[j].abs());
        let mut up = beta.clone();
        up[j] += h;
        let mut down = beta.clone();
        down[j] -= h;
        let diff = evaluate(rows, x, &up, true).score - evaluate(rows, x, &down, true).score;
        neg_hessian.set_column(j, &(-diff / (2.0 * h)));
    }
    let sym = (&neg_hessian + neg_hessian.transpose()) * 0.5;
    let step = sym.cholesky()?.solve(score);
    step.iter().all(|v| v.is_finite()).then_some(step)
}

fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub(crate) fn fit(rows: &[Row], start: DVector<f64>, opts: NewtonOptions) -> NewtonOutput {
    let p = start.len();
    let x = design(rows, p);
    let mut beta = start;
    let mut eval = evaluate(rows, &x, &beta, opts.firth);
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let Some(inv) = eval.inverse.as_ref() else {
            diverged = true;
            break;
        };
        let step = match opts.firth {
            true => penalized_step(rows, &x, &beta, &eval.score).unwrap_or_else(|| inv * &eval.score),
            false => inv * &eval.score,
        };
        let old_objective = eval.objective;
        let slack = 1e-12 * (1.0 + old_objective.abs());

        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_eval = evaluate(rows, &x, &candidate, opts.firth);
        for _ in 0..MAX_HALVINGS {
            if cand_eval.objective >= old_objective - slack {
                break;
            }
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_eval = evaluate(rows, &x, &candidate, opts.firth);
        }

        let taken = max_abs(&step) * scale;
        beta = candidate;
        eval = cand_eval;

        if max_abs(&eval.score) < opts.tolerance && taken < opts.tolerance {
            converged = true;
            break;
        }
        if beta.iter().any(|b| !b.is_finite() || b.abs() > DIVERGENCE_BOUND) {
            diverged = true;
            break;
        }
        if opts.detect_stall
            && (eval.objective - old_objective).abs() < STALL_EPS * (old_objective.abs() + 0.1)
            && taken > STALL_MIN_STEP
        {
            diverged = true;
            break;
        }
    }

    let covariance = eval
        .inverse
        .clone()
        .unwrap_or_else(|| DMatrix::from_element(p, p, f64::INFINITY));

    NewtonOutput {
        beta,
        covariance,
        hat: eval.hat,
        objective: eval.objective,
        converged,
        diverged,
        iterations,
    }
}
