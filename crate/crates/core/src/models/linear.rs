//! Linear learners: L2 logistic regression and a linear hinge-loss SVM.

use super::{FeatureMatrix, LrParams, SvmParams};

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Largest eigenvalue of `[X 1]ᵀ[X 1]` by power iteration.
fn gram_spectral_radius(x: &FeatureMatrix) -> f64 {
    let d = x.n_cols();
    let mut v = vec![1.0; d + 1];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|a| *a /= norm);
        let mut next = vec![0.0; d + 1];
        for row in x.rows() {
            let xv = dot(&v[..d], row) + v[d];
            for (n, r) in next.iter_mut().zip(row) {
                *n += xv * r;
            }
            next[d] += xv;
        }
        let new_lambda = dot(&next, &v);
        v = next;
        if (new_lambda - lambda).abs() <= 1e-9 * new_lambda.abs() {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}

/// Minimises `(1/n)·[Σ logloss + (λ/2)·‖w‖²]` (intercept unpenalised) by
/// full-batch gradient descent with step `1/L`.
pub(crate) fn fit_logistic(x: &FeatureMatrix, params: &LrParams) -> (Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let d = x.n_cols();
    let lipschitz = (0.25 * gram_spectral_radius(x) + params.lambda) / n;
    let step = 1.0 / lipschitz.max(1e-12);
    let y: Vec<f64> = x.labels().iter().map(|l| if *l { 1.0 } else { 0.0 }).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut gw = vec![0.0; d];
    for _ in 0..params.max_iter {
        gw.iter_mut().zip(&w).for_each(|(g, wj)| *g = params.lambda * wj);
        let mut gb = 0.0;
        for (row, yi) in x.rows().zip(&y) {
            let r = sigmoid(dot(&w, row) + b) - yi;
            for (g, xj) in gw.iter_mut().zip(row) {
                *g += r * xj;
            }
            gb += r;
        }
        gw.iter_mut().for_each(|g| *g /= n);
        gb /= n;
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < params.tol {
            break;
        }
        w.iter_mut().zip(&gw).for_each(|(wj, g)| *wj -= step * g);
        b -= step * gb;
    }
    (w, b)
}

/// Pegasos-style deterministic subgradient descent on
/// `(λ/2)·‖w̃‖² + (1/n)·Σ hinge` with the bias folded into `w̃` as a constant
/// feature. Returns the average of all iterates.
pub(crate) fn fit_svm(x: &FeatureMatrix, params: &SvmParams) -> (Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let d = x.n_cols();
    let lambda = params.lambda;
    let radius = 1.0 / lambda.sqrt();
    let y: Vec<f64> = x.labels().iter().map(|l| if *l { 1.0 } else { -1.0 }).collect();

    let mut w = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut g = vec![0.0; d + 1];
    for t in 1..=params.epochs {
        g.iter_mut().zip(&w).for_each(|(gj, wj)| *gj = lambda * wj);
        for (row, yi) in x.rows().zip(&y) {
            let margin = yi * (dot(&w[..d], row) + w[d]);
            if margin < 1.0 {
                for (gj, xj) in g.iter_mut().zip(row) {
                    *gj -= yi * xj / n;
                }
                g[d] -= yi / n;
            }
        }
        let eta = 1.0 / (lambda * t as f64);
        w.iter_mut().zip(&g).for_each(|(wj, gj)| *wj -= eta * gj);
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > radius {
            w.iter_mut().for_each(|a| *a *= radius / norm);
        }
        avg.iter_mut().zip(&w).for_each(|(a, wj)| *a += wj);
    }
    avg.iter_mut().for_each(|a| *a /= params.epochs as f64);
    let b = avg.pop().unwrap_or(0.0);
    (avg, b)
}

pub(crate) fn linear_score(w: &[f64], b: f64, row: &[f64]) -> f64 {
    dot(w, row) + b
}
