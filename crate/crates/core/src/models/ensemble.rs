//! Tree ensembles: SAMME AdaBoost, logistic gradient boosting, random forest.

use rand::Rng;
use rayon::prelude::*;

use super::linear::sigmoid;
use super::tree::{grow, weighted_mean, GrowParams, Tree};
use super::{AdbParams, FeatureMatrix, GbParams, RfParams};
use crate::rng::stream;

fn targets(x: &FeatureMatrix) -> Vec<f64> {
    x.labels().iter().map(|l| if *l { 1.0 } else { 0.0 }).collect()
}

/// Class vote of a leaf holding a class-1 fraction; an exact tie counts half.
pub(crate) fn vote(fraction: f64) -> f64 {
    if fraction > 0.5 {
        1.0
    } else if fraction < 0.5 {
        0.0
    } else {
        0.5
    }
}

/// Two-class SAMME with weighted-Gini stumps.
pub(crate) fn fit_adaboost(x: &FeatureMatrix, params: &AdbParams) -> (Vec<Tree>, Vec<f64>) {
    let n = x.n_rows();
    let y = targets(x);
    let rows: Vec<usize> = (0..n).collect();
    let mut w = vec![1.0 / n as f64; n];
    let stump = GrowParams {
        max_depth: Some(1),
        min_samples_split: 2,
        max_features: None,
    };
    let mut trees = Vec::new();
    let mut alphas = Vec::new();
    for _ in 0..params.n_rounds {
        let tree = grow(x, &rows, &w, &y, stump, weighted_mean(&w, &y), None);
        let miss: Vec<bool> = (0..n)
            .map(|i| (vote(tree.predict(x.row(i))) >= 0.5) != x.labels()[i])
            .collect();
        let total: f64 = w.iter().sum();
        let err = miss.iter().zip(&w).filter(|(m, _)| **m).map(|(_, wi)| wi).sum::<f64>() / total;

        if err >= 0.5 {
            if trees.is_empty() {
                trees.push(tree);
                alphas.push(1.0);
            }
            break;
        }
        if err <= 1e-10 {
            let alpha = if trees.is_empty() {
                1.0
            } else {
                params.learning_rate * ((1.0 - 1e-10) / 1e-10_f64).ln()
            };
            trees.push(tree);
            alphas.push(alpha);
            break;
        }
        let alpha = params.learning_rate * ((1.0 - err) / err).ln();
        for (wi, m) in w.iter_mut().zip(&miss) {
            if *m {
                *wi *= alpha.exp();
            }
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|wi| *wi /= s);
        trees.push(tree);
        alphas.push(alpha);
    }
    (trees, alphas)
}

/// Weighted fraction of stump votes for the positive class.
pub(crate) fn adaboost_proba(trees: &[Tree], alphas: &[f64], row: &[f64]) -> f64 {
    let total: f64 = alphas.iter().sum();
    if total <= 0.0 {
        return 0.5;
    }
    let pos: f64 = trees
        .iter()
        .zip(alphas)
        .map(|(t, a)| a * if vote(t.predict(row)) >= 0.5 { 1.0 } else { 0.0 })
        .sum();
    pos / total
}

/// Logistic-loss boosting; each tree fits the residuals `y - p` and its leaves
/// take one Newton step `Σr / Σp(1-p)`.
pub(crate) fn fit_gradient_boosting(x: &FeatureMatrix, params: &GbParams) -> (f64, Vec<Tree>) {
    let n = x.n_rows();
    let y = targets(x);
    let prior = (y.iter().sum::<f64>() / n as f64).clamp(1e-12, 1.0 - 1e-12);
    let init = (prior / (1.0 - prior)).ln();
    let rows: Vec<usize> = (0..n).collect();
    let ones = vec![1.0; n];
    let grow_params = GrowParams {
        max_depth: Some(params.max_depth),
        min_samples_split: 2,
        max_features: None,
    };

    let mut f = vec![init; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    for _ in 0..params.n_rounds {
        let p: Vec<f64> = f.iter().map(|v| sigmoid(*v)).collect();
        let r: Vec<f64> = y.iter().zip(&p).map(|(yi, pi)| yi - pi).collect();
        let h: Vec<f64> = p.iter().map(|pi| pi * (1.0 - pi)).collect();
        let newton = |samples: &[usize]| {
            let num: f64 = samples.iter().map(|&i| r[i]).sum();
            let den: f64 = samples.iter().map(|&i| h[i]).sum();
            if den < 1e-12 {
                0.0
            } else {
                num / den
            }
        };
        let tree = grow(x, &rows, &ones, &r, grow_params, newton, None);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += params.learning_rate * tree.predict(x.row(i));
        }
        trees.push(tree);
    }
    (init, trees)
}

pub(crate) fn gradient_boosting_proba(init: f64, learning_rate: f64, trees: &[Tree], row: &[f64]) -> f64 {
    sigmoid(init + learning_rate * trees.iter().map(|t| t.predict(row)).sum::<f64>())
}

/// Bootstrapped Gini trees, each with its own derived random stream so the
/// forest is identical whether trees are grown in parallel or in sequence.
pub(crate) fn fit_random_forest(x: &FeatureMatrix, params: &RfParams, seed: u64) -> Vec<Tree> {
    let n = x.n_rows();
    let p = x.n_cols();
    let y = targets(x);
    let max_features = params
        .max_features
        .unwrap_or_else(|| (p as f64).sqrt().ceil() as usize)
        .clamp(1, p.max(1));
    let grow_params = GrowParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        max_features: Some(max_features),
    };
    (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, "rf-tree", t as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let yb: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let wb = vec![1.0; n];
            grow(x, &rows, &wb, &yb, grow_params, weighted_mean(&wb, &yb), Some(&mut rng))
        })
        .collect()
}

pub(crate) fn random_forest_proba(trees: &[Tree], row: &[f64]) -> f64 {
    if trees.is_empty() {
        return 0.5;
    }
    trees.iter().map(|t| vote(t.predict(row))).sum::<f64>() / trees.len() as f64
}
