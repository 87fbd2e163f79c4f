//! Stratified folds, minority oversampling and cross-validation.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{average_rocs, evaluate, fpr_grid, roc_curve, EvalMetrics, RocCurve, Weighting};
use super::{train, FeatureMatrix, ModelError, ModelSpec};
use crate::rng::{derive_seed, stream};

/// Splits indices into `k` folds keeping each class spread evenly: every
/// class is shuffled and dealt round-robin, the deal continuing where the
/// previous class stopped. Each fold is returned sorted.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, ModelError> {
    if k < 2 {
        return Err(ModelError::InvalidHyperparameter("k must be at least 2".into()));
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in [true, false] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(ModelError::ClassTooSmall {
                class,
                count: members.len(),
                k,
            });
        }
        members.shuffle(&mut stream(seed, "kfold", class as u64));
        for i in members {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Indices of a class-balanced sample: every original index once, then
/// minority indices drawn with replacement until both classes match.
pub fn oversample_indices(labels: &[bool], seed: u64) -> Result<Vec<usize>, ModelError> {
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(ModelError::SingleClass);
    }
    let (minority, deficit) = if pos.len() < neg.len() {
        (&pos, neg.len() - pos.len())
    } else {
        (&neg, pos.len() - neg.len())
    };
    let mut rng = stream(seed, "oversample", 0);
    let mut out: Vec<usize> = (0..labels.len()).collect();
    out.extend((0..deficit).map(|_| minority[rng.random_range(0..minority.len())]));
    Ok(out)
}

pub fn oversample(x: &FeatureMatrix, seed: u64) -> Result<FeatureMatrix, ModelError> {
    Ok(x.select(&oversample_indices(x.labels(), seed)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k: usize,
    pub oversample: bool,
    pub threshold: f64,
    pub weighting: Weighting,
    /// Points on the FPR grid used for ROC averaging.
    pub grid_points: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 3,
            oversample: true,
            threshold: 0.5,
            weighting: Weighting::InverseFrequency,
            grid_points: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_indices: Vec<usize>,
    /// Training indices after oversampling (repeats included).
    pub train_indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub metrics: EvalMetrics,
    pub roc: RocCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub per_fold: Vec<FoldResult>,
    /// Arithmetic means of the fold metrics.
    pub aggregate: EvalMetrics,
    pub mean_roc: RocCurve,
    pub roc_sd: Vec<f64>,
}

fn mean_metrics(folds: &[FoldResult], weighting: Weighting) -> EvalMetrics {
    let k = folds.len() as f64;
    let avg = |f: fn(&EvalMetrics) -> f64| folds.iter().map(|r| f(&r.metrics)).sum::<f64>() / k;
    EvalMetrics {
        precision: avg(|m| m.precision),
        recall: avg(|m| m.recall),
        f1: avg(|m| m.f1),
        auc: avg(|m| m.auc),
        accuracy: avg(|m| m.accuracy),
        weighting,
    }
}

/// Stratified k-fold cross-validation. Only the training part of each fold
/// is oversampled; fold models use seeds derived from `spec.seed`.
pub fn cross_validate(spec: &ModelSpec, x: &FeatureMatrix, cfg: &CvConfig, seed: u64) -> Result<CvReport, ModelError> {
    let folds = stratified_kfold(x.labels(), cfg.k, derive_seed(seed, "cv-folds", 0))?;
    let per_fold = (0..cfg.k)
        .into_par_iter()
        .map(|f| {
            let test = folds[f].clone();
            let mut in_test = vec![false; x.n_rows()];
            test.iter().for_each(|&i| in_test[i] = true);
            let base: Vec<usize> = (0..x.n_rows()).filter(|&i| !in_test[i]).collect();
            let train_idx = if cfg.oversample {
                let labels: Vec<bool> = base.iter().map(|&i| x.labels()[i]).collect();
                oversample_indices(&labels, derive_seed(seed, "cv-oversample", f as u64))?
                    .into_iter()
                    .map(|j| base[j])
                    .collect()
            } else {
                base
            };
            let fold_spec = ModelSpec {
                seed: derive_seed(spec.seed, "cv-model", f as u64),
                ..*spec
            };
            let model = train(&fold_spec, &x.select(&train_idx))?;
            let test_x = x.select(&test);
            let scores = model.predict_proba_all(&test_x)?;
            let metrics = evaluate(&scores, test_x.labels(), cfg.threshold, cfg.weighting)?;
            let roc = roc_curve(&scores, test_x.labels())?;
            Ok(FoldResult {
                test_indices: test,
                train_indices: train_idx,
                scores,
                metrics,
                roc,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;

    let curves: Vec<RocCurve> = per_fold.iter().map(|f| f.roc.clone()).collect();
    let (mean_roc, roc_sd) = average_rocs(&curves, &fpr_grid(cfg.grid_points.max(2)));
    Ok(CvReport {
        aggregate: mean_metrics(&per_fold, cfg.weighting),
        per_fold,
        mean_roc,
        roc_sd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_labels_ten_positive() {
        let labels: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let folds = stratified_kfold(&labels, 3, 4).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
        for f in &folds {
            assert_eq!(f.len(), 10);
            let pos = f.iter().filter(|&&i| labels[i]).count();
            assert!((3..=4).contains(&pos));
        }
        assert_eq!(folds, stratified_kfold(&labels, 3, 4).unwrap());
    }

    #[test]
    fn one_class_is_too_small() {
        assert!(matches!(
            stratified_kfold(&[false; 9], 3, 0),
            Err(ModelError::ClassTooSmall {
                class: true,
                count: 0,
                k: 3
            })
        ));
    }

    #[test]
    fn oversample_balances_minority_only() {
        let labels: Vec<bool> = (0..100).map(|i| i < 15).collect();
        let idx = oversample_indices(&labels, 3).unwrap();
        let pos = idx.iter().filter(|&&i| labels[i]).count();
        assert_eq!((pos, idx.len() - pos), (85, 85));
        assert_eq!(&idx[..100], &(0..100).collect::<Vec<_>>()[..]);
        assert!(idx[100..].iter().all(|&i| labels[i]));

        let balanced = [true, false, true, false];
        assert_eq!(oversample_indices(&balanced, 3).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(oversample_indices(&[true, true], 0), Err(ModelError::SingleClass));
    }
}
