//! Threshold metrics, ROC curves and vertical ROC averaging.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// How per-class precision/recall/F1 are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Weighting {
    /// Class weights proportional to 1 / class frequency.
    #[default]
    InverseFrequency,
    /// Class weights proportional to class frequency (support).
    Support,
}

impl Weighting {
    pub fn code(self) -> &'static str {
        match self {
            Weighting::InverseFrequency => "INVERSE_FREQUENCY",
            Weighting::Support => "SUPPORT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// NaN when only one class is present.
    pub auc: f64,
    pub accuracy: f64,
    pub weighting: Weighting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 for each class, negative class first.
pub fn per_class_metrics(predicted: &[bool], labels: &[bool]) -> [ClassMetrics; 2] {
    let mut out = [ClassMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        support: 0,
    }; 2];
    for (c, slot) in [false, true].into_iter().zip(out.iter_mut()) {
        let tp = predicted
            .iter()
            .zip(labels)
            .filter(|(p, l)| **p == c && **l == c)
            .count();
        let pred_c = predicted.iter().filter(|p| **p == c).count();
        let support = labels.iter().filter(|l| **l == c).count();
        let precision = ratio(tp, pred_c);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        *slot = ClassMetrics {
            precision,
            recall,
            f1,
            support,
        };
    }
    out
}

/// Metrics at `score >= threshold`, combined across classes with the chosen
/// weighting. Accuracy is unweighted.
pub fn evaluate(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
    weighting: Weighting,
) -> Result<EvalMetrics, ModelError> {
    if scores.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if scores.len() != labels.len() {
        return Err(ModelError::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let predicted: Vec<bool> = scores.iter().map(|s| *s >= threshold).collect();
    let classes = per_class_metrics(&predicted, labels);

    let raw: Vec<f64> = classes
        .iter()
        .map(|c| match (c.support, weighting) {
            (0, _) => 0.0,
            (n, Weighting::InverseFrequency) => 1.0 / n as f64,
            (n, Weighting::Support) => n as f64,
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let combine = |f: fn(&ClassMetrics) -> f64| classes.iter().zip(&raw).map(|(c, w)| f(c) * w / total).sum::<f64>();

    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    let auc = match roc_curve(scores, labels) {
        Ok(r) => r.auc,
        Err(_) => f64::NAN,
    };
    Ok(EvalMetrics {
        precision: combine(|c| c.precision),
        recall: combine(|c| c.recall),
        f1: combine(|c| c.f1),
        auc,
        accuracy: correct as f64 / labels.len() as f64,
        weighting,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Trapezoidal area under a polyline.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum()
}

/// ROC curve with one point per distinct score; tied scores move both rates
/// in one diagonal step.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve, ModelError> {
    if scores.len() != labels.len() {
        return Err(ModelError::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ModelError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    let auc = trapezoid(&points);
    Ok(RocCurve { points, auc })
}

impl RocCurve {
    /// TPR at `fpr` by linear interpolation; on a vertical segment the
    /// highest TPR at that FPR is used.
    pub fn interpolate(&self, fpr: f64) -> f64 {
        let pts = &self.points;
        let Some(hi) = pts.iter().position(|p| p.0 > fpr) else {
            return pts.last().map_or(0.0, |p| p.1);
        };
        if hi == 0 {
            return 0.0;
        }
        let (x0, y0) = pts[hi - 1];
        let (x1, y1) = pts[hi];
        y0 + (y1 - y0) * (fpr - x0) / (x1 - x0)
    }
}

/// Fixed FPR grid `0, 1/(n-1), …, 1`.
pub fn fpr_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Vertically averages curves on `grid`. Returns the mean curve (with
/// TPR forced to 0 at FPR 0) and the per-point population standard deviation.
pub fn average_rocs(curves: &[RocCurve], grid: &[f64]) -> (RocCurve, Vec<f64>) {
    let k = curves.len() as f64;
    let mut mean = Vec::with_capacity(grid.len());
    let mut sd = Vec::with_capacity(grid.len());
    for (gi, &x) in grid.iter().enumerate() {
        let tprs: Vec<f64> = curves
            .iter()
            .map(|c| if gi == 0 { 0.0 } else { c.interpolate(x) })
            .collect();
        let m = tprs.iter().sum::<f64>() / k;
        let v = tprs.iter().map(|t| (t - m) * (t - m)).sum::<f64>() / k;
        mean.push((x, m));
        sd.push(v.sqrt());
    }
    let auc = trapezoid(&mean);
    (RocCurve { points: mean, auc }, sd)
}
