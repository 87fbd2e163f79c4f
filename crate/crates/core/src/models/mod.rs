//! From-scratch binary classifiers for stage improvement, with stratified
//! cross-validation, training-fold oversampling, weighted metrics and ROC
//! averaging.
//!
//! Five model kinds are available (LR, ADB, SVM, GB, RF). Training rows are
//! put in a canonical order before fitting, so a model depends only on the
//! multiset of training rows and its seed.
//!
//! The SVM probability is a logistic squashing of the signed margin. It is not
//! calibrated; it preserves rank order, which is all ROC analysis needs.

mod cv;
mod ensemble;
mod features;
mod linear;
mod metrics;
mod tree;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv::{cross_validate, oversample, oversample_indices, stratified_kfold, CvConfig, CvReport, FoldResult};
pub use features::{build_features, FeatureMatrix, DEMOGRAPHIC_COLUMNS};
pub use metrics::{
    average_rocs, evaluate, fpr_grid, per_class_metrics, roc_curve, trapezoid, ClassMetrics, EvalMetrics, RocCurve,
    Weighting,
};
pub use tree::{Node, Tree};

/// Version written into persisted model documents.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Error, Debug, PartialEq)]
pub enum ModelError {
    #[error("stage population is empty")]
    EmptyPopulation,

    #[error("no scores to evaluate")]
    EmptyInput,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("class {class} has {count} members, fewer than the {k} folds")]
    ClassTooSmall { class: bool, count: usize, k: usize },

    #[error("non-finite feature at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: usize },

    #[error("expected dimension {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("outcome for patient {0:?} has no matching record")]
    MissingRecord(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),

    #[error("model document: {0}")]
    Serialization(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "ADB")]
    Adb,
    #[serde(rename = "SVM")]
    Svm,
    #[serde(rename = "GB")]
    Gb,
    #[serde(rename = "RF")]
    Rf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Lr,
        ModelKind::Adb,
        ModelKind::Svm,
        ModelKind::Gb,
        ModelKind::Rf,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ModelKind::Lr => "LR",
            ModelKind::Adb => "ADB",
            ModelKind::Svm => "SVM",
            ModelKind::Gb => "GB",
            ModelKind::Rf => "RF",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::InvalidHyperparameter(format!("unknown model kind {s:?}")))
    }
}

/// L2 logistic regression. `lambda > 0`, `max_iter ≥ 1`, `tol > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrParams {
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LrParams {
    fn default() -> Self {
        LrParams {
            lambda: 1.0,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

/// Linear SVM. `lambda > 0`, `epochs ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 0.01,
            epochs: 1000,
        }
    }
}

/// SAMME AdaBoost over stumps. `n_rounds ≥ 1`, `learning_rate > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdbParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
}

impl Default for AdbParams {
    fn default() -> Self {
        AdbParams {
            n_rounds: 100,
            learning_rate: 1.0,
        }
    }
}

/// Gradient boosting. `n_rounds ≥ 1`, `learning_rate ∈ (0, 1]`, `max_depth ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
}

impl Default for GbParams {
    fn default() -> Self {
        GbParams {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
        }
    }
}

/// Random forest. `n_trees ≥ 1`, `min_samples_split ≥ 2`; `max_features`
/// defaults to `⌈√p⌉`, `max_depth` to unlimited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RfParams {
    pub n_trees: usize,
    pub max_features: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_trees: 200,
            max_features: None,
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Hyperparameters {
    #[serde(rename = "LR")]
    Lr(LrParams),
    #[serde(rename = "ADB")]
    Adb(AdbParams),
    #[serde(rename = "SVM")]
    Svm(SvmParams),
    #[serde(rename = "GB")]
    Gb(GbParams),
    #[serde(rename = "RF")]
    Rf(RfParams),
}

impl Hyperparameters {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Lr => Hyperparameters::Lr(LrParams::default()),
            ModelKind::Adb => Hyperparameters::Adb(AdbParams::default()),
            ModelKind::Svm => Hyperparameters::Svm(SvmParams::default()),
            ModelKind::Gb => Hyperparameters::Gb(GbParams::default()),
            ModelKind::Rf => Hyperparameters::Rf(RfParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparameters::Lr(_) => ModelKind::Lr,
            Hyperparameters::Adb(_) => ModelKind::Adb,
            Hyperparameters::Svm(_) => ModelKind::Svm,
            Hyperparameters::Gb(_) => ModelKind::Gb,
            Hyperparameters::Rf(_) => ModelKind::Rf,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyperparameter(m.to_string()));
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Hyperparameters::Lr(p) if !pos(p.lambda) || p.max_iter == 0 || !pos(p.tol) => {
                bad("LR needs lambda > 0, max_iter >= 1, tol > 0")
            }
            Hyperparameters::Svm(p) if !pos(p.lambda) || p.epochs == 0 => bad("SVM needs lambda > 0, epochs >= 1"),
            Hyperparameters::Adb(p) if p.n_rounds == 0 || !pos(p.learning_rate) => {
                bad("ADB needs n_rounds >= 1, learning_rate > 0")
            }
            Hyperparameters::Gb(p)
                if p.n_rounds == 0 || !pos(p.learning_rate) || p.learning_rate > 1.0 || p.max_depth == 0 =>
            {
                bad("GB needs n_rounds >= 1, learning_rate in (0, 1], max_depth >= 1")
            }
            Hyperparameters::Rf(p)
                if p.n_trees == 0 || p.min_samples_split < 2 || p.max_features == Some(0) || p.max_depth == Some(0) =>
            {
                bad("RF needs n_trees >= 1, min_samples_split >= 2, max_features >= 1, max_depth >= 1")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hyperparameters: Hyperparameters,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        ModelSpec {
            hyperparameters: Hyperparameters::default_for(kind),
            seed,
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.hyperparameters.kind()
    }
}

/// Learned parameters, one variant per model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Fitted {
    Linear {
        weights: Vec<f64>,
        bias: f64,
    },
    AdaBoost {
        stumps: Vec<Tree>,
        alphas: Vec<f64>,
    },
    Boosting {
        init: f64,
        learning_rate: f64,
        trees: Vec<Tree>,
    },
    Forest {
        trees: Vec<Tree>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub n_features: usize,
    pub fitted: Fitted,
}

fn canonical_order(x: &FeatureMatrix) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.n_rows()).collect();
    idx.sort_by(|&i, &j| {
        x.row(i)
            .iter()
            .zip(x.row(j))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
            .then(x.labels()[i].cmp(&x.labels()[j]))
    });
    idx
}

/// Fits a model on all rows of `x` using its labels.
pub fn train(spec: &ModelSpec, x: &FeatureMatrix) -> Result<Model, ModelError> {
    spec.hyperparameters.validate()?;
    let n_pos = x.n_positive();
    if x.n_rows() < 2 || n_pos == 0 || n_pos == x.n_rows() {
        return Err(ModelError::SingleClass);
    }
    let x = x.select(&canonical_order(x));

    let fitted = match spec.hyperparameters {
        Hyperparameters::Lr(p) => {
            let (weights, bias) = linear::fit_logistic(&x, &p);
            Fitted::Linear { weights, bias }
        }
        Hyperparameters::Svm(p) => {
            let (weights, bias) = linear::fit_svm(&x, &p);
            Fitted::Linear { weights, bias }
        }
        Hyperparameters::Adb(p) => {
            let (stumps, alphas) = ensemble::fit_adaboost(&x, &p);
            Fitted::AdaBoost { stumps, alphas }
        }
        Hyperparameters::Gb(p) => {
            let (init, trees) = ensemble::fit_gradient_boosting(&x, &p);
            Fitted::Boosting {
                init,
                learning_rate: p.learning_rate,
                trees,
            }
        }
        Hyperparameters::Rf(p) => Fitted::Forest {
            trees: ensemble::fit_random_forest(&x, &p, spec.seed),
        },
    };
    Ok(Model {
        spec: *spec,
        n_features: x.n_cols(),
        fitted,
    })
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    /// Real-valued decision score: the margin for linear models, otherwise
    /// the probability.
    pub fn decision_score(&self, row: &[f64]) -> Result<f64, ModelError> {
        if row.len() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                found: row.len(),
            });
        }
        Ok(match &self.fitted {
            Fitted::Linear { weights, bias } => linear::linear_score(weights, *bias, row),
            Fitted::AdaBoost { stumps, alphas } => ensemble::adaboost_proba(stumps, alphas, row),
            Fitted::Boosting {
                init,
                learning_rate,
                trees,
            } => ensemble::gradient_boosting_proba(*init, *learning_rate, trees, row),
            Fitted::Forest { trees } => ensemble::random_forest_proba(trees, row),
        })
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64, ModelError> {
        let s = self.decision_score(row)?;
        Ok(match self.fitted {
            Fitted::Linear { .. } => linear::sigmoid(s),
            _ => s,
        })
    }

    pub fn predict_proba_all(&self, x: &FeatureMatrix) -> Result<Vec<f64>, ModelError> {
        x.rows().map(|r| self.predict_proba(r)).collect()
    }

    /// Versioned JSON document.
    pub fn to_json(&self) -> String {
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Model, ModelError> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| ModelError::Serialization(e.to_string()))?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(ModelError::UnsupportedVersion(header.format_version));
        }
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| ModelError::Serialization(e.to_string()))?;
        Ok(doc.model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    model: Model,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> FeatureMatrix {
        let p = rows[0].len();
        let n = rows.len();
        FeatureMatrix::new(
            (0..p).map(|j| format!("f{j}")).collect(),
            (0..n).map(|i| format!("r{i}")).collect(),
            rows,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn lr_separable_toy_set() {
        let rows = vec![
            vec![0.0, 0.0],
            vec![0.2, 0.1],
            vec![0.1, 0.3],
            vec![3.0, 3.0],
            vec![3.2, 2.9],
            vec![2.8, 3.1],
        ];
        let x = matrix(rows, vec![false, false, false, true, true, true]);
        let m = train(&ModelSpec::new(ModelKind::Lr, 0), &x).unwrap();
        let probs = m.predict_proba_all(&x).unwrap();
        assert!(probs.iter().zip(x.labels()).all(|(p, l)| (*p >= 0.5) == *l));
    }

    #[test]
    fn zero_weight_lr_is_one_half() {
        let m = Model {
            spec: ModelSpec::new(ModelKind::Lr, 0),
            n_features: 3,
            fitted: Fitted::Linear {
                weights: vec![0.0; 3],
                bias: 0.0,
            },
        };
        assert_eq!(m.predict_proba(&[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert_eq!(
            m.predict_proba(&[1.0]),
            Err(ModelError::DimensionMismatch { expected: 3, found: 1 })
        );
    }

    #[test]
    fn single_class_rejected() {
        let x = matrix(vec![vec![0.0], vec![1.0]], vec![true, true]);
        for kind in ModelKind::ALL {
            assert_eq!(train(&ModelSpec::new(kind, 1), &x), Err(ModelError::SingleClass));
        }
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let x = matrix(vec![vec![0.0], vec![1.0]], vec![true, false]);
        let spec = ModelSpec {
            hyperparameters: Hyperparameters::Gb(GbParams {
                learning_rate: 2.0,
                ..Default::default()
            }),
            seed: 0,
        };
        assert!(matches!(train(&spec, &x), Err(ModelError::InvalidHyperparameter(_))));
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let x = matrix(
            vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 0.0]],
            vec![false, true, true, false],
        );
        for kind in ModelKind::ALL {
            let m = train(&ModelSpec::new(kind, 9), &x).unwrap();
            let back = Model::from_json(&m.to_json()).unwrap();
            assert_eq!(back, m);
        }
        let text = r#"{"format_version": 99, "model": {}}"#;
        assert_eq!(Model::from_json(text), Err(ModelError::UnsupportedVersion(99)));
    }

    #[test]
    fn kind_codes_parse() {
        for kind in ModelKind::ALL {
            assert_eq!(kind.code().parse::<ModelKind>().unwrap(), kind);
        }
        assert!("xgb".parse::<ModelKind>().is_err());
    }
}
