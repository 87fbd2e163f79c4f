use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::cohort::{AgeBin, PatientRecord, Race, Sex, Stage};
use crate::note_parser::{Domain, ExerciseLexicon};
use crate::outcomes::StageOutcome;

/// Demographic columns appended after the exercise indicators.
pub const DEMOGRAPHIC_COLUMNS: [&str; 5] = ["SEX_FEMALE", "RACE_WHITE", "AGE_UNDER_40", "AGE_40_60", "AGE_OVER_60"];

/// Dense row-major design matrix with binary labels (`true` = improved).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    column_names: Vec<String>,
    row_ids: Vec<String>,
    data: Vec<f64>,
    labels: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(
        column_names: Vec<String>,
        row_ids: Vec<String>,
        rows: Vec<Vec<f64>>,
        labels: Vec<bool>,
    ) -> Result<Self, ModelError> {
        let p = column_names.len();
        if rows.len() != labels.len() || rows.len() != row_ids.len() {
            return Err(ModelError::DimensionMismatch {
                expected: rows.len(),
                found: labels.len().min(row_ids.len()),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != p {
                return Err(ModelError::DimensionMismatch {
                    expected: p,
                    found: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteFeature { row: i, column: j });
            }
            data.extend(row);
        }
        Ok(FeatureMatrix {
            column_names,
            row_ids,
            data,
            labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }

    /// New matrix made of the given rows, repeats allowed.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            column_names: self.column_names.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
            data,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Same rows with replaced labels (used for permutation nulls).
    pub fn with_labels(&self, labels: Vec<bool>) -> Result<FeatureMatrix, ModelError> {
        if labels.len() != self.n_rows() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_rows(),
                found: labels.len(),
            });
        }
        Ok(FeatureMatrix { labels, ..self.clone() })
    }
}

fn demographic_values(record: &PatientRecord) -> [f64; 5] {
    let d = &record.demographics;
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    [
        ind(d.sex == Sex::Female),
        ind(d.race == Race::White),
        ind(d.age_bin == AgeBin::Under40),
        ind(d.age_bin == AgeBin::From40To60),
        ind(d.age_bin == AgeBin::Over60),
    ]
}

/// One row per labelled patient of `(domain, stage)`: exercise indicators in
/// lexicon order, then [`DEMOGRAPHIC_COLUMNS`]. Rows follow the outcome order.
pub fn build_features(
    records: &[PatientRecord],
    outcomes: &[StageOutcome],
    lexicon: &ExerciseLexicon,
    stage: Stage,
    domain: Domain,
) -> Result<FeatureMatrix, ModelError> {
    let index: HashMap<&str, &PatientRecord> = records.iter().map(|r| (r.patient_id.as_str(), r)).collect();
    let mut column_names: Vec<String> = lexicon.canonical_names().map(str::to_string).collect();
    column_names.extend(DEMOGRAPHIC_COLUMNS.iter().map(|c| c.to_string()));

    let mut ids = Vec::new();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for o in outcomes.iter().filter(|o| o.stage == stage && o.domain == domain) {
        let record = index
            .get(o.patient_id.as_str())
            .ok_or_else(|| ModelError::MissingRecord(o.patient_id.clone()))?;
        let mut row: Vec<f64> = lexicon
            .canonical_names()
            .map(|name| if record.exposed(stage, name) { 1.0 } else { 0.0 })
            .collect();
        row.extend(demographic_values(record));
        ids.push(o.patient_id.clone());
        rows.push(row);
        labels.push(o.label.is_improved());
    }
    if rows.is_empty() {
        return Err(ModelError::EmptyPopulation);
    }
    FeatureMatrix::new(column_names, ids, rows, labels)
}
