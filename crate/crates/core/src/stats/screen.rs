//! Exercise / demographic association screen for one domain and stage.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::table::count_table;
use super::{
    chi_square_test, conditional_mle_odds_ratio, fisher_exact, sample_odds_ratio, ContingencyTable2x2,
    OddsRatioEstimate, StatsError, TestResult,
};
use crate::cohort::{AgeBin, PatientRecord, Race, Sex, Stage};
use crate::note_parser::ExerciseLexicon;
use crate::outcomes::StageOutcome;

/// A binary characteristic that splits the stage population into an
/// "exposed" column and the rest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Feature {
    Exercise(String),
    Sex(Sex),
    Race(Race),
    Age(AgeBin),
}

impl Feature {
    pub fn applies(&self, record: &PatientRecord, stage: Stage) -> bool {
        let demo = &record.demographics;
        match self {
            Feature::Exercise(name) => record.exposed(stage, name),
            Feature::Sex(s) => demo.sex == *s,
            Feature::Race(r) => demo.race == *r,
            Feature::Age(b) => demo.age_bin == *b,
        }
    }

    /// Category column of the report (`SEX`, `AGE`, or the exercise name).
    pub fn name(&self) -> &str {
        match self {
            Feature::Exercise(name) => name,
            Feature::Sex(_) => "SEX",
            Feature::Race(_) => "RACE",
            Feature::Age(_) => "AGE",
        }
    }

    /// Level column of the report (`YES` for exercises).
    pub fn level(&self) -> &'static str {
        match self {
            Feature::Exercise(_) => "YES",
            Feature::Sex(Sex::Female) => "FEMALE",
            Feature::Sex(Sex::Male) => "MALE",
            Feature::Race(Race::White) => "WHITE",
            Feature::Race(Race::NotWhite) => "NOT_WHITE",
            Feature::Age(b) => b.label(),
        }
    }

    /// Demographic levels followed by every lexicon exercise, in lexicon order.
    pub fn all(lexicon: &ExerciseLexicon) -> Vec<Feature> {
        let mut out = vec![Feature::Sex(Sex::Female), Feature::Race(Race::White)];
        out.extend(AgeBin::ALL.iter().map(|b| Feature::Age(*b)));
        out.extend(lexicon.canonical_names().map(|n| Feature::Exercise(n.to_string())));
        out
    }
}

/// When the exact test replaces chi-square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRule {
    /// Any observed cell count below the minimum.
    Observed,
    /// Any expected cell count below the minimum.
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenConfig {
    pub p_threshold: f64,
    pub yates: bool,
    pub cell_rule: CellRule,
    pub min_cell: u64,
    pub level: f64,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        ScreenConfig {
            p_threshold: 0.3,
            yates: true,
            cell_rule: CellRule::Observed,
            min_cell: 5,
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    pub feature: Feature,
    pub table: ContingencyTable2x2,
    pub test: TestResult,
    pub or: OddsRatioEstimate,
    pub sample_or: Option<OddsRatioEstimate>,
}

fn needs_exact(table: &ContingencyTable2x2, cfg: &ScreenConfig) -> bool {
    match cfg.cell_rule {
        CellRule::Observed => table.min_cell() < cfg.min_cell,
        CellRule::Expected => table.expected().iter().any(|e| *e < cfg.min_cell as f64),
    }
}

/// Tests one table under the screen's method-selection rule.
pub fn test_table(table: &ContingencyTable2x2, cfg: &ScreenConfig) -> AssociationResultParts {
    let test = if needs_exact(table, cfg) {
        fisher_exact(table)
    } else {
        chi_square_test(table, cfg.yates).unwrap_or_else(|_| fisher_exact(table))
    };
    AssociationResultParts {
        test,
        or: conditional_mle_odds_ratio(table, cfg.level),
        sample_or: sample_odds_ratio(table).ok(),
    }
}

/// Test and estimates for one table, without the feature.
pub struct AssociationResultParts {
    pub test: TestResult,
    pub or: OddsRatioEstimate,
    pub sample_or: Option<OddsRatioEstimate>,
}

/// Tests every demographic level and exercise, without filtering. Results
/// are sorted by p-value, ties kept in feature order.
pub fn screen_features(
    outcomes: &[StageOutcome],
    records: &[PatientRecord],
    lexicon: &ExerciseLexicon,
    stage: Stage,
    cfg: &ScreenConfig,
) -> Result<Vec<AssociationResult>, StatsError> {
    if outcomes.is_empty() {
        return Err(StatsError::InvalidInput("empty stage population".into()));
    }
    let index: HashMap<&str, &PatientRecord> = records.iter().map(|r| (r.patient_id.as_str(), r)).collect();
    let labelled: Vec<(&PatientRecord, bool)> = outcomes
        .iter()
        .map(|o| {
            index
                .get(o.patient_id.as_str())
                .map(|r| (*r, o.label.is_improved()))
                .ok_or_else(|| StatsError::MissingRecord(o.patient_id.clone()))
        })
        .collect::<Result<_, _>>()?;

    let mut results: Vec<AssociationResult> = Feature::all(lexicon)
        .into_par_iter()
        .map(|feature| {
            let table = count_table(labelled.iter().copied(), &feature, stage)?;
            let parts = test_table(&table, cfg);
            Ok(AssociationResult {
                feature,
                table,
                test: parts.test,
                or: parts.or,
                sample_or: parts.sample_or,
            })
        })
        .collect::<Result<_, StatsError>>()?;
    results.sort_by(|x, y| x.test.p_value.total_cmp(&y.test.p_value));
    Ok(results)
}

/// Screen retaining features with `p < cfg.p_threshold`, sorted by p-value.
pub fn association_screen(
    outcomes: &[StageOutcome],
    records: &[PatientRecord],
    lexicon: &ExerciseLexicon,
    stage: Stage,
    cfg: &ScreenConfig,
) -> Result<Vec<AssociationResult>, StatsError> {
    let mut all = screen_features(outcomes, records, lexicon, stage, cfg)?;
    all.retain(|r| r.test.p_value < cfg.p_threshold);
    Ok(all)
}

fn fmt_num(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.decimals$}")
    }
}

/// Report rows in the CSV column order.
pub fn screen_report_rows(results: &[AssociationResult]) -> Vec<[String; 11]> {
    results
        .iter()
        .map(|r| {
            [
                r.feature.name().to_string(),
                r.feature.level().to_string(),
                r.table.a.to_string(),
                fmt_num(r.table.improved_pct(), 1),
                r.table.c.to_string(),
                fmt_num(r.table.not_improved_pct(), 1),
                fmt_num(r.test.p_value, 6),
                r.test.method.code().to_string(),
                fmt_num(r.or.or_value, 4),
                fmt_num(r.or.ci_low, 4),
                fmt_num(r.or.ci_high, 4),
            ]
        })
        .collect()
}

pub const ASSOCIATION_HEADER: [&str; 11] = [
    "feature",
    "level",
    "improved_n",
    "improved_pct",
    "notimproved_n",
    "notimproved_pct",
    "p_value",
    "method",
    "or",
    "ci_low",
    "ci_high",
];

pub fn write_association_csv<W: Write>(out: W, results: &[AssociationResult]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(ASSOCIATION_HEADER)?;
    for row in screen_report_rows(results) {
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
