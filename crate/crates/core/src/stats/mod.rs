//! Statistical engine: paired nonparametric tests across timepoints and the
//! exercise association screen over 2x2 tables with exact inference.

mod contingency;
mod nonparametric;
mod odds_ratio;
mod screen;
pub mod special;
mod table;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contingency::{chi_square_test, fisher_exact};
pub use nonparametric::{
    friedman_exact, friedman_rank_sums, friedman_test, midranks, wilcoxon_signed_rank, WILCOXON_EXACT_MAX_N,
};
pub use odds_ratio::{
    conditional_mle_odds_ratio, sample_odds_ratio, NoncentralHypergeometric, OddsRatioEstimate, OrEstimator,
};
pub use screen::{
    association_screen, screen_features, screen_report_rows, test_table, write_association_csv, AssociationResult,
    AssociationResultParts, CellRule, Feature, ScreenConfig,
};
pub use table::{build_table, ContingencyTable2x2};

#[derive(Error, Debug, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 rows, found {0}")]
    InsufficientRows(usize),

    #[error("all paired differences are zero")]
    NoNonzeroDifferences,

    #[error("table has a zero row or column margin")]
    DegenerateMargin,

    #[error("odds ratio undefined: a*d and b*c are both zero")]
    UndefinedOddsRatio,

    #[error("contingency table is empty")]
    EmptyTable,

    #[error("outcome for patient {0:?} has no matching record")]
    MissingRecord(String),

    #[error("{0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Friedman,
    FriedmanExact,
    WilcoxonExact,
    WilcoxonNormal,
    Chi2Pearson,
    Chi2Yates,
    FisherExact,
}

impl Method {
    pub fn code(self) -> &'static str {
        match self {
            Method::Friedman => "FRIEDMAN",
            Method::FriedmanExact => "FRIEDMAN_EXACT",
            Method::WilcoxonExact => "WILCOXON_EXACT",
            Method::WilcoxonNormal => "WILCOXON_NORMAL",
            Method::Chi2Pearson => "CHI2_PEARSON",
            Method::Chi2Yates => "CHI2_YATES",
            Method::FisherExact => "FISHER_EXACT",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Absent for pure exact tests.
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub method: Method,
}

impl TestResult {
    pub fn new(statistic: Option<f64>, p_value: f64, method: Method) -> Self {
        TestResult {
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            method,
        }
    }
}
