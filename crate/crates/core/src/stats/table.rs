use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Feature, StatsError};
use crate::cohort::{PatientRecord, Stage};
use crate::outcomes::StageOutcome;

/// Improvement status by exposure.
///
/// ```text
///                 exposed  unexposed
/// improved           a         b
/// not improved       c         d
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable2x2 {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Result<Self, StatsError> {
        if a + b + c + d == 0 {
            return Err(StatsError::EmptyTable);
        }
        Ok(ContingencyTable2x2 { a, b, c, d })
    }

    pub fn n(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn improved(&self) -> u64 {
        self.a + self.b
    }

    pub fn not_improved(&self) -> u64 {
        self.c + self.d
    }

    pub fn exposed(&self) -> u64 {
        self.a + self.c
    }

    pub fn unexposed(&self) -> u64 {
        self.b + self.d
    }

    pub fn cells(&self) -> [u64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn min_cell(&self) -> u64 {
        self.cells().into_iter().min().unwrap_or(0)
    }

    /// Expected counts under independence, in `[a, b, c, d]` order.
    pub fn expected(&self) -> [f64; 4] {
        let n = self.n() as f64;
        let (r1, r2) = (self.improved() as f64, self.not_improved() as f64);
        let (c1, c2) = (self.exposed() as f64, self.unexposed() as f64);
        [r1 * c1 / n, r1 * c2 / n, r2 * c1 / n, r2 * c2 / n]
    }

    pub fn transpose(&self) -> Self {
        ContingencyTable2x2 {
            a: self.a,
            b: self.c,
            c: self.b,
            d: self.d,
        }
    }

    pub fn swap_rows(&self) -> Self {
        ContingencyTable2x2 {
            a: self.c,
            b: self.d,
            c: self.a,
            d: self.b,
        }
    }

    pub fn swap_columns(&self) -> Self {
        ContingencyTable2x2 {
            a: self.b,
            b: self.a,
            c: self.d,
            d: self.c,
        }
    }

    /// Share of the improved group that is exposed, in percent.
    pub fn improved_pct(&self) -> f64 {
        pct(self.a, self.improved())
    }

    pub fn not_improved_pct(&self) -> f64 {
        pct(self.c, self.not_improved())
    }
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

pub(crate) fn count_table<'a>(
    labelled: impl IntoIterator<Item = (&'a PatientRecord, bool)>,
    feature: &Feature,
    stage: Stage,
) -> Result<ContingencyTable2x2, StatsError> {
    let mut cells = [0u64; 4];
    for (record, improved) in labelled {
        let exposed = feature.applies(record, stage);
        let idx = match (improved, exposed) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        cells[idx] += 1;
    }
    ContingencyTable2x2::new(cells[0], cells[1], cells[2], cells[3])
}

/// Cross-tabulates the stage outcomes against one feature. Every outcome must
/// have a matching record.
pub fn build_table(
    outcomes: &[StageOutcome],
    records: &[PatientRecord],
    feature: &Feature,
    stage: Stage,
) -> Result<ContingencyTable2x2, StatsError> {
    let index: HashMap<&str, &PatientRecord> = records.iter().map(|r| (r.patient_id.as_str(), r)).collect();
    let labelled = outcomes
        .iter()
        .map(|o| {
            index
                .get(o.patient_id.as_str())
                .map(|r| (*r, o.label.is_improved()))
                .ok_or_else(|| StatsError::MissingRecord(o.patient_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    count_table(labelled, feature, stage)
}
