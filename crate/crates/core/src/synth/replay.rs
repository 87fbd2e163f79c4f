use crate::cohort::{AgeBin, Demographics, PatientRecord, Race, Sex, Stage, Timepoint};
use crate::note_parser::Domain;
use crate::outcomes::{Label, StageOutcome};
use crate::stats::{ContingencyTable2x2, Feature};

/// Minimal cohort reproducing one 2x2 row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayCohort {
    pub records: Vec<PatientRecord>,
    pub outcomes: Vec<StageOutcome>,
}

const BASE_SCORE: f64 = 10.0;
const IMPROVED_SCORE: f64 = 12.0;

fn demographics_for(feature: &Feature, exposed: bool) -> Demographics {
    let neutral = Demographics::new(Sex::Male, Race::White, 64);
    match feature {
        Feature::Exercise(_) => neutral,
        Feature::Sex(s) => {
            let other = if *s == Sex::Female { Sex::Male } else { Sex::Female };
            Demographics::new(if exposed { *s } else { other }, Race::White, 64)
        }
        Feature::Race(r) => {
            let other = if *r == Race::White { Race::NotWhite } else { Race::White };
            Demographics::new(Sex::Male, if exposed { *r } else { other }, 64)
        }
        Feature::Age(bin) => {
            let age = |b: AgeBin| match b {
                AgeBin::Under40 => 30,
                AgeBin::From40To60 => 50,
                AgeBin::Over60 => 70,
            };
            let other = if *bin == AgeBin::Over60 {
                AgeBin::From40To60
            } else {
                AgeBin::Over60
            };
            Demographics::new(Sex::Male, Race::White, age(if exposed { *bin } else { other }))
        }
    }
}

/// Builds `a + b` improved and `c + d` not-improved patients whose exposure to
/// `feature` in `stage` matches the table cells. Improved patients gain 2
/// points over the stage, the others none, so the 0.2-SD MCID labels them the
/// same way the returned outcomes do.
pub fn replay_table(counts: &ContingencyTable2x2, feature: &Feature, stage: Stage, domain: Domain) -> ReplayCohort {
    let (from, to) = stage.endpoints();
    let cells = [
        (counts.a, true, true),
        (counts.b, true, false),
        (counts.c, false, true),
        (counts.d, false, false),
    ];
    let mut records = Vec::new();
    let mut outcomes = Vec::new();
    for (n, improved, exposed) in cells {
        for _ in 0..n {
            let id = format!("R{:05}", records.len() + 1);
            let mut r = PatientRecord::new(id.clone(), demographics_for(feature, exposed));
            if let (Feature::Exercise(name), true) = (feature, exposed) {
                r.exposures.entry(stage).or_default().insert(name.clone());
            }
            let end = if improved { IMPROVED_SCORE } else { BASE_SCORE };
            for tp in Timepoint::ALL {
                if tp <= from {
                    r.set_score(domain, tp, BASE_SCORE);
                }
            }
            r.set_score(domain, to, end);
            outcomes.push(StageOutcome {
                patient_id: id,
                domain,
                stage,
                delta: end - BASE_SCORE,
                label: if improved { Label::Improved } else { Label::NotImproved },
            });
            records.push(r);
        }
    }
    ReplayCohort { records, outcomes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::stage_population;
    use crate::outcomes::{estimate_mcid, label_outcomes};
    use crate::stats::build_table;

    #[test]
    fn round_trip_counts_and_labels() {
        let features = [
            Feature::Exercise("BALANCE".into()),
            Feature::Sex(Sex::Female),
            Feature::Race(Race::NotWhite),
            Feature::Age(AgeBin::Under40),
            Feature::Age(AgeBin::Over60),
        ];
        for feature in &features {
            for stage in Stage::ALL {
                let t = ContingencyTable2x2::new(10, 6, 16, 77).unwrap();
                let c = replay_table(&t, feature, stage, Domain::AppliedCognitive);
                assert_eq!(build_table(&c.outcomes, &c.records, feature, stage).unwrap(), t);

                let mcid = estimate_mcid(&c.records, Domain::AppliedCognitive).unwrap().mcid;
                let pop = stage_population(&c.records, Domain::AppliedCognitive, stage);
                let relabelled = label_outcomes(&pop, Domain::AppliedCognitive, stage, mcid);
                assert_eq!(relabelled, c.outcomes);
            }
        }
    }

    #[test]
    fn single_patient_table() {
        let t = ContingencyTable2x2::new(0, 0, 0, 1).unwrap();
        let c = replay_table(
            &t,
            &Feature::Exercise("GAIT".into()),
            Stage::Late,
            Domain::BasicMobility,
        );
        assert_eq!(c.records.len(), 1);
        assert_eq!(c.outcomes[0].label, Label::NotImproved);
    }
}
