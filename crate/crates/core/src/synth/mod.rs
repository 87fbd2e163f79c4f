//! Deterministic synthetic cohorts with planted exercise effects.
//!
//! [`generate`] writes procedure notes, demographics and a ground-truth
//! manifest. Improvement labels come from a logistic model whose log-odds
//! shift by `ln(odds_ratio)` for each planted exercise the patient did in the
//! matching stage; score changes are then drawn on the right side of the MCID
//! the scores themselves induce, so the pipeline recovers the planted labels.
//!
//! [`replay_table`] builds the smallest cohort that reproduces a printed 2x2
//! row exactly.

mod generate;
mod replay;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Stage;
use crate::note_parser::Domain;

pub use generate::{generate, generate_records, GeneratedCohort, Manifest, PatientTruth, DISTRACTORS};
pub use replay::{replay_table, ReplayCohort};

#[derive(Error, Debug)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemographicMix {
    pub female: f64,
    pub white: f64,
    pub age_under_40: f64,
    pub age_40_60: f64,
}

impl Default for DemographicMix {
    fn default() -> Self {
        DemographicMix {
            female: 0.48,
            white: 0.81,
            age_under_40: 0.06,
            age_40_60: 0.28,
        }
    }
}

/// Per-domain score model: how often the domain is assessed at all and the
/// baseline (first visit) distribution, a normal truncated to `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreModel {
    pub presence: f64,
    pub baseline_mean: f64,
    pub baseline_sd: f64,
    pub min: f64,
    pub max: f64,
}

/// Improvement probability for patients without any planted exercise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImprovementRate {
    pub domain: Domain,
    pub stage: Stage,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedEffect {
    pub exercise: String,
    pub domain: Domain,
    pub stage: Stage,
    pub odds_ratio: f64,
}

/// Probability that the one-month / two-month assessment is missing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Missingness {
    pub m1: f64,
    pub m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub mcid_factor: f64,
    /// First possible enrolment date, `YYYY-MM-DD`.
    pub start_date: String,
    pub enrollment_days: u32,
    pub sessions_per_stage: usize,
    /// Distractor sentences inserted in every note.
    pub distractors_per_note: usize,
    pub demographics: DemographicMix,
    pub scores: BTreeMap<Domain, ScoreModel>,
    pub improvement: Vec<ImprovementRate>,
    /// Default per-stage probability that an exercise is performed.
    pub exposure_base_rate: f64,
    /// Per-exercise overrides of `exposure_base_rate`.
    pub exposure_rates: BTreeMap<String, f64>,
    pub planted_effects: Vec<PlantedEffect>,
    pub missingness: Missingness,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let scores = BTreeMap::from([
            (
                Domain::BasicMobility,
                ScoreModel {
                    presence: 0.8,
                    baseline_mean: 42.0,
                    baseline_sd: 8.0,
                    min: 15.0,
                    max: 70.0,
                },
            ),
            (
                Domain::AppliedCognitive,
                ScoreModel {
                    presence: 0.45,
                    baseline_mean: 38.0,
                    baseline_sd: 7.0,
                    min: 15.0,
                    max: 70.0,
                },
            ),
        ]);
        let rate = |domain, stage, rate| ImprovementRate { domain, stage, rate };
        let effect = |exercise: &str, domain, stage, odds_ratio| PlantedEffect {
            exercise: exercise.to_string(),
            domain,
            stage,
            odds_ratio,
        };
        SynthConfig {
            n_patients: 265,
            seed: 20_240_101,
            mcid_factor: crate::outcomes::DEFAULT_MCID_FACTOR,
            start_date: "2021-01-04".into(),
            enrollment_days: 730,
            sessions_per_stage: 3,
            distractors_per_note: 2,
            demographics: DemographicMix::default(),
            scores,
            improvement: vec![
                rate(Domain::BasicMobility, Stage::Early, 0.35),
                rate(Domain::BasicMobility, Stage::Late, 0.30),
                rate(Domain::AppliedCognitive, Stage::Early, 0.12),
                rate(Domain::AppliedCognitive, Stage::Late, 0.20),
            ],
            exposure_base_rate: 0.12,
            exposure_rates: BTreeMap::from([
                ("BALANCE".to_string(), 0.25),
                ("GAIT".to_string(), 0.4),
                ("EYES CLOSED".to_string(), 0.35),
            ]),
            planted_effects: vec![
                effect("BALANCE", Domain::AppliedCognitive, Stage::Early, 7.81),
                effect("GAIT", Domain::BasicMobility, Stage::Late, 2.38),
                effect("EYES CLOSED", Domain::BasicMobility, Stage::Late, 2.06),
            ],
            missingness: Missingness::default(),
        }
    }
}

fn is_prob(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

impl SynthConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SynthError> {
        let cfg: SynthConfig = toml::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.display().to_string(),
            source,
        })?;
        SynthConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn start(&self) -> Result<chrono::NaiveDate, SynthError> {
        chrono::NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map_err(|e| SynthError::Config(format!("start_date {:?}: {e}", self.start_date)))
    }

    /// Base improvement probability for `(domain, stage)`.
    pub fn improvement_rate(&self, domain: Domain, stage: Stage) -> f64 {
        self.improvement
            .iter()
            .find(|r| r.domain == domain && r.stage == stage)
            .map_or(0.0, |r| r.rate)
    }

    pub fn exposure_rate(&self, exercise: &str) -> f64 {
        self.exposure_rates
            .get(exercise)
            .copied()
            .unwrap_or(self.exposure_base_rate)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: String| Err(SynthError::Config(m));
        if self.n_patients == 0 {
            return err("n_patients must be at least 1".into());
        }
        if !(self.mcid_factor > 0.0 && self.mcid_factor.is_finite()) {
            return err("mcid_factor must be positive".into());
        }
        self.start()?;
        let d = &self.demographics;
        for (name, p) in [
            ("demographics.female", d.female),
            ("demographics.white", d.white),
            ("demographics.age_under_40", d.age_under_40),
            ("demographics.age_40_60", d.age_40_60),
            ("exposure_base_rate", self.exposure_base_rate),
            ("missingness.m1", self.missingness.m1),
            ("missingness.m2", self.missingness.m2),
        ] {
            if !is_prob(p) {
                return err(format!("{name} = {p} is not a probability"));
            }
        }
        if d.age_under_40 + d.age_40_60 > 1.0 {
            return err("age bin proportions exceed 1".into());
        }
        for (name, p) in &self.exposure_rates {
            if !is_prob(*p) {
                return err(format!("exposure_rates.{name} = {p} is not a probability"));
            }
        }
        for (domain, s) in &self.scores {
            if !is_prob(s.presence) {
                return err(format!(
                    "scores.{domain}.presence = {} is not a probability",
                    s.presence
                ));
            }
            if s.baseline_sd.is_nan() || s.baseline_sd <= 0.0 || s.min.is_nan() || s.max.is_nan() || s.min >= s.max {
                return err(format!("scores.{domain}: need baseline_sd > 0 and min < max"));
            }
        }
        for r in &self.improvement {
            if !(r.rate > 0.0 && r.rate < 1.0) {
                return err(format!(
                    "improvement rate {} for {}/{} must be in (0, 1)",
                    r.rate, r.domain, r.stage
                ));
            }
        }
        for e in &self.planted_effects {
            if !(e.odds_ratio > 0.0 && e.odds_ratio.is_finite()) {
                return err(format!("odds_ratio for {} must be positive", e.exercise));
            }
        }
        Ok(())
    }
}
