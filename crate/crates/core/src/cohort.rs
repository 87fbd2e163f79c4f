//! Per-patient timelines: AM-PAC scores binned to the first visit, one month
//! and two months, exercise exposures per recovery stage, and demographics.
//!
//! Binning convention: the patient's first note date is day 0. Each score
//! observation is assigned to the nearest target day (0, 30, 60) if it lies
//! within `window_days` of it (ties go to the earlier target); each timepoint
//! then keeps the assigned observation closest to its target, ties broken
//! toward the earlier date. Several scores for one domain on the same date
//! resolve to the last mention in document order.
//!
//! Exposures: exercises from notes dated in `(day 0, 30 + window]` belong to
//! the early stage, those in `(30 + window, 60 + window]` to the late stage.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::note_parser::{
    extract_ampac, AmpacPatterns, Domain, ExerciseLexicon, ParseError, PhraseMatcher, ProcedureNote,
};

#[derive(Error, Debug)]
pub enum CohortError {
    #[error("note for patient {0:?} has no demographics row")]
    UnknownPatient(String),

    #[error("patient {patient}: two {domain} observations equidistant from the {timepoint} target")]
    AmbiguousBin {
        patient: String,
        domain: Domain,
        timepoint: Timepoint,
    },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Sex {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Race {
    White,
    NotWhite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBin {
    #[serde(rename = "UNDER_40")]
    Under40,
    #[serde(rename = "FROM_40_TO_60")]
    From40To60,
    #[serde(rename = "OVER_60")]
    Over60,
}

impl AgeBin {
    pub const ALL: [AgeBin; 3] = [AgeBin::Under40, AgeBin::From40To60, AgeBin::Over60];

    pub fn of_age(years: u32) -> AgeBin {
        match years {
            0..=39 => AgeBin::Under40,
            40..=60 => AgeBin::From40To60,
            _ => AgeBin::Over60,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBin::Under40 => "< 40",
            AgeBin::From40To60 => "40 - 60",
            AgeBin::Over60 => "> 60",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Demographics {
    pub sex: Sex,
    pub race: Race,
    pub age_years: u32,
    pub age_bin: AgeBin,
}

impl Demographics {
    pub fn new(sex: Sex, race: Race, age_years: u32) -> Self {
        Demographics {
            sex,
            race,
            age_years,
            age_bin: AgeBin::of_age(age_years),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Timepoint {
    T0,
    M1,
    M2,
}

impl Timepoint {
    pub const ALL: [Timepoint; 3] = [Timepoint::T0, Timepoint::M1, Timepoint::M2];

    pub fn label(self) -> &'static str {
        match self {
            Timepoint::T0 => "First visit",
            Timepoint::M1 => "1M",
            Timepoint::M2 => "2M",
        }
    }
}

impl std::fmt::Display for Timepoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Early,
    Late,
}

impl Stage {
    pub const ALL: [Stage; 2] = [Stage::Early, Stage::Late];

    pub fn endpoints(self) -> (Timepoint, Timepoint) {
        match self {
            Stage::Early => (Timepoint::T0, Timepoint::M1),
            Stage::Late => (Timepoint::M1, Timepoint::M2),
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Stage::Early => "EARLY",
            Stage::Late => "LATE",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EARLY" => Ok(Stage::Early),
            "LATE" => Ok(Stage::Late),
            _ => Err(format!("unknown stage {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub demographics: Demographics,
    pub scores: BTreeMap<Domain, BTreeMap<Timepoint, f64>>,
    pub exposures: BTreeMap<Stage, BTreeSet<String>>,
}

impl PatientRecord {
    pub fn new(patient_id: impl Into<String>, demographics: Demographics) -> Self {
        PatientRecord {
            patient_id: patient_id.into(),
            demographics,
            scores: BTreeMap::new(),
            exposures: BTreeMap::new(),
        }
    }

    pub fn score(&self, domain: Domain, timepoint: Timepoint) -> Option<f64> {
        self.scores.get(&domain)?.get(&timepoint).copied()
    }

    pub fn set_score(&mut self, domain: Domain, timepoint: Timepoint, score: f64) {
        self.scores.entry(domain).or_default().insert(timepoint, score);
    }

    pub fn exposed(&self, stage: Stage, canonical: &str) -> bool {
        self.exposures.get(&stage).is_some_and(|s| s.contains(canonical))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinningConfig {
    /// Half-width of the window around each target day.
    pub window_days: i64,
    /// Days between consecutive timepoints.
    pub month_days: i64,
    /// Raise [`CohortError::AmbiguousBin`] instead of preferring the earlier date.
    pub strict_ties: bool,
}

impl Default for BinningConfig {
    fn default() -> Self {
        BinningConfig {
            window_days: 15,
            month_days: 30,
            strict_ties: false,
        }
    }
}

impl BinningConfig {
    fn target(&self, tp: Timepoint) -> i64 {
        match tp {
            Timepoint::T0 => 0,
            Timepoint::M1 => self.month_days,
            Timepoint::M2 => 2 * self.month_days,
        }
    }

    /// Stage whose exposure interval contains a note `day` days after the first visit.
    pub fn exposure_stage(&self, day: i64) -> Option<Stage> {
        let early_end = self.month_days + self.window_days;
        let late_end = 2 * self.month_days + self.window_days;
        if day > 0 && day <= early_end {
            Some(Stage::Early)
        } else if day > early_end && day <= late_end {
            Some(Stage::Late)
        } else {
            None
        }
    }
}

/// Bins one domain's `(day, score)` observations (one per day) to timepoints.
fn bin_observations(obs: &[(i64, f64)], cfg: &BinningConfig) -> Result<BTreeMap<Timepoint, f64>, Timepoint> {
    let mut assigned: BTreeMap<Timepoint, Vec<(i64, f64)>> = BTreeMap::new();
    for &(day, score) in obs {
        let nearest = Timepoint::ALL
            .iter()
            .map(|&tp| (((day - cfg.target(tp)).abs()), tp))
            .filter(|(dist, _)| *dist <= cfg.window_days)
            .min();
        if let Some((_, tp)) = nearest {
            assigned.entry(tp).or_default().push((day, score));
        }
    }
    let mut out = BTreeMap::new();
    for (tp, mut cands) in assigned {
        let target = cfg.target(tp);
        cands.sort_by_key(|&(day, _)| ((day - target).abs(), day));
        if cfg.strict_ties && cands.len() > 1 && (cands[0].0 - target).abs() == (cands[1].0 - target).abs() {
            return Err(tp);
        }
        out.insert(tp, cands[0].1);
    }
    Ok(out)
}

fn assemble_patient(
    patient_id: &str,
    mut notes: Vec<&ProcedureNote>,
    demographics: Demographics,
    matcher: &PhraseMatcher<'_>,
    patterns: &AmpacPatterns,
    cfg: &BinningConfig,
) -> Result<PatientRecord, CohortError> {
    notes.sort_by(|a, b| a.note_date.cmp(&b.note_date).then_with(|| a.text.cmp(&b.text)));
    let anchor: NaiveDate = notes[0].note_date;

    let mut record = PatientRecord::new(patient_id, demographics);
    // (domain, day) -> score; later mentions overwrite earlier ones
    let mut by_day: BTreeMap<(Domain, i64), f64> = BTreeMap::new();
    for note in &notes {
        let day = (note.note_date - anchor).num_days();
        for obs in extract_ampac(note, patterns) {
            by_day.insert((obs.domain, day), obs.score);
        }
        if let Some(stage) = cfg.exposure_stage(day) {
            let found = matcher.extract(&note.text);
            if !found.canonical.is_empty() {
                record.exposures.entry(stage).or_default().extend(found.canonical);
            }
        }
    }

    for domain in Domain::ALL {
        let obs: Vec<(i64, f64)> = by_day
            .iter()
            .filter(|((d, _), _)| *d == domain)
            .map(|((_, day), score)| (*day, *score))
            .collect();
        let binned = bin_observations(&obs, cfg).map_err(|timepoint| CohortError::AmbiguousBin {
            patient: patient_id.to_string(),
            domain,
            timepoint,
        })?;
        if !binned.is_empty() {
            record.scores.insert(domain, binned);
        }
    }
    Ok(record)
}

/// Builds one [`PatientRecord`] per patient that has at least one note.
/// Output is sorted by patient id and independent of note order.
pub fn assemble(
    notes: &[ProcedureNote],
    demographics: &HashMap<String, Demographics>,
    lexicon: &ExerciseLexicon,
    patterns: &AmpacPatterns,
    binning: &BinningConfig,
) -> Result<Vec<PatientRecord>, CohortError> {
    let mut by_patient: BTreeMap<&str, Vec<&ProcedureNote>> = BTreeMap::new();
    for note in notes {
        by_patient.entry(note.patient_id.as_str()).or_default().push(note);
    }
    if let Some(missing) = by_patient.keys().find(|id| !demographics.contains_key(**id)) {
        return Err(CohortError::UnknownPatient(missing.to_string()));
    }
    let matcher = PhraseMatcher::new(lexicon);
    by_patient
        .into_par_iter()
        .map(|(id, notes)| assemble_patient(id, notes, demographics[id], &matcher, patterns, binning))
        .collect()
}

/// A patient with both endpoint scores for a domain and stage.
#[derive(Debug, Clone, Copy)]
pub struct StageSubject<'a> {
    pub record: &'a PatientRecord,
    pub score_start: f64,
    pub score_end: f64,
}

/// Complete-case filter for one domain and stage.
pub fn stage_population(records: &[PatientRecord], domain: Domain, stage: Stage) -> Vec<StageSubject<'_>> {
    let (from, to) = stage.endpoints();
    records
        .iter()
        .filter_map(|r| {
            Some(StageSubject {
                record: r,
                score_start: r.score(domain, from)?,
                score_end: r.score(domain, to)?,
            })
        })
        .collect()
}

fn parse_sex(s: &str) -> Option<Sex> {
    match s.trim().to_ascii_uppercase().as_str() {
        "FEMALE" | "F" => Some(Sex::Female),
        "MALE" | "M" => Some(Sex::Male),
        _ => None,
    }
}

fn parse_race(s: &str) -> Option<Race> {
    match s.trim().to_ascii_uppercase().replace([' ', '-'], "_").as_str() {
        "WHITE" => Some(Race::White),
        "NOT_WHITE" | "NON_WHITE" | "NONWHITE" => Some(Race::NotWhite),
        _ => None,
    }
}

/// Reads the demographics CSV (`patient_id,sex,race,age_years`).
pub fn read_demographics<R: std::io::Read>(reader: R) -> Result<HashMap<String, Demographics>, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CohortError::Format {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["patient_id", "sex", "race", "age_years"] {
        return Err(CohortError::Format {
            line: 1,
            message: "expected header patient_id,sex,race,age_years".into(),
        });
    }
    let mut out = HashMap::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2;
        let row = row.map_err(|e| CohortError::Format {
            line,
            message: e.to_string(),
        })?;
        let bad = |message: String| CohortError::Format { line, message };
        let sex = parse_sex(&row[1]).ok_or_else(|| bad(format!("unknown sex {:?}", &row[1])))?;
        let race = parse_race(&row[2]).ok_or_else(|| bad(format!("unknown race {:?}", &row[2])))?;
        let age: u32 = row[3].parse().map_err(|_| bad(format!("invalid age {:?}", &row[3])))?;
        if out
            .insert(row[0].to_string(), Demographics::new(sex, race, age))
            .is_some()
        {
            return Err(bad(format!("duplicate patient_id {:?}", &row[0])));
        }
    }
    Ok(out)
}

pub fn read_demographics_file(path: &Path) -> Result<HashMap<String, Demographics>, CohortError> {
    let file = std::fs::File::open(path).map_err(|source| CohortError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_demographics(file)
}

/// Writes demographics sorted by patient id.
pub fn write_demographics<W: Write>(out: W, demographics: &HashMap<String, Demographics>) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["patient_id", "sex", "race", "age_years"])?;
    let mut ids: Vec<&String> = demographics.keys().collect();
    ids.sort();
    for id in ids {
        let d = demographics[id];
        let sex = match d.sex {
            Sex::Female => "FEMALE",
            Sex::Male => "MALE",
        };
        let race = match d.race {
            Race::White => "WHITE",
            Race::NotWhite => "NOT_WHITE",
        };
        wtr.write_record([id.as_str(), sex, race, &d.age_years.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes the assembled cohort as JSON Lines, one [`PatientRecord`] per line.
pub fn write_cohort<W: Write>(mut out: W, records: &[PatientRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_cohort<R: BufRead>(reader: R) -> Result<Vec<PatientRecord>, CohortError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CohortError::Format {
            line: idx + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CohortError::Format {
            line: idx + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

impl From<ParseError> for CohortError {
    fn from(e: ParseError) -> Self {
        match e {
            ParseError::Io { path, source } => CohortError::Io { path, source },
            ParseError::Format { line, message } => CohortError::Format { line, message },
            other => CohortError::Format {
                line: 0,
                message: other.to_string(),
            },
        }
    }
}
