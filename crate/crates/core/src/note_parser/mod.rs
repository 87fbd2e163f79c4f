//! Extraction of AM-PAC scores and exercise mentions from free-text
//! rehabilitation procedure notes.
//!
//! Three inputs drive the parser:
//!
//! * notes, read from JSON Lines (`{"patient_id", "date", "text"}`),
//! * an [`ExerciseLexicon`] mapping key phrases to canonical exercise names,
//!   read from a TSV file (`canonical\tcategory\tphrases`),
//! * a list of AM-PAC regular expressions, read from a plain-text pattern file.
//!
//! Everything here is a pure function over immutable inputs.

mod ampac;
mod exercises;
mod lexicon;

use std::io::BufRead;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ampac::{compile_patterns, extract_ampac, load_patterns, parse_patterns, AmpacPatterns};
pub use exercises::{extract_exercises, ExerciseExtraction, ExerciseMention, PhraseMatcher};
pub use lexicon::{load_lexicon, ExerciseLexicon, LexiconEntry};

/// Default AM-PAC pattern file contents.
pub const DEFAULT_PATTERNS: &str = include_str!("../../data/ampac_patterns.txt");

/// Default lexicon TSV contents.
pub const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.tsv");

#[derive(Error, Debug)]
pub enum ParseError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("line {line}: duplicate canonical name {name:?}")]
    DuplicateCanonicalName { name: String, line: usize },

    #[error("invalid pattern {pattern:?}: {message}")]
    Pattern { pattern: String, message: String },
}

impl ParseError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ParseError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One dated free-text note attached to a patient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcedureNote {
    pub patient_id: String,
    #[serde(rename = "date")]
    pub note_date: NaiveDate,
    pub text: String,
}

/// AM-PAC domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "BM")]
    BasicMobility,
    #[serde(rename = "AC")]
    AppliedCognitive,
}

impl Domain {
    pub const ALL: [Domain; 2] = [Domain::BasicMobility, Domain::AppliedCognitive];

    pub fn code(self) -> &'static str {
        match self {
            Domain::BasicMobility => "BM",
            Domain::AppliedCognitive => "AC",
        }
    }

    /// Classifies a captured domain tag ("Basic Mobility", "bm", "applied cognition", ...).
    pub fn from_tag(tag: &str) -> Option<Domain> {
        let tag = tag.trim().to_ascii_lowercase();
        if tag == "bm" || tag.contains("mobility") {
            Some(Domain::BasicMobility)
        } else if tag == "ac" || tag.contains("cognit") {
            Some(Domain::AppliedCognitive)
        } else {
            None
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

impl std::str::FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::from_tag(s).ok_or_else(|| format!("unknown domain {s:?}"))
    }
}

/// A single AM-PAC score found in a note.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpacObservation {
    pub domain: Domain,
    pub score: f64,
    pub source_date: NaiveDate,
}

/// Reads notes from JSON Lines. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_notes<R: BufRead>(reader: R) -> Result<Vec<ProcedureNote>, ParseError> {
    let mut notes = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| ParseError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let note: ProcedureNote = serde_json::from_str(&line).map_err(|e| ParseError::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        notes.push(note);
    }
    Ok(notes)
}

pub fn read_notes_file(path: &Path) -> Result<Vec<ProcedureNote>, ParseError> {
    let file = std::fs::File::open(path).map_err(|e| ParseError::io(path, e))?;
    read_notes(std::io::BufReader::new(file))
}

/// Writes notes as JSON Lines.
pub fn write_notes<W: std::io::Write>(mut out: W, notes: &[ProcedureNote]) -> std::io::Result<()> {
    for note in notes {
        serde_json::to_writer(&mut out, note)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
