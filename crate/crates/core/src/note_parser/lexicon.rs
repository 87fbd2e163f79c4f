use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParseError, DEFAULT_LEXICON};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    /// Uppercase canonical exercise name, e.g. `LONG ARC QUAD`.
    pub canonical_name: String,
    pub category: String,
    /// Key phrases as written in the lexicon file. Matching lowercases them.
    pub key_phrases: Vec<String>,
}

/// Ordered list of canonical exercises and the phrases that denote them.
///
/// Entry order is significant: it fixes the exercise column order of
/// feature matrices and the iteration order of association screens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseLexicon {
    entries: Vec<LexiconEntry>,
}

const HEADER: [&str; 3] = ["canonical", "category", "phrases"];

impl ExerciseLexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self, ParseError> {
        let mut seen = HashSet::new();
        for (idx, entry) in entries.iter().enumerate() {
            if entry.key_phrases.iter().all(|p| p.trim().is_empty()) {
                return Err(ParseError::Format {
                    line: idx + 2,
                    message: format!("{} has no key phrases", entry.canonical_name),
                });
            }
            if !seen.insert(entry.canonical_name.clone()) {
                return Err(ParseError::DuplicateCanonicalName {
                    name: entry.canonical_name.clone(),
                    line: idx + 2,
                });
            }
        }
        Ok(ExerciseLexicon { entries })
    }

    /// The lexicon shipped with the crate, enumerating every exercise
    /// category and key phrase of the standard rehabilitation exercise table.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("builtin lexicon is well-formed")
    }

    /// Parses the TSV lexicon format. The first line must be the header
    /// `canonical\tcategory\tphrases`; phrases are `|`-separated.
    pub fn parse(input: &str) -> Result<Self, ParseError> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines.next().ok_or(ParseError::Format {
            line: 1,
            message: "empty lexicon file".into(),
        })?;
        let cols: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
        if cols != HEADER {
            return Err(ParseError::Format {
                line: 1,
                message: format!("expected header {:?}, found {:?}", HEADER.join("\\t"), header),
            });
        }

        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let raw = raw.trim_end_matches('\r');
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(ParseError::Format {
                    line: line_no,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let canonical = fields[0].trim();
            if canonical.is_empty() {
                return Err(ParseError::Format {
                    line: line_no,
                    message: "empty canonical name".into(),
                });
            }
            if canonical != canonical.to_uppercase() {
                return Err(ParseError::Format {
                    line: line_no,
                    message: format!("canonical name {canonical:?} is not uppercase"),
                });
            }
            let key_phrases: Vec<String> = fields[2]
                .split('|')
                .map(str::trim)
                .filter(|p| !p.is_empty())
                .map(str::to_string)
                .collect();
            if key_phrases.is_empty() {
                return Err(ParseError::Format {
                    line: line_no,
                    message: format!("{canonical} has no key phrases"),
                });
            }
            if !seen.insert(canonical.to_string()) {
                return Err(ParseError::DuplicateCanonicalName {
                    name: canonical.to_string(),
                    line: line_no,
                });
            }
            entries.push(LexiconEntry {
                canonical_name: canonical.to_string(),
                category: fields[1].trim().to_string(),
                key_phrases,
            });
        }
        if entries.is_empty() {
            return Err(ParseError::Format {
                line: 1,
                message: "lexicon has no entries".into(),
            });
        }
        Ok(ExerciseLexicon { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ParseError> {
        let text = std::fs::read_to_string(path).map_err(|e| ParseError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = HEADER.join("\t");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                e.canonical_name,
                e.category,
                e.key_phrases.join("|")
            ));
        }
        out
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn canonical_names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.canonical_name.as_str())
    }

    pub fn contains(&self, canonical: &str) -> bool {
        self.entries.iter().any(|e| e.canonical_name == canonical)
    }

    pub fn position(&self, canonical: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.canonical_name == canonical)
    }

    pub fn entry(&self, canonical: &str) -> Option<&LexiconEntry> {
        self.entries.iter().find(|e| e.canonical_name == canonical)
    }
}

/// Loads a lexicon file.
pub fn load_lexicon(path: &Path) -> Result<ExerciseLexicon, ParseError> {
    ExerciseLexicon::load(path)
}
