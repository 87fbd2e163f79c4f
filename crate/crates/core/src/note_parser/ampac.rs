use std::path::Path;

use regex::Regex;

use super::{AmpacObservation, Domain, ParseError, ProcedureNote, DEFAULT_PATTERNS};

/// Compiled AM-PAC score patterns.
///
/// Each pattern names its captures `domain` and `score`; patterns without
/// named captures use capture group 1 for the domain tag and group 2 for the
/// score.
#[derive(Debug, Clone)]
pub struct AmpacPatterns {
    patterns: Vec<CompiledPattern>,
}

#[derive(Debug, Clone)]
struct CompiledPattern {
    regex: Regex,
    domain_group: Group,
    score_group: Group,
}

#[derive(Debug, Clone, Copy)]
enum Group {
    Named(&'static str),
    Index(usize),
}

impl Group {
    fn get<'t>(self, caps: &regex::Captures<'t>) -> Option<regex::Match<'t>> {
        match self {
            Group::Named(name) => caps.name(name),
            Group::Index(i) => caps.get(i),
        }
    }
}

impl AmpacPatterns {
    pub fn builtin() -> Self {
        parse_patterns(DEFAULT_PATTERNS).expect("builtin patterns compile")
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn as_strs(&self) -> Vec<&str> {
        self.patterns.iter().map(|p| p.regex.as_str()).collect()
    }
}

pub fn compile_patterns<S: AsRef<str>>(patterns: &[S]) -> Result<AmpacPatterns, ParseError> {
    let mut compiled = Vec::with_capacity(patterns.len());
    for pattern in patterns {
        let pattern = pattern.as_ref();
        let regex = Regex::new(pattern).map_err(|e| ParseError::Pattern {
            pattern: pattern.to_string(),
            message: e.to_string(),
        })?;
        let names: Vec<&str> = regex.capture_names().flatten().collect();
        let (domain_group, score_group) = if names.contains(&"domain") && names.contains(&"score") {
            (Group::Named("domain"), Group::Named("score"))
        } else if regex.captures_len() >= 3 {
            (Group::Index(1), Group::Index(2))
        } else {
            return Err(ParseError::Pattern {
                pattern: pattern.to_string(),
                message: "needs a domain capture and a score capture".into(),
            });
        };
        compiled.push(CompiledPattern {
            regex,
            domain_group,
            score_group,
        });
    }
    Ok(AmpacPatterns { patterns: compiled })
}

/// Parses a pattern file: one regex per line, blank lines and lines starting
/// with `#` ignored.
pub fn parse_patterns(text: &str) -> Result<AmpacPatterns, ParseError> {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect();
    compile_patterns(&lines)
}

pub fn load_patterns(path: &Path) -> Result<AmpacPatterns, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|e| ParseError::io(path, e))?;
    parse_patterns(&text)
}

/// Extracts every AM-PAC score in the note, one per non-overlapping match, in
/// document order. When matches from different patterns overlap the one that
/// starts first wins, then the longer one.
pub fn extract_ampac(note: &ProcedureNote, patterns: &AmpacPatterns) -> Vec<AmpacObservation> {
    let mut hits: Vec<(usize, usize, Domain, f64)> = Vec::new();
    for pattern in &patterns.patterns {
        for caps in pattern.regex.captures_iter(&note.text) {
            let whole = caps.get(0).expect("group 0 always present");
            let domain = pattern
                .domain_group
                .get(&caps)
                .and_then(|m| Domain::from_tag(m.as_str()));
            let score = pattern
                .score_group
                .get(&caps)
                .and_then(|m| m.as_str().parse::<f64>().ok())
                .filter(|s| s.is_finite() && *s >= 0.0);
            if let (Some(domain), Some(score)) = (domain, score) {
                hits.push((whole.start(), whole.end(), domain, score));
            }
        }
    }
    hits.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));

    let mut out = Vec::with_capacity(hits.len());
    let mut cursor = 0;
    for (start, end, domain, score) in hits {
        if start < cursor {
            continue;
        }
        cursor = end;
        out.push(AmpacObservation {
            domain,
            score,
            source_date: note.note_date,
        });
    }
    out
}
