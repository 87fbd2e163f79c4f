use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{ExerciseLexicon, ProcedureNote};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseMention {
    pub canonical_name: String,
    /// The matched slice of the note text, original casing.
    pub matched_phrase: String,
    /// Byte offsets `[start, end)` into the note text.
    pub char_span: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExerciseExtraction {
    pub canonical: BTreeSet<String>,
    pub mentions: Vec<ExerciseMention>,
}

/// Phrase index over a lexicon, bucketed by first (lowercased) byte.
///
/// Matching rules:
/// * ASCII case-insensitive;
/// * a phrase whose first (last) character is alphanumeric only matches when
///   the preceding (following) text character is not alphanumeric, so short
///   abbreviations such as `LA` never fire inside words;
/// * at each offset the longest matching phrase wins and the scan resumes
///   after it, so every text position belongs to at most one mention.
#[derive(Debug, Clone)]
pub struct PhraseMatcher<'a> {
    lexicon: &'a ExerciseLexicon,
    buckets: Vec<Vec<(Vec<u8>, usize)>>,
}

impl<'a> PhraseMatcher<'a> {
    pub fn new(lexicon: &'a ExerciseLexicon) -> Self {
        let mut buckets: Vec<Vec<(Vec<u8>, usize)>> = vec![Vec::new(); 256];
        for (idx, entry) in lexicon.entries().iter().enumerate() {
            for phrase in &entry.key_phrases {
                let lower = phrase.trim().to_ascii_lowercase().into_bytes();
                if let Some(&first) = lower.first() {
                    buckets[first as usize].push((lower, idx));
                }
            }
        }
        PhraseMatcher { lexicon, buckets }
    }

    pub fn extract(&self, text: &str) -> ExerciseExtraction {
        let bytes = text.as_bytes();
        let lower = text.to_ascii_lowercase().into_bytes();
        let n = bytes.len();
        let mut out = ExerciseExtraction::default();

        let mut i = 0;
        while i < n {
            let mut best: Option<(usize, usize)> = None;
            for (phrase, idx) in &self.buckets[lower[i] as usize] {
                let end = i + phrase.len();
                if end > n || &lower[i..end] != phrase.as_slice() {
                    continue;
                }
                let start_ok = !phrase[0].is_ascii_alphanumeric() || i == 0 || !bytes[i - 1].is_ascii_alphanumeric();
                let end_ok = !phrase[phrase.len() - 1].is_ascii_alphanumeric()
                    || end == n
                    || !bytes[end].is_ascii_alphanumeric();
                if start_ok && end_ok && best.is_none_or(|(len, _)| phrase.len() > len) {
                    best = Some((phrase.len(), *idx));
                }
            }
            match best {
                Some((len, idx)) => {
                    let name = &self.lexicon.entries()[idx].canonical_name;
                    out.canonical.insert(name.clone());
                    out.mentions.push(ExerciseMention {
                        canonical_name: name.clone(),
                        matched_phrase: text[i..i + len].to_string(),
                        char_span: (i, i + len),
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Finds canonical exercise mentions in a note.
pub fn extract_exercises(note: &ProcedureNote, lexicon: &ExerciseLexicon) -> ExerciseExtraction {
    PhraseMatcher::new(lexicon).extract(&note.text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::note_parser::LexiconEntry;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn note(text: &str) -> ProcedureNote {
        ProcedureNote {
            patient_id: "p".into(),
            note_date: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            text: text.into(),
        }
    }

    fn names(ex: &ExerciseExtraction) -> Vec<&str> {
        ex.canonical.iter().map(String::as_str).collect()
    }

    fn lex(rows: &[(&str, &[&str])]) -> ExerciseLexicon {
        ExerciseLexicon::new(
            rows.iter()
                .map(|(c, ps)| LexiconEntry {
                    canonical_name: c.to_string(),
                    category: "test".into(),
                    key_phrases: ps.iter().map(|p| p.to_string()).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    /// Naive reference: every offset, every phrase, longest wins, skip past it.
    fn naive(text: &str, lexicon: &ExerciseLexicon) -> Vec<(String, usize, usize)> {
        let lower = text.to_ascii_lowercase();
        let b = lower.as_bytes();
        let alnum = |i: usize| b[i].is_ascii_alphanumeric();
        let mut out = Vec::new();
        let mut i = 0;
        while i < b.len() {
            let mut best: Option<(usize, String)> = None;
            for e in lexicon.entries() {
                for p in &e.key_phrases {
                    let p = p.to_ascii_lowercase();
                    let pb = p.as_bytes();
                    if b[i..].starts_with(pb) {
                        let end = i + pb.len();
                        let s_ok = !pb[0].is_ascii_alphanumeric() || i == 0 || !alnum(i - 1);
                        let e_ok = !pb[pb.len() - 1].is_ascii_alphanumeric() || end == b.len() || !alnum(end);
                        if s_ok && e_ok && best.as_ref().is_none_or(|(l, _)| pb.len() > *l) {
                            best = Some((pb.len(), e.canonical_name.clone()));
                        }
                    }
                }
            }
            if let Some((l, name)) = best {
                out.push((name, i, i + l));
                i += l;
            } else {
                i += 1;
            }
        }
        out
    }

    #[test]
    fn sit_to_stand_and_gait() {
        let ex = extract_exercises(
            &note("pt performed sit to stand x10 and gait training"),
            &ExerciseLexicon::builtin(),
        );
        assert_eq!(names(&ex), vec!["GAIT", "SIT TO STAND"]);
    }

    #[test]
    fn empty_note() {
        let ex = extract_exercises(&note(""), &ExerciseLexicon::builtin());
        assert!(ex.canonical.is_empty() && ex.mentions.is_empty());
    }

    #[test]
    fn synonyms_collapse_to_one_canonical() {
        let lexicon = ExerciseLexicon::builtin();
        let text = "long arc quad then LAQ again";
        let ex = extract_exercises(&note(text), &lexicon);
        assert_eq!(names(&ex), vec!["LONG ARC QUAD"]);
        assert_eq!(ex.mentions.len(), 2);
        let got: Vec<_> = ex
            .mentions
            .iter()
            .map(|m| (m.canonical_name.clone(), m.char_span.0, m.char_span.1))
            .collect();
        assert_eq!(got, naive(text, &lexicon));
    }

    #[test]
    fn longest_match_wins() {
        let lexicon = lex(&[("STEP", &["step"]), ("STEP UP", &["step up"])]);
        let ex = extract_exercises(&note("Step up x 10, then step."), &lexicon);
        let got: Vec<_> = ex.mentions.iter().map(|m| m.canonical_name.as_str()).collect();
        assert_eq!(got, vec!["STEP UP", "STEP"]);
    }

    #[test]
    fn abbreviations_only_as_words() {
        let lexicon = ExerciseLexicon::builtin();
        let ex = extract_exercises(&note("plateau lateral data"), &lexicon);
        assert!(ex.canonical.is_empty(), "{:?}", ex.canonical);
        let ex = extract_exercises(&note("LA contractions, TA brace"), &lexicon);
        assert_eq!(names(&ex), vec!["LEVATOR ANI", "TRANSVERSE ABDOMINUS"]);
    }

    #[test]
    fn punctuated_phrases() {
        let lexicon = ExerciseLexicon::builtin();
        let ex = extract_exercises(&note("bed>chair with min A; sup>sit; HR/TR x20"), &lexicon);
        assert_eq!(names(&ex), vec!["BED TO CHAIR", "SUPINE TO SIT", "TOE RAISES"]);
    }

    #[test]
    fn non_ascii_text_is_safe() {
        let lexicon = ExerciseLexicon::builtin();
        let ex = extract_exercises(&note("équilibre ≈ balance 5′ gait…"), &lexicon);
        assert_eq!(names(&ex), vec!["BALANCE", "GAIT"]);
        for m in &ex.mentions {
            assert_eq!(
                &"équilibre ≈ balance 5′ gait…"[m.char_span.0..m.char_span.1],
                m.matched_phrase
            );
        }
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        let words = prop::sample::select(vec![
            "gait",
            "Balance",
            "step",
            "up",
            "step up",
            "LAQ",
            "long",
            "arc",
            "quad",
            "eyes",
            "closed",
            "EC",
            "foam",
            "x10",
            "pt",
            "tolerated",
            "bed>chair",
            "sit",
            "to",
            "stand",
            "walking",
            "tap",
            "taps",
            "tandem",
            "semitandem",
            ",",
            ".",
            "é",
            "≈",
            "laq1",
        ]);
        prop::collection::vec(words, 0..25).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn matches_naive_scan(text in text_strategy()) {
            let lexicon = ExerciseLexicon::builtin();
            let ex = extract_exercises(&note(&text), &lexicon);
            let got: Vec<_> = ex.mentions.iter().map(|m| (m.canonical_name.clone(), m.char_span.0, m.char_span.1)).collect();
            prop_assert_eq!(got, naive(&text, &lexicon));
        }

        #[test]
        fn spans_are_sound_and_deterministic(text in text_strategy()) {
            let lexicon = ExerciseLexicon::builtin();
            let a = extract_exercises(&note(&text), &lexicon);
            let b = extract_exercises(&note(&text), &lexicon);
            prop_assert_eq!(&a, &b);
            let mut last_end = 0;
            for m in &a.mentions {
                let (s, e) = m.char_span;
                prop_assert!(s >= last_end && e <= text.len());
                prop_assert_eq!(text[s..e].to_ascii_lowercase(), m.matched_phrase.to_ascii_lowercase());
                last_end = e;
            }
            let mut union = a.canonical.clone();
            union.extend(b.canonical.iter().cloned());
            prop_assert_eq!(union, a.canonical);
        }
    }
}
