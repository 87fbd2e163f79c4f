//! `rehab parse`: one CSV row per AM-PAC score or exercise mention.

use std::path::PathBuf;

use rehab_core::note_parser::{extract_ampac, read_notes_file, PhraseMatcher};

use crate::pipeline::{self, csv_bytes};
use crate::{write_file, CliError, Context, ParseArgs};

pub const EXTRACTION_HEADER: [&str; 7] = ["patient_id", "date", "kind", "name", "value", "span_start", "span_end"];

pub fn cmd_parse(ctx: &Context, args: &ParseArgs) -> Result<Vec<PathBuf>, CliError> {
    let path = pipeline::notes_path(ctx, &args.notes)?;
    let notes = read_notes_file(&path).map_err(|e| CliError::from(e).in_file(&path))?;
    let lexicon = pipeline::lexicon(ctx, &args.lexicon)?;
    let patterns = pipeline::patterns(ctx, &args.patterns)?;
    let matcher = PhraseMatcher::new(&lexicon);

    let mut rows: Vec<[String; 7]> = Vec::new();
    for note in &notes {
        let date = note.note_date.to_string();
        for obs in extract_ampac(note, &patterns) {
            rows.push([
                note.patient_id.clone(),
                date.clone(),
                "AMPAC".into(),
                obs.domain.code().into(),
                obs.score.to_string(),
                String::new(),
                String::new(),
            ]);
        }
        for m in matcher.extract(&note.text).mentions {
            rows.push([
                note.patient_id.clone(),
                date.clone(),
                "EXERCISE".into(),
                m.canonical_name,
                m.matched_phrase,
                m.char_span.0.to_string(),
                m.char_span.1.to_string(),
            ]);
        }
    }
    let out = ctx.output("extractions.csv");
    write_file(&out, &csv_bytes(&EXTRACTION_HEADER, rows)?)?;
    Ok(vec![out])
}
