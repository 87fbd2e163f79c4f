//! Synthetic notes through extraction, binning and MCID labelling.

use std::collections::BTreeMap;

use rehab_core::cohort::{assemble, read_demographics_file, stage_population, BinningConfig, Stage};
use rehab_core::note_parser::{extract_ampac, read_notes_file, AmpacPatterns, ExerciseLexicon, PhraseMatcher};
use rehab_core::outcomes::{estimate_mcid, label_outcomes};
use rehab_core::synth::{generate, Missingness, SynthConfig};
use rehab_core::Domain;

fn run_pipeline(cfg: &SynthConfig) {
    let lexicon = ExerciseLexicon::builtin();
    let patterns = AmpacPatterns::builtin();
    let generated = generate(cfg, &lexicon).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let [notes_path, demo_path, _] = generated.write_to_dir(dir.path()).unwrap();
    let notes = read_notes_file(&notes_path).unwrap();
    let demographics = read_demographics_file(&demo_path).unwrap();
    assert_eq!(notes, generated.notes);

    // extraction counts equal what the generator wrote
    let matcher = PhraseMatcher::new(&lexicon);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut ampac = 0;
    for n in &notes {
        for m in matcher.extract(&n.text).mentions {
            *counts.entry(m.canonical_name).or_default() += 1;
        }
        ampac += extract_ampac(n, &patterns).len();
    }
    assert_eq!(counts, generated.manifest.mention_counts);
    assert_eq!(ampac, generated.manifest.ampac_mentions);

    let records = assemble(&notes, &demographics, &lexicon, &patterns, &BinningConfig::default()).unwrap();
    assert_eq!(records, generated.records());

    for domain in Domain::ALL {
        let mcid = estimate_mcid(&records, domain).unwrap();
        assert!((mcid.mcid - generated.manifest.mcid[&domain]).abs() < 1e-12);
        for stage in Stage::ALL {
            let pop = stage_population(&records, domain, stage);
            let outcomes = label_outcomes(&pop, domain, stage, mcid.mcid);
            let truth: usize = generated
                .manifest
                .patients
                .iter()
                .filter(|p| p.label(domain, stage).is_some())
                .count();
            assert_eq!(outcomes.len(), truth);
            for o in outcomes {
                let p = generated
                    .manifest
                    .patients
                    .iter()
                    .find(|p| p.patient_id == o.patient_id)
                    .unwrap();
                assert_eq!(
                    Some(o.label),
                    p.label(domain, stage),
                    "{} {domain} {stage}",
                    o.patient_id
                );
            }
        }
    }
}

#[test]
fn round_trip_recovers_planted_labels() {
    run_pipeline(&SynthConfig::default());
}

#[test]
fn round_trip_with_missing_assessments() {
    run_pipeline(&SynthConfig {
        n_patients: 120,
        seed: 11,
        missingness: Missingness { m1: 0.15, m2: 0.2 },
        ..Default::default()
    });
}

#[test]
fn note_order_does_not_matter() {
    let lexicon = ExerciseLexicon::builtin();
    let patterns = AmpacPatterns::builtin();
    let cfg = SynthConfig {
        n_patients: 40,
        ..Default::default()
    };
    let g = generate(&cfg, &lexicon).unwrap();
    let mut reversed = g.notes.clone();
    reversed.reverse();
    let a = assemble(
        &g.notes,
        &g.demographics,
        &lexicon,
        &patterns,
        &BinningConfig::default(),
    )
    .unwrap();
    let b = assemble(
        &reversed,
        &g.demographics,
        &lexicon,
        &patterns,
        &BinningConfig::default(),
    )
    .unwrap();
    assert_eq!(a, b);
}
