use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{SynthConfig, SynthError};
use crate::cohort::{write_demographics, Demographics, PatientRecord, Race, Sex, Stage, Timepoint};
use crate::note_parser::{write_notes, Domain, ExerciseLexicon, ProcedureNote};
use crate::outcomes::{label_delta, sample_sd, Label};
use crate::rng::stream;

/// Filler sentences mixed into every note. None of them contains an exercise
/// phrase or an AM-PAC score.
pub const DISTRACTORS: [&str; 12] = [
    "Vitals stable throughout session.",
    "Pt reports mild fatigue.",
    "Pt denies pain.",
    "Caregiver present and engaged.",
    "Reviewed home exercise program.",
    "Pt tolerated treatment well.",
    "Will continue per plan of care.",
    "Goals reviewed with patient.",
    "No adverse events noted.",
    "HEP updated and issued.",
    "Education provided on fall prevention.",
    "Pt motivated and cooperative.",
];

const EXERCISE_TEMPLATES: [&str; 5] = [
    "Pt performed {} x10.",
    "Completed {}, 2 sets of 10.",
    "{} with min assist.",
    "Worked on {} today.",
    "Patient tolerated {} well.",
];

// Score changes as multiples of the MCID.
const IMPROVED_RANGE: (f64, f64) = (1.3, 3.0);
const NOT_IMPROVED_RANGE: (f64, f64) = (-0.6, 0.9);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLabel {
    pub domain: Domain,
    pub stage: Stage,
    pub label: Label,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTruth {
    pub patient_id: String,
    pub demographics: Demographics,
    pub enrollment: NaiveDate,
    pub scores: BTreeMap<Domain, BTreeMap<Timepoint, f64>>,
    pub exposures: BTreeMap<Stage, BTreeSet<String>>,
    pub labels: Vec<TruthLabel>,
}

impl PatientTruth {
    pub fn to_record(&self) -> PatientRecord {
        PatientRecord {
            patient_id: self.patient_id.clone(),
            demographics: self.demographics,
            scores: self.scores.clone(),
            exposures: self.exposures.clone(),
        }
    }

    pub fn label(&self, domain: Domain, stage: Stage) -> Option<Label> {
        self.labels
            .iter()
            .find(|l| l.domain == domain && l.stage == stage)
            .map(|l| l.label)
    }
}

/// Ground truth written next to the generated files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub n_patients: usize,
    pub mcid: BTreeMap<Domain, f64>,
    /// Exercise mentions written per canonical name.
    pub mention_counts: BTreeMap<String, usize>,
    /// AM-PAC scores written across all notes.
    pub ampac_mentions: usize,
    pub n_notes: usize,
    pub patients: Vec<PatientTruth>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCohort {
    pub notes: Vec<ProcedureNote>,
    pub demographics: HashMap<String, Demographics>,
    pub manifest: Manifest,
}

/// Unrounded draws for one patient and domain.
#[derive(Debug, Clone)]
struct DomainDraw {
    baseline: f64,
    m1_missing: bool,
    m2_missing: bool,
    improved: [bool; 2],
    u: [f64; 2],
}

#[derive(Debug, Clone)]
struct PatientDraw {
    patient_id: String,
    demographics: Demographics,
    offset_days: u32,
    exposures: BTreeMap<Stage, BTreeSet<String>>,
    domains: BTreeMap<Domain, DomainDraw>,
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let normal = Normal::new(mean, sd).expect("validated sd");
    for _ in 0..1000 {
        let v = normal.sample(rng);
        if (lo..=hi).contains(&v) {
            return v;
        }
    }
    mean.clamp(lo, hi)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn draw_patient(cfg: &SynthConfig, lexicon: &ExerciseLexicon, i: usize) -> PatientDraw {
    let mut rng = stream(cfg.seed, "patient", i as u64);
    let mix = &cfg.demographics;
    let sex = if bernoulli(&mut rng, mix.female) {
        Sex::Female
    } else {
        Sex::Male
    };
    let race = if bernoulli(&mut rng, mix.white) {
        Race::White
    } else {
        Race::NotWhite
    };
    let u: f64 = rng.random();
    let age = if u < mix.age_under_40 {
        rng.random_range(20..=39)
    } else if u < mix.age_under_40 + mix.age_40_60 {
        rng.random_range(40..=60)
    } else {
        rng.random_range(61..=85)
    };
    let offset_days = rng.random_range(0..cfg.enrollment_days.max(1));

    let mut exposures = BTreeMap::new();
    for stage in Stage::ALL {
        let set: BTreeSet<String> = lexicon
            .canonical_names()
            .filter(|name| bernoulli(&mut rng, cfg.exposure_rate(name)))
            .map(str::to_string)
            .collect();
        exposures.insert(stage, set);
    }

    let mut domains = BTreeMap::new();
    for (&domain, model) in &cfg.scores {
        // draw everything unconditionally so one domain's presence does not
        // shift the other domain's stream
        let present = bernoulli(&mut rng, model.presence);
        let baseline = truncated_normal(&mut rng, model.baseline_mean, model.baseline_sd, model.min, model.max);
        let m1_missing = bernoulli(&mut rng, cfg.missingness.m1);
        let m2_missing = bernoulli(&mut rng, cfg.missingness.m2);
        let mut improved = [false; 2];
        let mut us = [0.0; 2];
        for (k, stage) in Stage::ALL.into_iter().enumerate() {
            let mut eta = logit(cfg.improvement_rate(domain, stage));
            for e in &cfg.planted_effects {
                if e.domain == domain && e.stage == stage && exposures[&stage].contains(&e.exercise) {
                    eta += e.odds_ratio.ln();
                }
            }
            let p = 1.0 / (1.0 + (-eta).exp());
            improved[k] = bernoulli(&mut rng, p);
            us[k] = rng.random();
        }
        if present {
            domains.insert(
                domain,
                DomainDraw {
                    baseline,
                    m1_missing,
                    m2_missing,
                    improved,
                    u: us,
                },
            );
        }
    }

    PatientDraw {
        patient_id: format!("P{:04}", i + 1),
        demographics: Demographics::new(sex, race, age),
        offset_days,
        exposures,
        domains,
    }
}

fn change(d: &DomainDraw, k: usize, mcid: f64) -> f64 {
    let (lo, hi) = if d.improved[k] {
        IMPROVED_RANGE
    } else {
        NOT_IMPROVED_RANGE
    };
    mcid * (lo + (hi - lo) * d.u[k])
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Observed scores of one patient-domain for a given MCID.
fn observed(d: &DomainDraw, mcid: f64, round: bool) -> BTreeMap<Timepoint, f64> {
    let f = |v: f64| if round { round2(v) } else { v };
    let t0 = d.baseline;
    let m1 = t0 + change(d, 0, mcid);
    let m2 = m1 + change(d, 1, mcid);
    let mut out = BTreeMap::from([(Timepoint::T0, f(t0))]);
    if !d.m1_missing {
        out.insert(Timepoint::M1, f(m1));
    }
    if !d.m2_missing {
        out.insert(Timepoint::M2, f(m2));
    }
    out
}

fn pooled_sd(draws: &[&DomainDraw], mcid: f64, round: bool) -> f64 {
    let values: Vec<f64> = draws
        .iter()
        .flat_map(|d| observed(d, mcid, round).into_values())
        .collect();
    if values.len() < 2 {
        0.0
    } else {
        sample_sd(&values)
    }
}

/// MCID that is a fixed point of `factor * pooled_sd(scores(mcid))`.
fn solve_mcid(draws: &[&DomainDraw], factor: f64) -> f64 {
    let mut mcid = factor * pooled_sd(draws, 0.0, false);
    for _ in 0..200 {
        let next = factor * pooled_sd(draws, mcid, false);
        if (next - mcid).abs() <= 1e-12 * mcid.max(1e-300) {
            return next;
        }
        mcid = next;
    }
    mcid
}

type Simulated = (Vec<PatientDraw>, Vec<PatientTruth>, BTreeMap<Domain, f64>);

fn simulate(cfg: &SynthConfig, lexicon: &ExerciseLexicon) -> Result<Simulated, SynthError> {
    cfg.validate()?;
    if cfg.sessions_per_stage == 0 {
        return Err(SynthError::Config("sessions_per_stage must be at least 1".into()));
    }
    for e in &cfg.planted_effects {
        if !lexicon.contains(&e.exercise) {
            return Err(SynthError::Config(format!(
                "planted exercise {:?} is not in the lexicon",
                e.exercise
            )));
        }
    }
    let start = cfg.start()?;
    let draws: Vec<PatientDraw> = (0..cfg.n_patients)
        .into_par_iter()
        .map(|i| draw_patient(cfg, lexicon, i))
        .collect();

    let mut mcid = BTreeMap::new();
    for &domain in cfg.scores.keys() {
        let ds: Vec<&DomainDraw> = draws.iter().filter_map(|p| p.domains.get(&domain)).collect();
        if ds.is_empty() {
            continue;
        }
        let m = solve_mcid(&ds, cfg.mcid_factor);
        // the pipeline sees rounded scores; its MCID must still separate the labels
        let realised = cfg.mcid_factor * pooled_sd(&ds, m, true);
        mcid.insert(domain, (m, realised));
    }

    let mut truths = Vec::with_capacity(draws.len());
    for p in &draws {
        let mut scores = BTreeMap::new();
        let mut labels = Vec::new();
        for (&domain, d) in &p.domains {
            let (m, realised) = mcid[&domain];
            let obs = observed(d, m, true);
            for (k, stage) in Stage::ALL.into_iter().enumerate() {
                let (from, to) = stage.endpoints();
                if let (Some(a), Some(b)) = (obs.get(&from), obs.get(&to)) {
                    let delta = b - a;
                    let label = label_delta(delta, realised);
                    if label.is_improved() != d.improved[k] {
                        return Err(SynthError::Config(format!(
                            "score model for {domain} is too narrow: 2-decimal scores cannot separate the MCID ({realised:.4})"
                        )));
                    }
                    labels.push(TruthLabel {
                        domain,
                        stage,
                        label,
                        delta,
                    });
                }
            }
            scores.insert(domain, obs);
        }
        truths.push(PatientTruth {
            patient_id: p.patient_id.clone(),
            demographics: p.demographics,
            enrollment: start + Days::new(p.offset_days as u64),
            scores,
            exposures: p.exposures.clone(),
            labels,
        });
    }
    let mcid = mcid.into_iter().map(|(d, (_, realised))| (d, realised)).collect();
    Ok((draws, truths, mcid))
}

/// Ground-truth records without note text (fast path for Monte-Carlo work).
pub fn generate_records(cfg: &SynthConfig, lexicon: &ExerciseLexicon) -> Result<Vec<PatientTruth>, SynthError> {
    Ok(simulate(cfg, lexicon)?.1)
}

fn ampac_sentence(rng: &mut ChaCha8Rng, domain: Domain, value: f64) -> String {
    let forms: [&str; 3] = match domain {
        Domain::BasicMobility => [
            "AM-PAC Basic Mobility raw score: {}.",
            "AM-PAC BM = {}.",
            "AMPAC basic mobility score {}.",
        ],
        Domain::AppliedCognitive => [
            "AM-PAC Applied Cognitive raw score: {}.",
            "AM-PAC AC = {}.",
            "AMPAC applied cognition score {}.",
        ],
    };
    forms.choose(rng).unwrap().replace("{}", &format!("{value:.2}"))
}

fn exercise_sentence(rng: &mut ChaCha8Rng, phrase: &str) -> String {
    let template = *EXERCISE_TEMPLATES.choose(rng).unwrap();
    if template.starts_with("{}") {
        let mut p = phrase.to_string();
        if let Some(first) = p.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        template.replace("{}", &p)
    } else {
        template.replace("{}", phrase)
    }
}

struct NoteDraft {
    day: u32,
    sentences: Vec<String>,
}

fn patient_notes(
    cfg: &SynthConfig,
    lexicon: &ExerciseLexicon,
    index: usize,
    truth: &PatientTruth,
    counts: &mut BTreeMap<String, usize>,
) -> (Vec<ProcedureNote>, usize) {
    let mut rng = stream(cfg.seed, "notes", index as u64);
    let mut drafts = Vec::new();
    let mut ampac = 0;

    let mut assessment = |rng: &mut ChaCha8Rng, day: u32, tp: Timepoint, heading: &str| {
        let mut sentences = vec![heading.to_string()];
        for (&domain, scores) in &truth.scores {
            if let Some(&v) = scores.get(&tp) {
                sentences.push(ampac_sentence(rng, domain, v));
                ampac += 1;
            }
        }
        NoteDraft { day, sentences }
    };
    drafts.push(assessment(&mut rng, 0, Timepoint::T0, "Initial evaluation."));
    let m1_day = rng.random_range(27..=33);
    drafts.push(assessment(&mut rng, m1_day, Timepoint::M1, "Re-assessment."));
    let m2_day = rng.random_range(57..=63);
    drafts.push(assessment(&mut rng, m2_day, Timepoint::M2, "Re-assessment."));

    for (stage, days) in [(Stage::Early, 1..=45u32), (Stage::Late, 46..=75u32)] {
        let first = drafts.len();
        for _ in 0..cfg.sessions_per_stage {
            let day = rng.random_range(days.clone());
            drafts.push(NoteDraft {
                day,
                sentences: vec!["Treatment session.".to_string()],
            });
        }
        for name in &truth.exposures[&stage] {
            let entry = lexicon.entry(name).expect("exposures come from the lexicon");
            let phrase = entry.key_phrases.choose(&mut rng).expect("entries have phrases");
            let slot = first + rng.random_range(0..cfg.sessions_per_stage);
            drafts[slot].sentences.push(exercise_sentence(&mut rng, phrase));
            *counts.entry(name.clone()).or_default() += 1;
        }
    }

    let notes = drafts
        .into_iter()
        .map(|mut d| {
            for _ in 0..cfg.distractors_per_note {
                d.sentences.push(DISTRACTORS.choose(&mut rng).unwrap().to_string());
            }
            d.sentences[1..].shuffle(&mut rng);
            ProcedureNote {
                patient_id: truth.patient_id.clone(),
                note_date: truth.enrollment + Days::new(d.day as u64),
                text: d.sentences.join(" "),
            }
        })
        .collect();
    (notes, ampac)
}

/// Generates notes, demographics and the ground-truth manifest.
pub fn generate(cfg: &SynthConfig, lexicon: &ExerciseLexicon) -> Result<GeneratedCohort, SynthError> {
    let (_, truths, mcid) = simulate(cfg, lexicon)?;
    let mut counts = BTreeMap::new();
    let mut notes = Vec::new();
    let mut ampac_mentions = 0;
    for (i, t) in truths.iter().enumerate() {
        let (mut n, a) = patient_notes(cfg, lexicon, i, t, &mut counts);
        n.sort_by(|x, y| x.note_date.cmp(&y.note_date).then_with(|| x.text.cmp(&y.text)));
        notes.extend(n);
        ampac_mentions += a;
    }
    let demographics = truths.iter().map(|t| (t.patient_id.clone(), t.demographics)).collect();
    Ok(GeneratedCohort {
        manifest: Manifest {
            seed: cfg.seed,
            n_patients: cfg.n_patients,
            mcid,
            mention_counts: counts,
            ampac_mentions,
            n_notes: notes.len(),
            patients: truths,
        },
        notes,
        demographics,
    })
}

impl GeneratedCohort {
    pub fn records(&self) -> Vec<PatientRecord> {
        self.manifest.patients.iter().map(PatientTruth::to_record).collect()
    }

    /// Writes `notes.jsonl`, `demographics.csv` and `manifest.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> std::io::Result<[PathBuf; 3]> {
        std::fs::create_dir_all(dir)?;
        let notes = dir.join("notes.jsonl");
        let demo = dir.join("demographics.csv");
        let manifest = dir.join("manifest.json");

        let mut w = BufWriter::new(File::create(&notes)?);
        write_notes(&mut w, &self.notes)?;
        w.flush()?;
        write_demographics(BufWriter::new(File::create(&demo)?), &self.demographics).map_err(std::io::Error::other)?;
        let mut w = BufWriter::new(File::create(&manifest)?);
        serde_json::to_writer_pretty(&mut w, &self.manifest).map_err(std::io::Error::other)?;
        writeln!(w)?;
        w.flush()?;
        Ok([notes, demo, manifest])
    }
}

#[cfg(test)]
/// Share of patients in each age bin (for checking demographic targets).
pub(crate) fn age_bin_shares(truths: &[PatientTruth]) -> [f64; 3] {
    let n = truths.len().max(1) as f64;
    crate::cohort::AgeBin::ALL.map(|b| truths.iter().filter(|t| t.demographics.age_bin == b).count() as f64 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::note_parser::{extract_ampac, AmpacPatterns, PhraseMatcher};

    #[test]
    fn distractors_and_headings_are_inert() {
        let lexicon = ExerciseLexicon::builtin();
        let matcher = PhraseMatcher::new(&lexicon);
        let patterns = AmpacPatterns::builtin();
        for s in DISTRACTORS
            .iter()
            .chain(&["Initial evaluation.", "Re-assessment.", "Treatment session."])
        {
            assert!(matcher.extract(s).mentions.is_empty(), "{s}");
            let note = ProcedureNote {
                patient_id: "p".into(),
                note_date: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
                text: s.to_string(),
            };
            assert!(extract_ampac(&note, &patterns).is_empty(), "{s}");
        }
    }

    #[test]
    fn every_phrase_template_yields_its_canonical() {
        let lexicon = ExerciseLexicon::builtin();
        let matcher = PhraseMatcher::new(&lexicon);
        let mut rng = stream(0, "t", 0);
        for e in lexicon.entries() {
            for p in &e.key_phrases {
                for _ in 0..10 {
                    let s = exercise_sentence(&mut rng, p);
                    let got: Vec<_> = matcher
                        .extract(&s)
                        .mentions
                        .into_iter()
                        .map(|m| m.canonical_name)
                        .collect();
                    assert_eq!(got, vec![e.canonical_name.clone()], "{s}");
                }
            }
        }
    }

    #[test]
    fn demographic_margins_are_close_to_targets() {
        let cfg = SynthConfig {
            n_patients: 4000,
            ..Default::default()
        };
        let truths = generate_records(&cfg, &ExerciseLexicon::builtin()).unwrap();
        let n = truths.len() as f64;
        let mean_age = truths.iter().map(|t| t.demographics.age_years as f64).sum::<f64>() / n;
        let white = truths.iter().filter(|t| t.demographics.race == Race::White).count() as f64 / n;
        assert!((mean_age - 64.0).abs() < 1.0, "{mean_age}");
        assert!((white - 0.81).abs() < 0.03, "{white}");
        let shares = age_bin_shares(&truths);
        assert!((shares[0] - 0.06).abs() < 0.02 && (shares[1] - 0.28).abs() < 0.03);
    }

    #[test]
    fn labels_match_realised_mcid() {
        let cfg = SynthConfig {
            missingness: super::super::Missingness { m1: 0.1, m2: 0.1 },
            ..Default::default()
        };
        let g = generate(&cfg, &ExerciseLexicon::builtin()).unwrap();
        let records = g.records();
        for (&domain, &m) in &g.manifest.mcid {
            let est = crate::outcomes::estimate_mcid_with_factor(&records, domain, cfg.mcid_factor).unwrap();
            assert!((est.mcid - m).abs() < 1e-12);
            for t in &g.manifest.patients {
                for l in t.labels.iter().filter(|l| l.domain == domain) {
                    assert_eq!(label_delta(l.delta, est.mcid), l.label);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = SynthConfig {
            n_patients: 30,
            ..Default::default()
        };
        let lex = ExerciseLexicon::builtin();
        assert_eq!(generate(&cfg, &lex).unwrap(), generate(&cfg, &lex).unwrap());
        let other = SynthConfig { seed: 1, ..cfg };
        assert_ne!(
            generate(&other, &lex).unwrap().notes,
            generate(
                &SynthConfig {
                    n_patients: 30,
                    ..Default::default()
                },
                &lex
            )
            .unwrap()
            .notes
        );
    }

    #[test]
    fn unknown_planted_exercise_is_a_config_error() {
        let mut cfg = SynthConfig::default();
        cfg.planted_effects[0].exercise = "JUGGLING".into();
        assert!(matches!(
            generate(&cfg, &ExerciseLexicon::builtin()),
            Err(SynthError::Config(_))
        ));
    }
}
