//! Input loading and outcome labelling shared by the analysis commands.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rehab_core::cohort::{assemble, read_cohort, read_demographics_file, stage_population, PatientRecord, Stage};
use rehab_core::note_parser::{load_lexicon, load_patterns, read_notes_file, AmpacPatterns, ExerciseLexicon};
use rehab_core::outcomes::{estimate_mcid_with_factor, label_outcomes, McidEstimate, OutcomeError, StageOutcome};
use rehab_core::Domain;

use crate::{CliError, Context, InputArgs};

fn pick(flag: &Option<PathBuf>, configured: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone().or_else(|| configured.clone())
}

pub fn lexicon(ctx: &Context, flag: &Option<PathBuf>) -> Result<ExerciseLexicon, CliError> {
    match pick(flag, &ctx.config.inputs.lexicon) {
        Some(path) => load_lexicon(&path).map_err(|e| CliError::from(e).in_file(&path)),
        None => Ok(ExerciseLexicon::builtin()),
    }
}

pub fn patterns(ctx: &Context, flag: &Option<PathBuf>) -> Result<AmpacPatterns, CliError> {
    match pick(flag, &ctx.config.inputs.patterns) {
        Some(path) => load_patterns(&path).map_err(|e| CliError::from(e).in_file(&path)),
        None => Ok(AmpacPatterns::builtin()),
    }
}

pub fn notes_path(ctx: &Context, flag: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    pick(flag, &ctx.config.inputs.notes)
        .ok_or_else(|| CliError::Config("no notes file: pass --notes or set inputs.notes".into()))
}

pub fn read_cohort_file(path: &Path) -> Result<Vec<PatientRecord>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_cohort(BufReader::new(file)).map_err(|e| CliError::from(e).in_file(path))
}

/// Loads an assembled cohort, or assembles one from notes and demographics.
pub fn load_records(ctx: &Context, args: &InputArgs) -> Result<(Vec<PatientRecord>, ExerciseLexicon), CliError> {
    let lexicon = lexicon(ctx, &args.lexicon)?;
    let inputs = &ctx.config.inputs;
    let flag_given = args.notes.is_some() || args.demographics.is_some();
    let cohort = if flag_given {
        args.cohort.clone()
    } else {
        pick(&args.cohort, &inputs.cohort)
    };
    if let Some(path) = cohort {
        return Ok((read_cohort_file(&path)?, lexicon));
    }
    let notes = notes_path(ctx, &args.notes)?;
    let demo = pick(&args.demographics, &inputs.demographics).ok_or_else(|| {
        CliError::Config("no demographics file: pass --demographics or set inputs.demographics".into())
    })?;
    let patterns = patterns(ctx, &args.patterns)?;
    let notes = read_notes_file(&notes).map_err(|e| CliError::from(e).in_file(&notes))?;
    let demographics = read_demographics_file(&demo).map_err(|e| CliError::from(e).in_file(&demo))?;
    let records = assemble(&notes, &demographics, &lexicon, &patterns, &ctx.config.binning)?;
    Ok((records, lexicon))
}

/// MCIDs and stage outcomes for every domain with enough data.
#[derive(Debug, Clone, Default)]
pub struct Labelled {
    pub mcid: Vec<McidEstimate>,
    pub outcomes: BTreeMap<(Domain, Stage), Vec<StageOutcome>>,
    /// Domains that could not be labelled, with the reason.
    pub skipped: Vec<(Domain, String)>,
}

impl Labelled {
    pub fn all_outcomes(&self) -> Vec<StageOutcome> {
        self.outcomes.values().flatten().cloned().collect()
    }
}

pub fn label_cohort(records: &[PatientRecord], mcid_factor: f64) -> Labelled {
    let mut out = Labelled::default();
    for domain in Domain::ALL {
        let est = match estimate_mcid_with_factor(records, domain, mcid_factor) {
            Ok(est) => est,
            Err(OutcomeError::InsufficientData { found, .. }) => {
                out.skipped
                    .push((domain, format!("only {found} scores, MCID needs at least 2")));
                continue;
            }
        };
        for stage in Stage::ALL {
            let population = stage_population(records, domain, stage);
            out.outcomes
                .insert((domain, stage), label_outcomes(&population, domain, stage, est.mcid));
        }
        out.mcid.push(est);
    }
    out
}

pub fn fmt_f64(v: f64, decimals: usize) -> String {
    if v.is_nan() {
        "NA".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.decimals$}")
    }
}

/// Serialises rows through a CSV writer into memory.
pub fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>, CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header)?;
    for row in rows {
        wtr.write_record(row)?;
    }
    wtr.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}
