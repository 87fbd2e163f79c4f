//! `rehab simulate` and `rehab replay`.

use std::path::PathBuf;

use rehab_core::cohort::{write_cohort, AgeBin, Race, Sex, Stage};
use rehab_core::outcomes::write_outcomes;
use rehab_core::stats::{screen_features, write_association_csv, ContingencyTable2x2, Feature};
use rehab_core::synth::{generate, replay_table};
use rehab_core::Domain;

use crate::pipeline;
use crate::{write_file, CliError, Context, ReplayArgs};

pub fn cmd_simulate(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let mut cfg = ctx.config.synth.clone();
    if ctx.seed_overridden {
        cfg.seed = ctx.seed;
    }
    let lexicon = pipeline::lexicon(ctx, &None)?;
    let cohort = generate(&cfg, &lexicon)?;
    let mut written: Vec<PathBuf> = cohort
        .write_to_dir(&ctx.out)
        .map_err(|e| CliError::io(&ctx.out, e))?
        .into();
    let path = ctx.output("synth_config.toml");
    write_file(&path, cfg.to_toml_string().as_bytes())?;
    written.push(path);
    Ok(written)
}

/// Parses `BALANCE`, `SEX=FEMALE`, `RACE=NOT_WHITE`, `AGE=UNDER_40`, ...
pub fn parse_feature(text: &str) -> Result<Feature, String> {
    let text = text.trim();
    let Some((kind, level)) = text.split_once(['=', ':']) else {
        return Ok(Feature::Exercise(text.to_ascii_uppercase()));
    };
    let level = level.trim().to_ascii_uppercase().replace([' ', '-'], "_");
    let bad = || format!("unknown level {level:?} for {kind}");
    match kind.trim().to_ascii_uppercase().as_str() {
        "SEX" => match level.as_str() {
            "FEMALE" => Ok(Feature::Sex(Sex::Female)),
            "MALE" => Ok(Feature::Sex(Sex::Male)),
            _ => Err(bad()),
        },
        "RACE" => match level.as_str() {
            "WHITE" => Ok(Feature::Race(Race::White)),
            "NOT_WHITE" | "NON_WHITE" => Ok(Feature::Race(Race::NotWhite)),
            _ => Err(bad()),
        },
        "AGE" => match level.as_str() {
            "UNDER_40" => Ok(Feature::Age(AgeBin::Under40)),
            "FROM_40_TO_60" | "40_60" => Ok(Feature::Age(AgeBin::From40To60)),
            "OVER_60" => Ok(Feature::Age(AgeBin::Over60)),
            _ => Err(bad()),
        },
        other => Err(format!("unknown feature kind {other:?}; use SEX, RACE or AGE")),
    }
}

fn parse_counts(text: &str) -> Result<ContingencyTable2x2, String> {
    let cells: Vec<u64> = text
        .split(',')
        .map(|c| c.trim().parse::<u64>().map_err(|e| format!("bad count {c:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [a, b, c, d] = cells[..] else {
        return Err(format!("expected 4 counts a,b,c,d, got {}", cells.len()));
    };
    ContingencyTable2x2::new(a, b, c, d).map_err(|e| e.to_string())
}

pub fn cmd_replay(ctx: &Context, args: &ReplayArgs) -> Result<Vec<PathBuf>, CliError> {
    let table = parse_counts(&args.counts).map_err(|e| CliError::Config(format!("--counts: {e}")))?;
    let feature = parse_feature(&args.feature).map_err(|e| CliError::Config(format!("--feature: {e}")))?;
    let stage: Stage = args
        .stage
        .parse()
        .map_err(|e| CliError::Config(format!("--stage: {e}")))?;
    let domain: Domain = args
        .domain
        .parse()
        .map_err(|e| CliError::Config(format!("--domain: {e}")))?;
    let lexicon = pipeline::lexicon(ctx, &None)?;
    if let Feature::Exercise(name) = &feature {
        if !lexicon.contains(name) {
            return Err(CliError::Config(format!("--feature: {name:?} is not in the lexicon")));
        }
    }

    let replay = replay_table(&table, &feature, stage, domain);
    let results = screen_features(&replay.outcomes, &replay.records, &lexicon, stage, &ctx.config.screen)?;
    let row: Vec<_> = results.into_iter().filter(|r| r.feature == feature).collect();

    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<(), CliError> {
        let path = ctx.output(name);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    let mut buf = Vec::new();
    write_cohort(&mut buf, &replay.records).map_err(|e| CliError::Runtime(e.to_string()))?;
    emit("cohort.jsonl", buf)?;
    let mut buf = Vec::new();
    write_outcomes(&mut buf, &replay.outcomes)?;
    emit("replay_outcomes.csv", buf)?;
    let mut buf = Vec::new();
    write_association_csv(&mut buf, &row)?;
    emit("replay_row.csv", buf)?;
    Ok(written)
}
