//! `rehab analyze`: cohort assembly, MCID labels, score trajectory tests,
//! association screens and box plots.

use std::path::PathBuf;

use rehab_core::cohort::{write_cohort, PatientRecord, Stage, Timepoint};
use rehab_core::outcomes::write_outcomes;
use rehab_core::stats::{
    association_screen, friedman_exact, friedman_test, wilcoxon_signed_rank, write_association_csv, TestResult,
};
use rehab_core::Domain;

use crate::pipeline::{self, csv_bytes, fmt_f64};
use crate::{svg, write_file, CliError, Context, InputArgs};

/// Largest complete-case count for which the exact Friedman p-value is added.
pub const FRIEDMAN_EXACT_MAX_N: usize = 30;

pub const NONPARAMETRIC_HEADER: [&str; 7] = ["domain", "test", "comparison", "n", "statistic", "p_value", "method"];
pub const POPULATION_HEADER: [&str; 6] = ["domain", "stage", "n", "improved", "not_improved", "improved_pct"];
pub const MCID_HEADER: [&str; 5] = ["domain", "pooled_n", "pooled_sd", "factor", "mcid"];
pub const SKIPPED_HEADER: [&str; 4] = ["step", "domain", "stage", "reason"];

pub fn association_file(domain: Domain, stage: Stage) -> String {
    format!("association_{}_{}.csv", domain.code(), stage.code())
}

pub fn boxplot_file(domain: Domain) -> String {
    format!("boxplot_{}.svg", domain.code())
}

fn complete_cases(records: &[PatientRecord], domain: Domain) -> Vec<[f64; 3]> {
    records
        .iter()
        .filter_map(|r| {
            Some([
                r.score(domain, Timepoint::T0)?,
                r.score(domain, Timepoint::M1)?,
                r.score(domain, Timepoint::M2)?,
            ])
        })
        .collect()
}

fn test_row(domain: Domain, test: &str, comparison: &str, n: usize, res: Result<TestResult, String>) -> [String; 7] {
    let (stat, p, method) = match res {
        Ok(t) => (
            t.statistic.map_or("NA".into(), |s| fmt_f64(s, 4)),
            format!("{:.6e}", t.p_value),
            t.method.code().to_string(),
        ),
        Err(reason) => ("NA".into(), "NA".into(), format!("NA ({reason})")),
    };
    [
        domain.code().into(),
        test.into(),
        comparison.into(),
        n.to_string(),
        stat,
        p,
        method,
    ]
}

/// Friedman and pairwise Wilcoxon rows on patients scored at all three timepoints.
pub fn nonparametric_rows(records: &[PatientRecord]) -> Vec<[String; 7]> {
    let mut rows = Vec::new();
    for domain in Domain::ALL {
        let cases = complete_cases(records, domain);
        let n = cases.len();
        rows.push(test_row(
            domain,
            "FRIEDMAN",
            "T0-M1-M2",
            n,
            friedman_test(&cases).map_err(|e| e.to_string()),
        ));
        if n <= FRIEDMAN_EXACT_MAX_N {
            rows.push(test_row(
                domain,
                "FRIEDMAN",
                "T0-M1-M2",
                n,
                friedman_exact(&cases).map_err(|e| e.to_string()),
            ));
        }
        for (i, j) in [(0, 1), (1, 2), (0, 2)] {
            let pairs: Vec<(f64, f64)> = cases.iter().map(|c| (c[i], c[j])).collect();
            let label = format!("{}-{}", Timepoint::ALL[i], Timepoint::ALL[j]);
            rows.push(test_row(
                domain,
                "WILCOXON",
                &label,
                n,
                wilcoxon_signed_rank(&pairs).map_err(|e| e.to_string()),
            ));
        }
    }
    rows
}

pub fn cmd_analyze(ctx: &Context, args: &InputArgs) -> Result<Vec<PathBuf>, CliError> {
    let (records, lexicon) = pipeline::load_records(ctx, args)?;
    if records.is_empty() {
        return Err(CliError::Runtime("cohort is empty".into()));
    }
    let labelled = pipeline::label_cohort(&records, ctx.config.outcomes.mcid_factor);
    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<(), CliError> {
        let path = ctx.output(name);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(())
    };

    let mut buf = Vec::new();
    write_cohort(&mut buf, &records).map_err(|e| CliError::Runtime(e.to_string()))?;
    emit("cohort.jsonl", buf)?;

    emit(
        "mcid.csv",
        csv_bytes(
            &MCID_HEADER,
            labelled.mcid.iter().map(|m| {
                [
                    m.domain.code().to_string(),
                    m.pooled_n.to_string(),
                    fmt_f64(m.pooled_sd, 6),
                    fmt_f64(m.factor, 4),
                    fmt_f64(m.mcid, 6),
                ]
            }),
        )?,
    )?;

    let mut buf = Vec::new();
    write_outcomes(&mut buf, &labelled.all_outcomes())?;
    emit("outcomes.csv", buf)?;

    let mut skipped: Vec<[String; 4]> = labelled
        .skipped
        .iter()
        .map(|(domain, reason)| ["labels".into(), domain.code().into(), String::new(), reason.clone()])
        .collect();
    let mut populations = Vec::new();
    for ((domain, stage), outcomes) in &labelled.outcomes {
        let improved = outcomes.iter().filter(|o| o.label.is_improved()).count();
        let n = outcomes.len();
        populations.push([
            domain.code().to_string(),
            stage.code().to_string(),
            n.to_string(),
            improved.to_string(),
            (n - improved).to_string(),
            if n == 0 {
                "NA".into()
            } else {
                fmt_f64(100.0 * improved as f64 / n as f64, 1)
            },
        ]);
        if outcomes.is_empty() {
            skipped.push([
                "association".into(),
                domain.code().into(),
                stage.code().into(),
                "no patient scored at both stage endpoints".into(),
            ]);
            continue;
        }
        let results = association_screen(outcomes, &records, &lexicon, *stage, &ctx.config.screen)?;
        let mut buf = Vec::new();
        write_association_csv(&mut buf, &results)?;
        emit(&association_file(*domain, *stage), buf)?;
    }
    emit("populations.csv", csv_bytes(&POPULATION_HEADER, populations)?)?;
    emit(
        "nonparametric.csv",
        csv_bytes(&NONPARAMETRIC_HEADER, nonparametric_rows(&records))?,
    )?;

    for domain in Domain::ALL {
        let groups: Vec<(String, Vec<f64>)> = Timepoint::ALL
            .iter()
            .map(|&tp| {
                (
                    tp.to_string(),
                    records.iter().filter_map(|r| r.score(domain, tp)).collect(),
                )
            })
            .collect();
        if groups.iter().all(|(_, v)| v.is_empty()) {
            continue;
        }
        let title = format!("AM-PAC {} scores by timepoint", domain.code());
        emit(
            &boxplot_file(domain),
            svg::box_plot(&title, "score", &groups).into_bytes(),
        )?;
    }
    emit("skipped.csv", csv_bytes(&SKIPPED_HEADER, skipped)?)?;
    Ok(written)
}
