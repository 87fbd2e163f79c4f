//! `rehab report`: bundles the artifacts of a run directory into a single
//! markdown file. Section order is fixed and no timestamps or absolute
//! paths are written, so identical runs give identical reports.

use std::fmt::Write;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use rehab_core::cohort::Stage;
use rehab_core::models::ModelKind;
use rehab_core::Domain;

use crate::analyze::{association_file, boxplot_file};
use crate::train_eval::roc_file;
use crate::{write_file, CliError, Context, ReportArgs};

pub const REPORT_FILE: &str = "report.md";

type CsvTable = (Vec<String>, Vec<Vec<String>>);

fn csv_table(path: &Path) -> Result<Option<CsvTable>, CliError> {
    if !path.is_file() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Some((header, rows)))
}

fn markdown_table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let cell = |s: &str| s.replace('|', "\\|");
    let _ = writeln!(
        out,
        "| {} |",
        header.iter().map(|h| cell(h)).collect::<Vec<_>>().join(" | ")
    );
    let _ = writeln!(out, "|{}", " --- |".repeat(header.len()));
    for row in rows {
        let _ = writeln!(
            out,
            "| {} |",
            row.iter().map(|c| cell(c)).collect::<Vec<_>>().join(" | ")
        );
    }
    out.push('\n');
}

struct Builder<'a> {
    dir: &'a Path,
    text: String,
    found: usize,
    missing: Vec<String>,
}

impl Builder<'_> {
    fn table(&mut self, name: &str, empty_note: &str) -> Result<(), CliError> {
        match csv_table(&self.dir.join(name))? {
            Some((header, rows)) => {
                self.found += 1;
                if rows.is_empty() {
                    let _ = writeln!(self.text, "_{empty_note}_ (`{name}`)\n");
                } else {
                    let _ = writeln!(self.text, "Source: `{name}`\n");
                    markdown_table(&mut self.text, &header, &rows);
                }
            }
            None => self.missing.push(name.to_string()),
        }
        Ok(())
    }

    fn image(&mut self, name: &str, alt: &str) {
        if self.dir.join(name).is_file() {
            self.found += 1;
            let _ = writeln!(self.text, "![{alt}]({name})\n");
        } else {
            self.missing.push(name.to_string());
        }
    }

    fn heading(&mut self, text: &str) {
        let _ = writeln!(self.text, "{text}\n");
    }
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = WalkDir::new(dir)
        .into_iter()
        .flatten()
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| e.path().strip_prefix(dir).ok().map(|p| p.to_string_lossy().replace('\\', "/")))
        .filter(|name| name != REPORT_FILE)
        .collect();
    names.sort();
    names
}

/// Renders the report for `dir`.
pub fn build_report(dir: &Path) -> Result<String, CliError> {
    let mut b = Builder {
        dir,
        text: String::new(),
        found: 0,
        missing: Vec::new(),
    };
    b.heading("# Rehabilitation outcome report");

    b.heading("## Cohort and outcome labels");
    b.heading("### MCID per domain");
    b.table("mcid.csv", "no domain had enough scores")?;
    b.heading("### Stage populations");
    b.table("populations.csv", "no stage population")?;

    b.heading("## Score trajectories");
    b.table("nonparametric.csv", "no complete cases")?;
    for d in Domain::ALL {
        b.image(&boxplot_file(d), &format!("{} scores by timepoint", d.code()));
    }

    b.heading("## Exercise and demographic associations");
    for d in Domain::ALL {
        for s in Stage::ALL {
            b.heading(&format!("### {} {}", d.code(), s.code()));
            b.table(&association_file(d, s), "no feature passed the screening threshold")?;
        }
    }

    b.heading("## Classifier performance");
    b.table("ml_metrics.csv", "no model was evaluated")?;
    for d in Domain::ALL {
        for s in Stage::ALL {
            let all = roc_file(d, s, None);
            if dir.join(&all).is_file() {
                b.image(&all, &format!("ROC {} {}", d.code(), s.code()));
                let rf = roc_file(d, s, Some(ModelKind::Rf));
                if dir.join(&rf).is_file() {
                    b.image(&rf, &format!("RF ROC {} {}", d.code(), s.code()));
                }
            }
        }
    }

    for name in ["skipped.csv", "ml_skipped.csv"] {
        if let Some((header, rows)) = csv_table(&dir.join(name))? {
            if !rows.is_empty() {
                b.heading(&format!("## Skipped steps (`{name}`)"));
                markdown_table(&mut b.text, &header, &rows);
            }
        }
    }

    if b.found == 0 {
        return Ok(
            "# Rehabilitation outcome report\n\nNo artifacts were found in the run directory. \
                   Run `rehab analyze` and `rehab train-eval` with the same `--out` first.\n"
                .to_string(),
        );
    }

    b.heading("## Missing artifacts");
    if b.missing.is_empty() {
        b.heading("None.");
    } else {
        for m in &b.missing {
            let _ = writeln!(b.text, "- `{m}`");
        }
        b.text.push('\n');
    }

    b.heading("## Files in the run directory");
    for name in listing(dir) {
        let _ = writeln!(b.text, "- `{name}`");
    }
    Ok(b.text)
}

pub fn cmd_report(ctx: &Context, args: &ReportArgs) -> Result<Vec<PathBuf>, CliError> {
    let dir = args.run.clone().unwrap_or_else(|| ctx.out.clone());
    if !dir.is_dir() {
        return Err(CliError::Runtime(format!(
            "run directory {} does not exist",
            dir.display()
        )));
    }
    let text = build_report(&dir)?;
    let path = dir.join(REPORT_FILE);
    write_file(&path, text.as_bytes())?;
    Ok(vec![path])
}
