//! `rehab train-eval`: stratified cross-validation of every configured
//! classifier on every domain and stage.

use std::path::PathBuf;

use rayon::prelude::*;

use rehab_core::cohort::Stage;
use rehab_core::models::{build_features, cross_validate, oversample, train, CvReport, ModelError, ModelKind};
use rehab_core::rng::derive_seed;
use rehab_core::Domain;

use crate::pipeline::{self, csv_bytes, fmt_f64};
use crate::svg::{self, RocSeries};
use crate::{write_file, CliError, Context, InputArgs};

pub const METRICS_HEADER: [&str; 8] = [
    "domain",
    "stage",
    "model",
    "precision",
    "recall",
    "f1",
    "auc",
    "accuracy",
];
pub const FOLD_HEADER: [&str; 10] = [
    "domain",
    "stage",
    "model",
    "fold",
    "n_test",
    "precision",
    "recall",
    "f1",
    "auc",
    "accuracy",
];
pub const ROC_HEADER: [&str; 6] = ["domain", "stage", "model", "fpr", "mean_tpr", "sd_tpr"];

pub fn roc_file(domain: Domain, stage: Stage, kind: Option<ModelKind>) -> String {
    match kind {
        Some(k) => format!("roc_{}_{}_{}.svg", domain.code(), stage.code(), k.code()),
        None => format!("roc_{}_{}.svg", domain.code(), stage.code()),
    }
}

struct CellResult {
    domain: Domain,
    stage: Stage,
    reports: Vec<(ModelKind, CvReport, String)>,
}

fn metric_cells(m: &rehab_core::models::EvalMetrics) -> [String; 5] {
    [m.precision, m.recall, m.f1, m.auc, m.accuracy].map(|v| fmt_f64(v, 4))
}

pub fn cmd_train_eval(ctx: &Context, args: &InputArgs) -> Result<Vec<PathBuf>, CliError> {
    let (records, lexicon) = pipeline::load_records(ctx, args)?;
    let labelled = pipeline::label_cohort(&records, ctx.config.outcomes.mcid_factor);
    let settings = &ctx.config.models;
    let cv = settings.cv();

    let mut cells = Vec::new();
    let mut skipped: Vec<[String; 4]> = Vec::new();
    for &domain in &settings.domains {
        for &stage in &settings.stages {
            let Some(outcomes) = labelled.outcomes.get(&(domain, stage)) else {
                skipped.push([
                    "models".into(),
                    domain.code().into(),
                    stage.code().into(),
                    "domain not labelled".into(),
                ]);
                continue;
            };
            match build_features(&records, outcomes, &lexicon, stage, domain) {
                Ok(x) => cells.push((domain, stage, x)),
                Err(ModelError::EmptyPopulation) => skipped.push([
                    "models".into(),
                    domain.code().into(),
                    stage.code().into(),
                    "no patient scored at both stage endpoints".into(),
                ]),
                Err(e) => return Err(e.into()),
            }
        }
    }

    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|(domain, stage, x)| {
            let tag = format!("{}/{}", domain.code(), stage.code());
            let cv_seed = derive_seed(ctx.seed, &format!("cv/{tag}"), 0);
            let reports = settings
                .kinds
                .par_iter()
                .map(|&kind| {
                    let spec = settings.spec(kind, derive_seed(ctx.seed, &format!("model/{tag}/{}", kind.code()), 0));
                    let report = cross_validate(&spec, x, &cv, cv_seed)
                        .map_err(|e| CliError::from(e).prefixed(&format!("{tag} {}", kind.code())))?;
                    let train_x = if settings.oversample {
                        oversample(x, derive_seed(ctx.seed, &format!("final-oversample/{tag}"), 0))?
                    } else {
                        x.clone()
                    };
                    let model = train(&spec, &train_x)?;
                    Ok((kind, report, model.to_json()))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(CellResult {
                domain: *domain,
                stage: *stage,
                reports,
            })
        })
        .collect::<Result<_, CliError>>()?;

    let mut written = Vec::new();
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<(), CliError> {
        let path = ctx.output(name);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(())
    };

    let mut metrics = Vec::new();
    let mut folds = Vec::new();
    let mut roc = Vec::new();
    for cell in &results {
        let (d, s) = (cell.domain.code(), cell.stage.code());
        for (kind, report, _) in &cell.reports {
            let m = kind.code();
            let mut row = vec![d.to_string(), s.to_string(), m.to_string()];
            row.extend(metric_cells(&report.aggregate));
            metrics.push(row);
            for (i, f) in report.per_fold.iter().enumerate() {
                let mut row = vec![
                    d.to_string(),
                    s.to_string(),
                    m.to_string(),
                    i.to_string(),
                    f.test_indices.len().to_string(),
                ];
                row.extend(metric_cells(&f.metrics));
                folds.push(row);
            }
            for ((fpr, tpr), sd) in report.mean_roc.points.iter().zip(&report.roc_sd) {
                roc.push([
                    d.to_string(),
                    s.to_string(),
                    m.to_string(),
                    fmt_f64(*fpr, 4),
                    fmt_f64(*tpr, 6),
                    fmt_f64(*sd, 6),
                ]);
            }
        }
    }
    emit("ml_metrics.csv", csv_bytes(&METRICS_HEADER, metrics)?)?;
    emit("ml_folds.csv", csv_bytes(&FOLD_HEADER, folds)?)?;
    emit("roc.csv", csv_bytes(&ROC_HEADER, roc)?)?;

    for cell in &results {
        let (d, s) = (cell.domain, cell.stage);
        let label = |kind: ModelKind, r: &CvReport| format!("{} (AUC {})", kind.code(), fmt_f64(r.aggregate.auc, 2));
        let all: Vec<RocSeries<'_>> = cell
            .reports
            .iter()
            .map(|(kind, r, _)| RocSeries {
                label: label(*kind, r),
                points: &r.mean_roc.points,
                band: None,
            })
            .collect();
        let title = format!("Mean ROC, {} {}", d.code(), s.code());
        emit(&roc_file(d, s, None), svg::roc_plot(&title, &all).into_bytes())?;
        for (kind, r, json) in &cell.reports {
            let one = [RocSeries {
                label: label(*kind, r),
                points: &r.mean_roc.points,
                band: Some(&r.roc_sd),
            }];
            let title = format!("{} mean ROC +/- 1 SD, {} {}", kind.code(), d.code(), s.code());
            emit(&roc_file(d, s, Some(*kind)), svg::roc_plot(&title, &one).into_bytes())?;
            emit(
                &format!("models/{}_{}_{}.json", d.code(), s.code(), kind.code()),
                format!("{json}\n").into_bytes(),
            )?;
        }
    }
    emit("ml_skipped.csv", csv_bytes(&crate::analyze::SKIPPED_HEADER, skipped)?)?;
    Ok(written)
}
