//! End-to-end behaviour of the `rehab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn rehab(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rehab"));
    cmd.args(args).env_remove("REHAB_OUT");
    if let Some(out) = out {
        cmd.arg("--out").arg(out);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("rehab.toml");
    std::fs::write(
        &path,
        "seed = 5\n[synth]\nn_patients = 120\n[models.rf]\nn_trees = 25\n[models.adb]\nn_rounds = 20\n[models.gb]\nn_rounds = 20\n",
    )
    .unwrap();
    path
}

#[test]
fn malformed_note_line_exits_2_and_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let notes = dir.path().join("notes.jsonl");
    let good = r#"{"patient_id":"P1","date":"2022-01-03","text":"AM-PAC Basic Mobility score: 40"}"#;
    let mut lines = vec![good; 6];
    lines.push("{not json");
    std::fs::write(&notes, lines.join("\n")).unwrap();
    let o = rehab(&["parse", "--notes", notes.to_str().unwrap()], Some(dir.path()));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("line 7"), "{}", stderr(&o));
    assert!(stderr(&o).contains("notes.jsonl"));
}

#[test]
fn invalid_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[models]\nfolds = 1\n").unwrap();
    let o = rehab(&["--config", cfg.to_str().unwrap(), "simulate"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("folds"));

    let o = rehab(
        &[
            "replay",
            "--counts",
            "1,2,3",
            "--feature",
            "BALANCE",
            "--stage",
            "EARLY",
            "--domain",
            "AC",
        ],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn missing_input_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = rehab(
        &["parse", "--notes", dir.path().join("absent.jsonl").to_str().unwrap()],
        Some(dir.path()),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn parse_writes_one_row_per_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let notes = dir.path().join("notes.jsonl");
    std::fs::write(
        &notes,
        r#"{"patient_id":"P1","date":"2022-01-03","text":"AM-PAC Basic Mobility score: 40. Gait training, sit to stand x10."}"#,
    )
    .unwrap();
    let o = rehab(&["parse", "--notes", notes.to_str().unwrap()], Some(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("extractions.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "patient_id,date,kind,name,value,span_start,span_end");
    assert!(lines.contains(&"P1,2022-01-03,AMPAC,BM,40,,"), "{csv}");
    assert!(lines.iter().any(|l| l.starts_with("P1,2022-01-03,EXERCISE,GAIT,Gait,")));
    assert!(lines
        .iter()
        .any(|l| l.starts_with("P1,2022-01-03,EXERCISE,SIT TO STAND,")));
}

#[test]
fn rehab_out_environment_variable_sets_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_rehab"))
        .args(["--config", cfg.to_str().unwrap(), "simulate"])
        .env("REHAB_OUT", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("notes.jsonl").is_file());
    assert!(target.join("manifest.json").is_file());
}

#[test]
fn replayed_counts_come_back_out_of_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let o = rehab(
        &[
            "replay",
            "--counts",
            "10,6,16,77",
            "--feature",
            "BALANCE",
            "--stage",
            "EARLY",
            "--domain",
            "AC",
        ],
        Some(dir.path()),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let replay_row = std::fs::read_to_string(dir.path().join("replay_row.csv")).unwrap();
    assert!(
        replay_row
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("BALANCE,YES,10,62.5,16,17.2,"),
        "{replay_row}"
    );

    let analysed = dir.path().join("analysed");
    let cohort = dir.path().join("cohort.jsonl");
    let o = rehab(&["analyze", "--cohort", cohort.to_str().unwrap()], Some(&analysed));
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(analysed.join("association_AC_EARLY.csv")).unwrap();
    let row = table.lines().find(|l| l.starts_with("BALANCE,")).unwrap();
    assert_eq!(row, replay_row.lines().nth(1).unwrap());
    assert!(row.contains(",CHI2_YATES,7.8100,"), "{row}");
}

#[test]
fn too_few_minority_patients_exit_1_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let o = rehab(
        &[
            "replay",
            "--counts",
            "1,1,10,20",
            "--feature",
            "BALANCE",
            "--stage",
            "EARLY",
            "--domain",
            "BM",
        ],
        Some(dir.path()),
    );
    assert!(o.status.success());
    let cohort = dir.path().join("cohort.jsonl");
    let o = rehab(
        &["train-eval", "--cohort", cohort.to_str().unwrap()],
        Some(&dir.path().join("ml")),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("hint"), "{}", stderr(&o));
}

#[test]
fn report_on_empty_directory_says_so() {
    let dir = tempfile::tempdir().unwrap();
    let o = rehab(&["report"], Some(dir.path()));
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(text.contains("No artifacts were found"));
}

#[test]
fn report_lists_missing_artifacts_without_absolute_paths() {
    let dir = tempfile::tempdir().unwrap();
    let o = rehab(
        &[
            "replay",
            "--counts",
            "10,6,16,77",
            "--feature",
            "BALANCE",
            "--stage",
            "EARLY",
            "--domain",
            "AC",
        ],
        Some(dir.path()),
    );
    assert!(o.status.success());
    let cohort = dir.path().join("cohort.jsonl");
    assert!(
        rehab(&["analyze", "--cohort", cohort.to_str().unwrap()], Some(dir.path()))
            .status
            .success()
    );
    assert!(rehab(&["report"], Some(dir.path())).status.success());
    let text = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(text.contains("## Missing artifacts"));
    assert!(text.contains("- `ml_metrics.csv`"));
    assert!(text.contains("| BALANCE | YES | 10 | 62.5 |"));
    assert!(!text.contains(dir.path().to_str().unwrap()));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let data = dir.path().join("data");
    assert!(rehab(&["--config", cfg, "simulate"], Some(&data)).status.success());
    let notes = data.join("notes.jsonl");
    let demo = data.join("demographics.csv");
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = rehab(
            &[
                "--config",
                cfg,
                "--threads",
                threads,
                "train-eval",
                "--notes",
                notes.to_str().unwrap(),
                "--demographics",
                demo.to_str().unwrap(),
            ],
            Some(&out),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        outputs.push((
            std::fs::read(out.join("ml_metrics.csv")).unwrap(),
            std::fs::read(out.join("roc.csv")).unwrap(),
            std::fs::read(out.join("models/BM_LATE_RF.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn seed_flag_changes_the_synthetic_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let read = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        assert!(rehab(&["--config", cfg, "--seed", seed, "simulate"], Some(&out))
            .status
            .success());
        std::fs::read(out.join("notes.jsonl")).unwrap()
    };
    assert_eq!(read("1", "a"), read("1", "b"));
    assert_ne!(read("1", "c"), read("2", "d"));
}
