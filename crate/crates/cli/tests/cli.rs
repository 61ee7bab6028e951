use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

fn mcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcs")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

fn simulate(dir: &Path, name: &str, cfg: serde_json::Value) -> PathBuf {
    let out = dir.join(name);
    let mut cfg = cfg;
    cfg["output_dir"] = json!(out);
    let path = write_config(dir, &format!("{name}.json"), cfg);
    let o = mcs(&["simulate", "--config", path.to_str().unwrap()]);
    assert!(o.status.success(), "simulate failed: {}", String::from_utf8_lossy(&o.stderr));
    out
}

fn golden_config() -> serde_json::Value {
    json!({"n_sessions": 10, "seed": 7, "dss_calibration": "mixed"})
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn csv_field(table: &str, row_prefix: &str, col: usize) -> String {
    table.lines().find(|l| l.starts_with(row_prefix)).unwrap().split(',').nth(col).unwrap().to_string()
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = simulate(tmp.path(), "a", golden_config());
    let b = simulate(tmp.path(), "b", golden_config());
    for sub in ["summary", "records", "logs"] {
        assert_eq!(read_dir_sorted(&a.join(sub)), read_dir_sorted(&b.join(sub)), "{sub} differs");
    }
    assert_eq!(fs::read_dir(a.join("records")).unwrap().count(), 10);
}

#[test]
fn analyze_matches_golden_fixtures() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(tmp.path(), "g", golden_config());
    let tables = tmp.path().join("tables");
    let o = mcs(&["analyze", out.join("records").to_str().unwrap(), "--out", tables.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let produced = read_dir_sorted(&tables);
    assert_eq!(produced.len(), 7);
    if std::env::var_os("MCS_UPDATE_GOLDENS").is_some() {
        fs::create_dir_all(&golden).unwrap();
        for (name, bytes) in &produced {
            fs::write(golden.join(name), bytes).unwrap();
        }
    }
    assert_eq!(produced, read_dir_sorted(&golden));
    // analysis of the written records reproduces the run's own summary
    assert_eq!(produced, read_dir_sorted(&out.join("summary")));
}

#[test]
fn calibrated_operator_and_dss_beat_random_on_disagreement() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(tmp.path(), "w", json!({"n_sessions": 10, "seed": 3, "dss_calibration": "well"}));
    let t = fs::read_to_string(out.join("summary/strategy_accuracy.csv")).unwrap();
    let mcs_dis: f64 = csv_field(&t, "MCS,disagreement", 4).parse().unwrap();
    let dr_dis: f64 = csv_field(&t, "DR,disagreement", 4).parse().unwrap();
    assert!(mcs_dis > dr_dis, "MCS {mcs_dis} vs DR {dr_dis}");
}

#[test]
fn strategies_filter_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(
        tmp.path(),
        "f",
        json!({"n_sessions": 1, "seed": 1, "strategies": ["MCS", "HP"], "session": {"n_trials": 20}}),
    );
    let t = fs::read_to_string(out.join("summary/strategy_accuracy.csv")).unwrap();
    let names: Vec<&str> = t.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["MCS", "MCS", "HP", "HP"]);
}

#[test]
fn no_changes_flag_undefined_percentages() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(
        tmp.path(),
        "z",
        json!({"n_sessions": 2, "seed": 5, "advice_reliance": 0.0, "session": {"n_trials": 20}}),
    );
    let t = fs::read_to_string(out.join("summary/change_dynamics.csv")).unwrap();
    assert!(t.lines().skip(1).all(|l| l.ends_with(",0,0,0,NA,NA,1")), "{t}");
}

#[test]
fn mixed_corpus_splits_by_calibration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(tmp.path(), "m", json!({"n_sessions": 2, "seed": 9, "dss_calibration": "mixed", "session": {"n_trials": 20}}));
    let o = mcs(&["analyze", out.join("records").to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let split = text.split("# calibration_split\n").nth(1).unwrap();
    let rows: Vec<&str> = split.lines().take_while(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("well,1,20,") && rows[2].starts_with("poor,1,20,"));
}

#[test]
fn validation_and_io_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let zero = write_config(tmp.path(), "zero.json", json!({"n_sessions": 0}));
    assert_eq!(mcs(&["simulate", "--config", zero.to_str().unwrap()]).status.code(), Some(2));
    let bad = write_config(tmp.path(), "bad.json", json!({"dss_calibration": "medium"}));
    assert_eq!(mcs(&["simulate", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    let missing = tmp.path().join("nope.json");
    assert_eq!(mcs(&["simulate", "--config", missing.to_str().unwrap()]).status.code(), Some(3));
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = mcs(&["analyze", empty.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no trial-record CSV files"));
}

#[test]
fn ingest_builds_tables_and_reports_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = tmp.path().join("ok.csv");
    fs::write(&ok, "participant_id,level,correct,confidence\np1,1,1,4\np1,1,0,1\np1,2,1,3\n").unwrap();
    let o = mcs(&["ingest", ok.to_str().unwrap(), "--out", tmp.path().join("t").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "participant_id,n_trials,auroc2,partition\np1,3,1.000000,well\n");
    let table: mcs_core::agents::ConfidenceTable =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("t/tables_well.json")).unwrap()).unwrap();
    let lvl = mcs_core::staircase::DifficultyLevel::new(2).unwrap();
    assert_eq!(table.cell(lvl, true), &[0.2, 0.2, 0.4, 0.2]);
    assert!(!tmp.path().join("t/tables_poor.json").exists());

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "participant_id,level,correct,confidence\np1,1,1,4\np1,1,0,7\n").unwrap();
    let o = mcs(&["ingest", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 3"));

    let mid = tmp.path().join("mid.csv");
    let mut rows = String::from("participant_id,level,correct,confidence\n");
    for (c, k) in [(1, 4), (1, 2), (1, 2), (0, 2), (0, 2), (0, 3)] {
        rows.push_str(&format!("m,2,{c},{k}\n"));
    }
    fs::write(&mid, rows).unwrap();
    let o = mcs(&["ingest", mid.to_str().unwrap(), "--out", tmp.path().join("mid").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().ends_with("m,6,0.555556,none\n"));
    assert!(!tmp.path().join("mid/tables_well.json").exists());
}

#[test]
fn ingested_table_drives_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.csv");
    let mut rows = String::from("participant_id,level,correct,confidence\n");
    for i in 0..40 {
        rows.push_str(&format!("p,{},{},{}\n", i % 5 + 1, u8::from(i % 3 != 0), if i % 3 != 0 { 4 } else { 1 }));
    }
    fs::write(&data, rows).unwrap();
    assert!(mcs(&["ingest", data.to_str().unwrap()]).status.success());
    let table = tmp.path().join("tables_well.json");
    let out = simulate(
        tmp.path(),
        "tf",
        json!({"n_sessions": 1, "session": {"n_trials": 10},
               "dss_calibration": {"table_file": table, "calibration": "well"}}),
    );
    assert_eq!(fs::read_dir(out.join("records")).unwrap().count(), 1);
}

#[test]
fn replay_reproduces_records_and_rejects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(tmp.path(), "r", json!({"n_sessions": 1, "seed": 11, "session": {"n_trials": 15}}));
    let log = out.join("logs/s0000.jsonl");
    let o = mcs(&["replay", log.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(o.stdout, fs::read(out.join("records/s0000.csv")).unwrap());

    let text = fs::read_to_string(&log).unwrap();
    let truncated: String = text.lines().take(10).map(|l| format!("{l}\n")).collect();
    let bad = tmp.path().join("truncated.jsonl");
    fs::write(&bad, truncated).unwrap();
    assert_eq!(mcs(&["replay", bad.to_str().unwrap()]).status.code(), Some(2));

    let forged = text.replacen("\"confidence\":1", "\"confidence\":2", 1).replacen("\"confidence\":3", "\"confidence\":4", 1);
    let bad = tmp.path().join("forged.jsonl");
    fs::write(&bad, forged).unwrap();
    let o = mcs(&["replay", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
