//! Command implementations behind the `mcs` binary.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use mcs_core::agents::{ingest_dataset, read_dataset_csv, AiDssModel, ConfidenceTable, DEFAULT_AI_ACCURACY};
use mcs_core::experiment::{dss_for_session, run_experiment, DssSpec, ExperimentConfig};
use mcs_core::fusion::StrategyId;
use mcs_core::report::{analyze_records, strategy_table, Table};
use mcs_core::session::{read_records_csv, records_to_csv, replay, EventLog, TrialRecord};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("no trial-record CSV files in {0}")]
    EmptyInput(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::EmptyInput(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    fn invalid(e: impl ToString) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = serde_json::from_str(&read(path)?).map_err(CliError::invalid)?;
    cfg.validate().map_err(CliError::invalid)?;
    Ok(cfg)
}

fn load_table_dss(path: &Path, cfg: &ExperimentConfig) -> Result<AiDssModel, CliError> {
    let DssSpec::TableFile { calibration, .. } = &cfg.dss_calibration else {
        unreachable!("called for table files only");
    };
    let table: ConfidenceTable = serde_json::from_str(&read(path)?).map_err(CliError::invalid)?;
    table.validate().map_err(CliError::invalid)?;
    AiDssModel::new(DEFAULT_AI_ACCURACY, table, *calibration).map_err(CliError::invalid)
}

/// Files written by [`simulate`], relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulateOutput {
    pub logs: Vec<PathBuf>,
    pub records: Vec<PathBuf>,
    pub summaries: Vec<PathBuf>,
}

fn write_tables(dir: &Path, tables: &[Table]) -> Result<Vec<PathBuf>, CliError> {
    tables
        .iter()
        .map(|t| {
            let p = dir.join(format!("{}.csv", t.name));
            write(&p, &t.csv)?;
            Ok(p)
        })
        .collect()
}

/// Runs the experiment and writes `logs/<id>.jsonl`, `records/<id>.csv` and
/// `summary/<table>.csv` under the configured output directory.
pub fn simulate(cfg: &ExperimentConfig) -> Result<SimulateOutput, CliError> {
    cfg.validate().map_err(CliError::invalid)?;
    let runs = match &cfg.dss_calibration {
        DssSpec::Label(label) => run_experiment(cfg, |i| dss_for_session(*label, i)),
        DssSpec::TableFile { table_file, .. } => {
            let dss = load_table_dss(table_file, cfg)?;
            run_experiment(cfg, |_| dss.clone())
        }
    }
    .map_err(CliError::invalid)?;

    let out = &cfg.output_dir;
    let mut written = SimulateOutput { logs: Vec::new(), records: Vec::new(), summaries: Vec::new() };
    let mut all: Vec<TrialRecord> = Vec::new();
    for run in &runs {
        let log = out.join("logs").join(format!("{}.jsonl", run.id));
        write(&log, &run.log.to_jsonl())?;
        let rec = out.join("records").join(format!("{}.csv", run.id));
        write(&rec, &records_to_csv(&run.records))?;
        written.logs.push(log);
        written.records.push(rec);
        all.extend(run.records.iter().cloned());
    }
    let mut tables = analyze_records(&all, &StrategyId::ALL).map_err(CliError::invalid)?;
    for t in tables.iter_mut().filter(|t| t.name == "strategy_accuracy") {
        *t = strategy_table(&all, &cfg.strategies);
    }
    written.summaries = write_tables(&out.join("summary"), &tables)?;
    Ok(written)
}

/// Loads every trial-record CSV in a directory, in file-name order.
pub fn load_records_dir(dir: &Path) -> Result<Vec<TrialRecord>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::EmptyInput(dir.to_path_buf()));
    }
    let mut records = Vec::new();
    for f in &files {
        let file = fs::File::open(f).map_err(io_err(f))?;
        let rs = read_records_csv(file).map_err(|e| CliError::Validation(format!("{}: {e}", f.display())))?;
        records.extend(rs);
    }
    if records.is_empty() {
        return Err(CliError::EmptyInput(dir.to_path_buf()));
    }
    Ok(records)
}

pub fn analyze(dir: &Path) -> Result<Vec<Table>, CliError> {
    let records = load_records_dir(dir)?;
    analyze_records(&records, &StrategyId::ALL).map_err(CliError::invalid)
}

pub fn analyze_to(dir: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    write_tables(out, &analyze(dir)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutput {
    pub written: Vec<PathBuf>,
    pub summary_csv: String,
}

/// Builds confidence tables from a dataset CSV and writes
/// `tables_well.json` / `tables_poor.json` for the non-empty partitions.
pub fn ingest(csv_path: &Path, out_dir: &Path) -> Result<IngestOutput, CliError> {
    let file = fs::File::open(csv_path).map_err(io_err(csv_path))?;
    let per = read_dataset_csv(file).map_err(|e| CliError::Validation(format!("{}: {e}", csv_path.display())))?;
    let res = ingest_dataset(&per).map_err(CliError::invalid)?;
    let mut written = Vec::new();
    for (name, table) in [("tables_well.json", &res.well), ("tables_poor.json", &res.poor)] {
        if let Some(t) = table {
            let p = out_dir.join(name);
            write(&p, &(serde_json::to_string_pretty(t).expect("tables serialize") + "\n"))?;
            written.push(p);
        }
    }
    let mut summary_csv = String::from("participant_id,n_trials,auroc2,partition\n");
    for p in &res.participants {
        let a = p.auroc2.map_or_else(|| "NA".into(), |a| format!("{a:.6}"));
        let part = p.partition.map_or_else(|| "none".into(), |c| c.to_string());
        summary_csv.push_str(&format!("{},{},{a},{part}\n", p.participant_id, p.n_trials));
    }
    Ok(IngestOutput { written, summary_csv })
}

/// Replays a JSON-lines event log and returns the record CSV.
pub fn replay_log(path: &Path) -> Result<String, CliError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let log = EventLog::read_jsonl(io::BufReader::new(file)).map_err(CliError::invalid)?;
    let records = replay(&log).map_err(CliError::invalid)?;
    Ok(records_to_csv(&records))
}
