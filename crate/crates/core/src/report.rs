//! Figure-analogue CSV tables computed from trial records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{AiDssModel, Calibration, TrialDatum};
use crate::fusion::StrategyId;
use crate::metrics::{
    change_stats, ols_fit, participant_alignment, strategy_accuracy, t_test, virtual_pairing, LevelHistogram,
    MetricError, TTestMode,
};
use crate::session::TrialRecord;

/// Seed of the AI draws in the virtual-pairing table.
pub const VIRTUAL_PAIRING_SEED: u64 = 2024;

pub const TABLE_NAMES: [&str; 7] = [
    "change_dynamics",
    "alignment_scatter",
    "alignment_fit",
    "strategy_accuracy",
    "calibration_split",
    "calibration_ttest",
    "virtual_pairing",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub name: &'static str,
    pub csv: String,
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), f6)
}

fn group_sessions(records: &[TrialRecord]) -> BTreeMap<&str, Vec<&TrialRecord>> {
    let mut m: BTreeMap<&str, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        m.entry(r.session_id.as_str()).or_default().push(r);
    }
    m
}

fn owned(rs: &[&TrialRecord]) -> Vec<TrialRecord> {
    rs.iter().map(|r| (*r).clone()).collect()
}

fn accuracy(rs: &[&TrialRecord], f: impl Fn(&TrialRecord) -> bool) -> f64 {
    rs.iter().filter(|r| f(r)).count() as f64 / rs.len() as f64
}

/// Per-session positive/negative change percentages plus a pooled row.
/// Sessions without any change report `NA` and `undefined=1`.
pub fn change_dynamics(records: &[TrialRecord]) -> Table {
    let mut csv = String::from("session_id,calibration,n_changes,n_positive,n_negative,positive_pct,negative_pct,undefined\n");
    let mut row = |id: &str, cal: &str, rs: &[TrialRecord]| {
        let s = change_stats(rs);
        let _ = writeln!(
            csv,
            "{id},{cal},{},{},{},{},{},{}",
            s.n_changes,
            s.n_positive,
            s.n_negative,
            opt(s.positive_pct),
            opt(s.negative_pct),
            u8::from(s.positive_pct.is_none())
        );
    };
    for (id, rs) in group_sessions(records) {
        row(id, &rs[0].calibration.to_string(), &owned(&rs));
    }
    row("ALL", "all", records);
    Table { name: "change_dynamics", csv }
}

fn histograms(rs: &[&TrialRecord]) -> (LevelHistogram, LevelHistogram) {
    let (mut h, mut a) = (LevelHistogram::default(), LevelHistogram::default());
    for r in rs {
        h.add(r.level, r.human_initial.confidence);
        a.add(r.level, r.ai.confidence);
    }
    (h, a)
}

/// One point per session: confidence alignment (mean per-level JSD between
/// the operator's initial confidence and the AI's) against final accuracy.
pub fn alignment_points(records: &[TrialRecord]) -> Vec<(String, Calibration, f64, f64)> {
    group_sessions(records)
        .into_iter()
        .filter_map(|(id, rs)| {
            let (h, a) = histograms(&rs);
            let j = participant_alignment::<f64>(&h, &a).ok()?;
            Some((id.to_string(), rs[0].calibration, j, accuracy(&rs, TrialRecord::final_correct)))
        })
        .collect()
}

pub fn alignment_tables(records: &[TrialRecord]) -> (Table, Table) {
    let pts = alignment_points(records);
    let mut scatter = String::from("session_id,calibration,alignment_jsd,final_accuracy\n");
    for (id, cal, j, acc) in &pts {
        let _ = writeln!(scatter, "{id},{cal},{},{}", f6(*j), f6(*acc));
    }
    let mut fit = String::from("n,slope,intercept,r_squared,t_stat,p_value\n");
    let xs: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.3).collect();
    match ols_fit(&xs, &ys) {
        Ok(f) => {
            let _ = writeln!(
                fit,
                "{},{},{},{},{},{}",
                f.n,
                f6(f.slope),
                f6(f.intercept),
                f6(f.r_squared),
                f6(f.t_stat),
                f6(f.p_value)
            );
        }
        Err(_) => {
            let _ = writeln!(fit, "{},NA,NA,NA,NA,NA", xs.len());
        }
    }
    (Table { name: "alignment_scatter", csv: scatter }, Table { name: "alignment_fit", csv: fit })
}

/// Accuracy of each strategy over all trials and over disagreement trials.
pub fn strategy_table(records: &[TrialRecord], strategies: &[StrategyId]) -> Table {
    let mut csv = String::from("strategy,subset,n_trials,n_correct,accuracy\n");
    for &s in strategies {
        for (subset, only) in [("all", false), ("disagreement", true)] {
            match strategy_accuracy(records, s, only) {
                Ok(o) => {
                    let _ = writeln!(csv, "{s},{subset},{},{},{}", o.n_trials, o.n_correct, f6(o.accuracy));
                }
                Err(_) => {
                    let _ = writeln!(csv, "{s},{subset},0,0,NA");
                }
            }
        }
    }
    Table { name: "strategy_accuracy", csv }
}

/// One row per DSS calibration present in the corpus.
pub fn calibration_split(records: &[TrialRecord]) -> Table {
    let mut by_cal: BTreeMap<Calibration, Vec<TrialRecord>> = BTreeMap::new();
    for r in records {
        by_cal.entry(r.calibration).or_default().push(r.clone());
    }
    let mut csv = String::from("calibration,n_sessions,n_trials");
    for s in StrategyId::ALL {
        let _ = write!(csv, ",{}_accuracy", s.as_str().to_lowercase());
    }
    csv.push('\n');
    for (cal, rs) in &by_cal {
        let _ = write!(csv, "{cal},{},{}", group_sessions(rs).len(), rs.len());
        for s in StrategyId::ALL {
            let acc = strategy_accuracy(rs, s, false).ok().map(|o| o.accuracy);
            let _ = write!(csv, ",{}", opt(acc));
        }
        csv.push('\n');
    }
    Table { name: "calibration_split", csv }
}

/// Per-session accuracy of a strategy, in session order.
pub fn session_accuracies(records: &[TrialRecord], strategy: StrategyId) -> Vec<(String, Calibration, f64)> {
    group_sessions(records)
        .into_iter()
        .filter_map(|(id, rs)| {
            let o = strategy_accuracy(&owned(&rs), strategy, false).ok()?;
            Some((id.to_string(), rs[0].calibration, o.accuracy))
        })
        .collect()
}

/// Pooled t-test on per-session accuracy, well vs poor DSS, per strategy.
pub fn calibration_ttest(records: &[TrialRecord]) -> Table {
    let mut csv = String::from("strategy,n_well,n_poor,mean_well,mean_poor,t_stat,df,p_value\n");
    for s in [StrategyId::Mcs, StrategyId::HumanInitiative, StrategyId::Ts] {
        let accs = session_accuracies(records, s);
        let pick = |c| accs.iter().filter(|a| a.1 == c).map(|a| a.2).collect::<Vec<f64>>();
        let (w, p) = (pick(Calibration::Well), pick(Calibration::Poor));
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let t = t_test::<f64>(&w, &p, TTestMode::Pooled).ok();
        let _ = writeln!(
            csv,
            "{s},{},{},{},{},{},{},{}",
            w.len(),
            p.len(),
            opt(mean(&w)),
            opt(mean(&p)),
            opt(t.map(|t| t.t)),
            opt(t.map(|t| t.df)),
            opt(t.map(|t| t.p))
        );
    }
    Table { name: "calibration_ttest", csv }
}

/// Operator trials as a rated dataset (initial inference).
pub fn human_dataset(records: &[TrialRecord]) -> Vec<TrialDatum> {
    records
        .iter()
        .map(|r| TrialDatum { level: r.level, correct: r.initial_correct(), confidence: r.human_initial.confidence })
        .collect()
}

/// Virtual pairing of every operator trial with the poorly calibrated DSS.
pub fn virtual_pairing_table(records: &[TrialRecord]) -> Result<Table, MetricError> {
    let mut rng = ChaCha8Rng::seed_from_u64(VIRTUAL_PAIRING_SEED);
    let rows = virtual_pairing(&AiDssModel::builtin(Calibration::Poor), &human_dataset(records), &mut rng)?;
    let mut csv = String::from("strategy,n_trials,n_correct,accuracy\n");
    for o in rows {
        let _ = writeln!(csv, "{},{},{},{}", o.strategy, o.n_trials, o.n_correct, f6(o.accuracy));
    }
    Ok(Table { name: "virtual_pairing", csv })
}

/// All report tables, in [`TABLE_NAMES`] order.
pub fn analyze_records(records: &[TrialRecord], strategies: &[StrategyId]) -> Result<Vec<Table>, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let (scatter, fit) = alignment_tables(records);
    Ok(vec![
        change_dynamics(records),
        scatter,
        fit,
        strategy_table(records, strategies),
        calibration_split(records),
        calibration_ttest(records),
        virtual_pairing_table(records)?,
    ])
}
