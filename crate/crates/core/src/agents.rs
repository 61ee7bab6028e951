//! The AI decision-support agent, synthetic operators, and the construction of
//! confidence tables from trial data.
//!
//! The AI agent has a fixed accuracy and samples its confidence from discrete
//! distributions conditioned on the difficulty level and on whether the
//! current draw is correct. Tables are either built from a dataset of rated
//! trials or taken from the synthetic mixture family used by the headless
//! operators.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{auroc2, RatingSample};
use crate::staircase::DifficultyLevel;
use crate::types::{Inference, LikertConfidence, RobotId};

pub const DEFAULT_AI_ACCURACY: f64 = 0.70;
pub const WELL_CALIBRATED_MIN_AUROC2: f64 = 0.65;
pub const POORLY_CALIBRATED_MAX_AUROC2: f64 = 0.55;
/// Cells with fewer observations than this get add-one smoothing.
pub const SMOOTHING_MIN_COUNT: usize = 5;
/// Confidence profile of the fully informative synthetic rater.
pub const INFORMATIVE_CORRECT: [f64; 4] = [0.1, 0.2, 0.3, 0.4];
pub const INFORMATIVE_INCORRECT: [f64; 4] = [0.4, 0.3, 0.2, 0.1];
pub const UNIFORM: [f64; 4] = [0.25; 4];
/// Monte-Carlo trials per AUROC2 evaluation when fitting informativeness.
pub const FIT_TRIALS: usize = 50_000;
pub const FIT_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("accuracy {0} must lie in (0, 1]")]
    InvalidAccuracy(f64),
    #[error("invalid operator parameters: {0}")]
    InvalidOperator(String),
    #[error("target AUROC2 {0} is not achievable by the synthetic family")]
    Unachievable(f64),
    #[error("confidence table cell ({level}, {correct}) does not sum to 1")]
    InvalidTable { level: u8, correct: bool },
    #[error("unknown calibration label `{0}`")]
    UnknownCalibration(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calibration {
    Well,
    Poor,
}

impl fmt::Display for Calibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Calibration::Well => "well",
            Calibration::Poor => "poor",
        })
    }
}

impl FromStr for Calibration {
    type Err = AgentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "well" => Ok(Calibration::Well),
            "poor" => Ok(Calibration::Poor),
            other => Err(AgentError::UnknownCalibration(other.to_string())),
        }
    }
}

/// One rated trial: difficulty, correctness and the confidence reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialDatum {
    pub level: DifficultyLevel,
    pub correct: bool,
    pub confidence: LikertConfidence,
}

/// Confidence distributions indexed by `[level - 1][correct as usize]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTable {
    cells: [[[f64; 4]; 2]; 5],
}

fn normalized(v: [f64; 4]) -> Option<[f64; 4]> {
    let sum: f64 = v.iter().sum();
    (sum > 0.0).then(|| v.map(|x| x / sum))
}

fn histogram(counts: [usize; 4]) -> [f64; 4] {
    let n: usize = counts.iter().sum();
    if n < SMOOTHING_MIN_COUNT {
        let total = (n + 4) as f64;
        counts.map(|c| (c + 1) as f64 / total)
    } else {
        counts.map(|c| c as f64 / n as f64)
    }
}

impl ConfidenceTable {
    /// Builds a table, validating every cell.
    pub fn from_cells(cells: [[[f64; 4]; 2]; 5]) -> Result<Self, AgentError> {
        let table = Self { cells };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        for level in DifficultyLevel::all() {
            for correct in [false, true] {
                let v = self.cell(level, correct);
                let ok = v.iter().all(|p| p.is_finite() && *p >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
                if !ok {
                    return Err(AgentError::InvalidTable { level: level.level(), correct });
                }
            }
        }
        Ok(())
    }

    /// Same pair of distributions at every level.
    pub fn uniform_over_levels(correct: [f64; 4], incorrect: [f64; 4]) -> Self {
        Self { cells: [[incorrect, correct]; 5] }
    }

    /// The mixture `lambda * informative + (1 - lambda) * uniform`.
    pub fn synthetic(informativeness: f64) -> Self {
        Self::uniform_over_levels(
            mix(informativeness, INFORMATIVE_CORRECT),
            mix(informativeness, INFORMATIVE_INCORRECT),
        )
    }

    /// Built-in table for a calibration label when no dataset is supplied.
    pub fn builtin(calibration: Calibration) -> Self {
        match calibration {
            Calibration::Well => Self::synthetic(1.0),
            Calibration::Poor => Self::synthetic(0.0),
        }
    }

    pub fn cell(&self, level: DifficultyLevel, correct: bool) -> &[f64; 4] {
        &self.cells[level.index()][usize::from(correct)]
    }

    pub fn sample<R: Rng + ?Sized>(&self, level: DifficultyLevel, correct: bool, rng: &mut R) -> LikertConfidence {
        sample_confidence(self.cell(level, correct), rng)
    }
}

/// Per-cell histograms with add-one smoothing for sparse cells and a pooled
/// fallback for empty ones.
pub fn build_tables(data: &[TrialDatum]) -> Result<ConfidenceTable, AgentError> {
    if data.is_empty() {
        return Err(AgentError::EmptyDataset);
    }
    let mut counts = [[[0usize; 4]; 2]; 5];
    let mut pooled = [[0usize; 4]; 2];
    for d in data {
        counts[d.level.index()][usize::from(d.correct)][d.confidence.index()] += 1;
        pooled[usize::from(d.correct)][d.confidence.index()] += 1;
    }
    let pooled = pooled.map(histogram);
    let mut cells = [[[0.0; 4]; 2]; 5];
    for (li, level) in counts.iter().enumerate() {
        for (ci, c) in level.iter().enumerate() {
            cells[li][ci] = if c.iter().sum::<usize>() == 0 { pooled[ci] } else { histogram(*c) };
        }
    }
    ConfidenceTable::from_cells(cells)
}

/// Pools trials of well-calibrated (AUROC2 >= 0.65) and poorly calibrated
/// (AUROC2 <= 0.55) participants. Participants in between, or whose AUROC2
/// is undefined, are left out of both sets.
pub fn partition_by_calibration<K: Ord>(
    per_participant: &BTreeMap<K, (Option<f64>, Vec<TrialDatum>)>,
) -> (Vec<TrialDatum>, Vec<TrialDatum>) {
    let mut well = Vec::new();
    let mut poor = Vec::new();
    for (auroc, data) in per_participant.values() {
        match auroc {
            Some(a) if *a >= WELL_CALIBRATED_MIN_AUROC2 => well.extend_from_slice(data),
            Some(a) if *a <= POORLY_CALIBRATED_MAX_AUROC2 => poor.extend_from_slice(data),
            _ => {}
        }
    }
    (well, poor)
}

/// AUROC2 of each participant's rated trials (`None` when undefined).
pub fn participant_auroc2(data: &[TrialDatum]) -> Option<f64> {
    let sample: RatingSample = data.iter().map(|d| (d.confidence, d.correct)).collect();
    auroc2::<f64>(&sample).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AiDssModel {
    accuracy: f64,
    tables: ConfidenceTable,
    calibration: Calibration,
}

impl AiDssModel {
    pub fn new(accuracy: f64, tables: ConfidenceTable, calibration: Calibration) -> Result<Self, AgentError> {
        if !(accuracy > 0.0 && accuracy <= 1.0) {
            return Err(AgentError::InvalidAccuracy(accuracy));
        }
        tables.validate()?;
        Ok(Self { accuracy, tables, calibration })
    }

    /// 70 % accurate agent with the built-in table for `calibration`.
    pub fn builtin(calibration: Calibration) -> Self {
        Self::new(DEFAULT_AI_ACCURACY, ConfidenceTable::builtin(calibration), calibration).expect("builtin model valid")
    }

    pub fn accuracy(&self) -> f64 {
        self.accuracy
    }

    pub fn tables(&self) -> &ConfidenceTable {
        &self.tables
    }

    pub fn calibration(&self) -> Calibration {
        self.calibration
    }
}

pub fn ai_infer<R: Rng + ?Sized>(model: &AiDssModel, truth: RobotId, level: DifficultyLevel, rng: &mut R) -> Inference {
    let correct = rng.random::<f64>() < model.accuracy;
    let choice = if correct { truth } else { truth.other() };
    Inference::new(choice, model.tables.sample(level, correct, rng))
}

/// Psychometric stand-in for a human operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOperator {
    pub psychometric_midpoint_ms: f64,
    pub psychometric_slope_ms: f64,
    pub informativeness: f64,
}

impl Default for SyntheticOperator {
    fn default() -> Self {
        Self { psychometric_midpoint_ms: 50.0, psychometric_slope_ms: 15.0, informativeness: 1.0 }
    }
}

impl SyntheticOperator {
    pub fn new(midpoint_ms: f64, slope_ms: f64, informativeness: f64) -> Result<Self, AgentError> {
        let op = Self { psychometric_midpoint_ms: midpoint_ms, psychometric_slope_ms: slope_ms, informativeness };
        op.validate()?;
        Ok(op)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !self.psychometric_midpoint_ms.is_finite() {
            return Err(AgentError::InvalidOperator("midpoint must be finite".into()));
        }
        if !(self.psychometric_slope_ms > 0.0 && self.psychometric_slope_ms.is_finite()) {
            return Err(AgentError::InvalidOperator("slope must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.informativeness) {
            return Err(AgentError::InvalidOperator("informativeness must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Probability of picking the lower-delay robot at a given differential.
    pub fn accuracy_at(&self, differential_ms: f64) -> f64 {
        let z = (differential_ms - self.psychometric_midpoint_ms) / self.psychometric_slope_ms;
        0.5 + 0.5 / (1.0 + (-z).exp())
    }

    pub fn confidence_profile(&self, correct: bool) -> [f64; 4] {
        mix(self.informativeness, if correct { INFORMATIVE_CORRECT } else { INFORMATIVE_INCORRECT })
    }
}

fn mix(lambda: f64, informative: [f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, (p, u)) in out.iter_mut().zip(informative.iter().zip(UNIFORM)) {
        *o = lambda * p + (1.0 - lambda) * u;
    }
    normalized(out).expect("mixture of distributions is a distribution")
}

/// Draws a confidence bin by inverse CDF.
pub fn sample_confidence<R: Rng + ?Sized>(dist: &[f64; 4], rng: &mut R) -> LikertConfidence {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return LikertConfidence::from_index(i);
        }
    }
    // rounding left a sliver above the last edge; take the last non-empty bin
    let last = dist.iter().rposition(|p| *p > 0.0).unwrap_or(3);
    LikertConfidence::from_index(last)
}

pub fn synthetic_infer<R: Rng + ?Sized>(
    op: &SyntheticOperator,
    differential_ms: f64,
    truth: RobotId,
    rng: &mut R,
) -> Inference {
    let correct = rng.random::<f64>() < op.accuracy_at(differential_ms);
    let choice = if correct { truth } else { truth.other() };
    Inference::new(choice, sample_confidence(&op.confidence_profile(correct), rng))
}

/// Monte-Carlo AUROC2 of the synthetic family at a given informativeness.
/// Correctness is drawn at 70 %; AUROC2 does not depend on it in expectation.
pub fn estimate_operator_auroc2(informativeness: f64, trials: usize, seed: u64) -> Option<f64> {
    let op = SyntheticOperator { informativeness, ..SyntheticOperator::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample: RatingSample = (0..trials)
        .map(|_| {
            let correct = rng.random::<f64>() < DEFAULT_AI_ACCURACY;
            (sample_confidence(&op.confidence_profile(correct), &mut rng), correct)
        })
        .collect();
    auroc2::<f64>(&sample).ok()
}

/// Bisection on informativeness until the Monte-Carlo AUROC2 is within 0.01
/// of the target. Every evaluation reuses the same seed, so the estimate is a
/// deterministic function of informativeness.
pub fn fit_operator_informativeness(target_auroc2: f64, seed: u64) -> Result<f64, AgentError> {
    if !(0.5..=0.75).contains(&target_auroc2) {
        return Err(AgentError::Unachievable(target_auroc2));
    }
    let eval = |lambda: f64| estimate_operator_auroc2(lambda, FIT_TRIALS, seed).expect("both classes present");
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for endpoint in [lo, hi] {
        if (eval(endpoint) - target_auroc2).abs() <= FIT_TOLERANCE {
            return Ok(endpoint);
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let est = eval(mid);
        if (est - target_auroc2).abs() <= FIT_TOLERANCE {
            return Ok(mid);
        }
        if est < target_auroc2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(AgentError::Unachievable(target_auroc2))
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset row {row}: {msg}")]
    Schema { row: usize, msg: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const DATASET_COLUMNS: [&str; 4] = ["participant_id", "level", "correct", "confidence"];

/// Reads `participant_id,level,correct,confidence` rows, grouped by
/// participant. Row numbers in errors count the header as row 1.
pub fn read_dataset_csv<R: io::Read>(r: R) -> Result<BTreeMap<String, Vec<TrialDatum>>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(DATASET_COLUMNS) {
        return Err(DatasetError::Schema {
            row: 1,
            msg: format!("expected header `{}`", DATASET_COLUMNS.join(",")),
        });
    }
    let mut out: BTreeMap<String, Vec<TrialDatum>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let err = |msg: String| DatasetError::Schema { row, msg };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let id = field(0);
        if id.is_empty() {
            return Err(err("empty participant_id".into()));
        }
        let level = field(1)
            .parse::<u8>()
            .ok()
            .and_then(|l| DifficultyLevel::new(l).ok())
            .ok_or_else(|| err(format!("level `{}` not in 1..=5", field(1))))?;
        let correct = match field(2) {
            "0" => false,
            "1" => true,
            other => return Err(err(format!("correct `{other}` not 0 or 1"))),
        };
        let confidence = field(3)
            .parse::<i64>()
            .ok()
            .and_then(|c| LikertConfidence::new(c).ok())
            .ok_or_else(|| err(format!("confidence `{}` not in 1..=4", field(3))))?;
        out.entry(id.to_string()).or_default().push(TrialDatum { level, correct, confidence });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub participant_id: String,
    pub n_trials: usize,
    pub auroc2: Option<f64>,
    pub partition: Option<Calibration>,
}

/// Confidence tables for each non-empty calibration partition.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestResult {
    pub well: Option<ConfidenceTable>,
    pub poor: Option<ConfidenceTable>,
    pub participants: Vec<ParticipantSummary>,
}

pub fn ingest_dataset(per_participant: &BTreeMap<String, Vec<TrialDatum>>) -> Result<IngestResult, AgentError> {
    if per_participant.values().all(Vec::is_empty) {
        return Err(AgentError::EmptyDataset);
    }
    let scored: BTreeMap<&String, (Option<f64>, Vec<TrialDatum>)> =
        per_participant.iter().map(|(k, v)| (k, (participant_auroc2(v), v.clone()))).collect();
    let participants = scored
        .iter()
        .map(|(id, (a, data))| ParticipantSummary {
            participant_id: (*id).clone(),
            n_trials: data.len(),
            auroc2: *a,
            partition: match a {
                Some(x) if *x >= WELL_CALIBRATED_MIN_AUROC2 => Some(Calibration::Well),
                Some(x) if *x <= POORLY_CALIBRATED_MAX_AUROC2 => Some(Calibration::Poor),
                _ => None,
            },
        })
        .collect();
    let (well, poor) = partition_by_calibration(&scored);
    let table = |d: &[TrialDatum]| if d.is_empty() { Ok(None) } else { build_tables(d).map(Some) };
    Ok(IngestResult { well: table(&well)?, poor: table(&poor)?, participants })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lvl(n: u8) -> DifficultyLevel {
        DifficultyLevel::new(n).unwrap()
    }

    fn datum(level: u8, correct: bool, conf: u8) -> TrialDatum {
        TrialDatum { level: lvl(level), correct, confidence: LikertConfidence::new(i64::from(conf)).unwrap() }
    }

    #[test]
    fn sparse_cell_gets_add_one() {
        let data = vec![datum(2, true, 1), datum(2, true, 1), datum(2, true, 4), datum(2, true, 4)];
        let t = build_tables(&data).unwrap();
        assert_eq!(t.cell(lvl(2), true), &[3.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0, 3.0 / 8.0]);
    }

    #[test]
    fn dense_cell_is_plain_histogram() {
        let data: Vec<_> = (0..100).map(|_| datum(3, true, 3)).collect();
        let t = build_tables(&data).unwrap();
        assert_eq!(t.cell(lvl(3), true), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn empty_cell_falls_back_to_pool() {
        let mut data: Vec<_> = (0..6).map(|_| datum(1, false, 2)).collect();
        data.extend((0..4).map(|_| datum(4, false, 1)));
        data.push(datum(5, true, 4));
        let t = build_tables(&data).unwrap();
        // pooled incorrect: 6 x conf 2, 4 x conf 1
        assert_eq!(t.cell(lvl(3), false), &[0.4, 0.6, 0.0, 0.0]);
        // pooled correct has one observation -> smoothed
        assert_eq!(t.cell(lvl(2), true), &[0.2, 0.2, 0.2, 0.4]);
        t.validate().unwrap();
    }

    #[test]
    fn empty_dataset_rejected() {
        assert_eq!(build_tables(&[]), Err(AgentError::EmptyDataset));
    }

    #[test]
    fn calibration_partition_thresholds() {
        let mut m = BTreeMap::new();
        m.insert("well", (Some(0.70), vec![datum(1, true, 4)]));
        m.insert("edge_well", (Some(0.65), vec![datum(1, true, 3)]));
        m.insert("poor", (Some(0.50), vec![datum(2, false, 2)]));
        m.insert("edge_poor", (Some(0.55), vec![datum(2, false, 1)]));
        m.insert("middle", (Some(0.60), vec![datum(3, true, 1)]));
        m.insert("undefined", (None, vec![datum(3, true, 2)]));
        let (well, poor) = partition_by_calibration(&m);
        assert_eq!(well.len(), 2);
        assert_eq!(poor.len(), 2);
        assert!(well.iter().chain(&poor).all(|d| d.level != lvl(3)));
    }

    #[test]
    fn perfect_ai_always_right() {
        let model = AiDssModel::new(1.0, ConfidenceTable::builtin(Calibration::Well), Calibration::Well).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(ai_infer(&model, RobotId::A, lvl(2), &mut rng).choice, RobotId::A);
        }
    }

    #[test]
    fn point_mass_table_sampled() {
        let mut cells = [[UNIFORM; 2]; 5];
        cells[2][1] = [0.0, 0.0, 0.0, 1.0];
        let model = AiDssModel::new(1.0, ConfidenceTable::from_cells(cells).unwrap(), Calibration::Well).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            assert_eq!(ai_infer(&model, RobotId::B, lvl(3), &mut rng).confidence.get(), 4);
        }
    }

    #[test]
    fn ai_accuracy_converges() {
        let model = AiDssModel::builtin(Calibration::Poor);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let hits = (0..n).filter(|_| ai_infer(&model, RobotId::A, lvl(1), &mut rng).choice == RobotId::A).count();
        assert!((hits as f64 / n as f64 - 0.7).abs() <= 0.005);
    }

    #[test]
    fn invalid_accuracy_rejected() {
        let t = ConfidenceTable::builtin(Calibration::Well);
        assert!(AiDssModel::new(0.0, t.clone(), Calibration::Well).is_err());
        assert!(AiDssModel::new(1.2, t, Calibration::Well).is_err());
    }

    #[test]
    fn uninformative_operator_is_uniform() {
        let op = SyntheticOperator { informativeness: 0.0, ..Default::default() };
        assert_eq!(op.confidence_profile(true), UNIFORM);
        assert_eq!(op.confidence_profile(false), UNIFORM);
        let est = estimate_operator_auroc2(0.0, 50_000, 1).unwrap();
        assert!((est - 0.5).abs() < 0.01, "{est}");
    }

    #[test]
    fn psychometric_limits() {
        let op = SyntheticOperator::default();
        assert!((op.accuracy_at(1e6) - 1.0).abs() < 1e-12);
        assert!((op.accuracy_at(-1e6) - 0.5).abs() < 1e-12);
        assert_eq!(op.accuracy_at(50.0), 0.75);
        assert!(SyntheticOperator::new(50.0, 0.0, 0.5).is_err());
        assert!(SyntheticOperator::new(50.0, 10.0, 1.5).is_err());
    }

    #[test]
    fn auroc2_monotone_in_informativeness() {
        let grid = [0.0, 0.25, 0.5, 0.75, 1.0];
        let est: Vec<f64> = grid.iter().map(|&l| estimate_operator_auroc2(l, 50_000, 17).unwrap()).collect();
        for w in est.windows(2) {
            assert!(w[1] >= w[0], "{est:?}");
        }
    }

    #[test]
    fn fit_hits_endpoints() {
        let lambda = fit_operator_informativeness(0.5, 7).unwrap();
        assert!(lambda < 0.1, "{lambda}");
        let lambda = fit_operator_informativeness(0.75, 7).unwrap();
        assert!(lambda > 0.9, "{lambda}");
        let lambda = fit_operator_informativeness(0.65, 7).unwrap();
        let est = estimate_operator_auroc2(lambda, FIT_TRIALS, 7).unwrap();
        assert!((est - 0.65).abs() <= FIT_TOLERANCE);
        assert_eq!(fit_operator_informativeness(0.85, 7), Err(AgentError::Unachievable(0.85)));
    }

    proptest! {
        #[test]
        fn sampled_confidence_in_range(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
            let op = SyntheticOperator { informativeness: lambda, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..50 {
                let inf = synthetic_infer(&op, 35.0, RobotId::A, &mut rng);
                prop_assert!((1..=4).contains(&inf.confidence.get()));
            }
            let t = ConfidenceTable::synthetic(lambda);
            prop_assert!(t.validate().is_ok());
        }
    }

    #[test]
    fn dataset_ingestion() {
        let csv = "participant_id,level,correct,confidence\np1,1,1,4\np1,1,0,1\np1,2,1,3\n";
        let per = read_dataset_csv(csv.as_bytes()).unwrap();
        assert_eq!(per["p1"].len(), 3);
        let res = ingest_dataset(&per).unwrap();
        assert_eq!(res.participants[0].partition, Some(Calibration::Well));
        let t = res.well.unwrap();
        // one observation in the cell -> add-one smoothing
        let lvl = DifficultyLevel::new(1).unwrap();
        assert_eq!(t.cell(lvl, true), &[0.2, 0.2, 0.2, 0.4]);
        assert!(res.poor.is_none());
    }

    #[test]
    fn dataset_schema_errors_name_the_row() {
        let csv = "participant_id,level,correct,confidence\np1,1,1,4\np1,2,0,7\n";
        let e = read_dataset_csv(csv.as_bytes()).unwrap_err();
        assert!(matches!(e, DatasetError::Schema { row: 3, .. }), "{e}");
        assert!(e.to_string().contains("row 3"));
        let e = read_dataset_csv("pid,level\n".as_bytes()).unwrap_err();
        assert!(matches!(e, DatasetError::Schema { row: 1, .. }));
    }

    #[test]
    fn middle_band_participant_in_neither_table() {
        // correct {4, 2, 2} vs incorrect {2, 2, 3}: AUROC2 = 5/9
        let mut rows = String::from("participant_id,level,correct,confidence\n");
        for (c, k) in [(1, 4), (1, 2), (1, 2), (0, 2), (0, 2), (0, 3)] {
            rows.push_str(&format!("mid,3,{c},{k}\n"));
        }
        let per = read_dataset_csv(rows.as_bytes()).unwrap();
        let a = participant_auroc2(&per["mid"]).unwrap();
        assert!(a > POORLY_CALIBRATED_MAX_AUROC2 && a < WELL_CALIBRATED_MIN_AUROC2, "{a}");
        let res = ingest_dataset(&per).unwrap();
        assert_eq!(res.participants[0].partition, None);
        assert!(res.well.is_none() && res.poor.is_none());
    }
}
