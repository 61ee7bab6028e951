//! Calibration and team-performance statistics.
//!
//! Everything numeric is generic over [`Scalar`]; Student-t tail
//! probabilities are evaluated in `f64` regardless of the scalar type.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::agents::{ai_infer, AiDssModel, TrialDatum};
use crate::fusion::{dummy_low_confidence, dummy_random, mcs, StrategyId, TiePolicy};
use crate::scalar::Scalar;
use crate::session::TrialRecord;
use crate::staircase::DifficultyLevel;
use crate::types::{Inference, LikertConfidence, RobotId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("undefined: {0}")]
    Undefined(&'static str),
    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(&'static str),
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Confidence ratings paired with the correctness of the rated response.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingSample {
    pub items: Vec<(LikertConfidence, bool)>,
}

impl RatingSample {
    pub fn push(&mut self, confidence: LikertConfidence, correct: bool) {
        self.items.push((confidence, correct));
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Counts per confidence bin, split as `[incorrect, correct]`.
    pub fn counts(&self) -> [[usize; 4]; 2] {
        let mut c = [[0; 4]; 2];
        for (conf, ok) in &self.items {
            c[usize::from(*ok)][conf.index()] += 1;
        }
        c
    }
}

impl FromIterator<(LikertConfidence, bool)> for RatingSample {
    fn from_iter<I: IntoIterator<Item = (LikertConfidence, bool)>>(iter: I) -> Self {
        Self { items: iter.into_iter().collect() }
    }
}

/// Area under the type-2 ROC.
///
/// The curve runs through `(FA_k, H_k)` for thresholds k = 4, 3, 2 where
/// `H_k = P(conf >= k | correct)` and `FA_k = P(conf >= k | incorrect)`,
/// anchored at (0, 0) and (1, 1); the area is taken by trapezoids.
pub fn auroc2<T: Scalar>(sample: &RatingSample) -> Result<T, MetricError> {
    let [wrong, right] = sample.counts();
    let n_right: usize = right.iter().sum();
    let n_wrong: usize = wrong.iter().sum();
    if n_right == 0 || n_wrong == 0 {
        return Err(MetricError::Undefined("AUROC2 needs correct and incorrect responses"));
    }
    let (nr, nw) = (T::from_count(n_right), T::from_count(n_wrong));
    let mut area = T::zero();
    let (mut prev_fa, mut prev_hit) = (T::zero(), T::zero());
    let (mut cum_right, mut cum_wrong) = (0usize, 0usize);
    for k in (0..4).rev() {
        cum_right += right[k];
        cum_wrong += wrong[k];
        let hit = if k == 0 { T::one() } else { T::from_count(cum_right) / nr };
        let fa = if k == 0 { T::one() } else { T::from_count(cum_wrong) / nw };
        area = area + (fa - prev_fa) * (hit + prev_hit) / T::lit(2.0);
        prev_fa = fa;
        prev_hit = hit;
    }
    Ok(area)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin<T> {
    pub mean_prediction: T,
    pub empirical_rate: T,
    pub count: usize,
}

/// Reliability diagram on equal-width bins of [0, 1]. Empty bins are omitted;
/// predictions outside [0, 1] are ignored.
pub fn calibration_curve<T: Scalar>(predictions: &[(T, bool)], n_bins: usize) -> Vec<CalibrationBin<T>> {
    let n_bins = n_bins.max(1);
    let mut sums = vec![(T::zero(), 0usize, 0usize); n_bins];
    for &(p, outcome) in predictions {
        if !(p >= T::zero() && p <= T::one()) {
            continue;
        }
        let idx = (p * T::from_count(n_bins)).floor().to_usize().unwrap_or(0).min(n_bins - 1);
        let bin = &mut sums[idx];
        bin.0 = bin.0 + p;
        bin.1 += usize::from(outcome);
        bin.2 += 1;
    }
    sums.into_iter()
        .filter(|b| b.2 > 0)
        .map(|(sum, pos, n)| CalibrationBin {
            mean_prediction: sum / T::from_count(n),
            empirical_rate: T::from_count(pos) / T::from_count(n),
            count: n,
        })
        .collect()
}

fn check_distribution<T: Scalar>(p: &[T]) -> Result<(), MetricError> {
    if p.iter().any(|x| !x.is_finite() || *x < T::zero()) {
        return Err(MetricError::InvalidDistribution("entries must be finite and non-negative"));
    }
    let sum = p.iter().fold(T::zero(), |a, b| a + *b);
    if (sum - T::one()).abs() > T::lit(1e-9).max(T::epsilon() * T::lit(8.0)) {
        return Err(MetricError::InvalidDistribution("entries must sum to 1"));
    }
    Ok(())
}

/// Jensen-Shannon divergence in bits, so the result lies in [0, 1].
pub fn jsd<T: Scalar>(p: &[T], q: &[T]) -> Result<T, MetricError> {
    if p.len() != q.len() || p.is_empty() {
        return Err(MetricError::InvalidDistribution("distributions must be non-empty and equal length"));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let half = T::lit(0.5);
    let kl_to_mid = |a: &[T], b: &[T]| {
        a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| {
            if x > T::zero() {
                acc + x * (x / ((x + y) * half)).log2()
            } else {
                acc
            }
        })
    };
    let d = half * kl_to_mid(p, q) + half * kl_to_mid(q, p);
    Ok(d.max(T::zero()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeStats {
    pub n_positive: usize,
    pub n_negative: usize,
    pub n_changes: usize,
    /// `None` when nothing changed.
    pub positive_pct: Option<f64>,
    pub negative_pct: Option<f64>,
}

/// Positive change: initial wrong, final right. Negative: the reverse.
/// Percentages are taken over the trials where the operator revised.
pub fn change_stats(records: &[TrialRecord]) -> ChangeStats {
    let mut s = ChangeStats { n_positive: 0, n_negative: 0, n_changes: 0, positive_pct: None, negative_pct: None };
    for r in records.iter().filter(|r| r.changed) {
        s.n_changes += 1;
        let before = r.human_initial.choice == r.truth;
        let after = r.human_final.choice == r.truth;
        match (before, after) {
            (false, true) => s.n_positive += 1,
            (true, false) => s.n_negative += 1,
            _ => {}
        }
    }
    if s.n_changes > 0 {
        let n = s.n_changes as f64;
        s.positive_pct = Some(100.0 * s.n_positive as f64 / n);
        s.negative_pct = Some(100.0 * s.n_negative as f64 / n);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub t_stat: T,
    pub p_value: T,
    pub n: usize,
}

/// Two-sided tail probability of a Student-t statistic.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_nan() || df.is_nan() || df <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

fn mean<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, b| a + *b) / T::from_count(v.len())
}

/// Simple linear regression with a two-sided t-test on the slope.
pub fn ols_fit<T: Scalar>(xs: &[T], ys: &[T]) -> Result<RegressionFit<T>, MetricError> {
    if xs.len() != ys.len() {
        return Err(MetricError::InsufficientData("xs and ys differ in length"));
    }
    let n = xs.len();
    if n < 3 {
        return Err(MetricError::InsufficientData("need at least three points"));
    }
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if sxx <= T::zero() {
        return Err(MetricError::InsufficientData("xs are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = xs.iter().zip(ys).fold(T::zero(), |acc, (&x, &y)| {
        let e = y - (intercept + slope * x);
        acc + e * e
    });
    let r_squared = if syy > T::zero() { (T::one() - ss_res / syy).max(T::zero()).min(T::one()) } else { T::zero() };
    let df = T::from_count(n - 2);
    let (t_stat, p_value) = if ss_res > T::zero() {
        let se = (ss_res / df / sxx).sqrt();
        let t = slope / se;
        (t, T::lit(student_t_two_sided(t.as_f64(), df.as_f64())))
    } else if slope == T::zero() {
        (T::zero(), T::one())
    } else {
        (T::infinity() * slope.signum(), T::zero())
    };
    Ok(RegressionFit { slope, intercept, r_squared, t_stat, p_value, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TTestMode {
    #[default]
    Pooled,
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest<T> {
    pub t: T,
    pub df: T,
    pub p: T,
}

fn sample_variance<T: Scalar>(v: &[T], m: T) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc + (x - m) * (x - m)) / T::from_count(v.len() - 1)
}

/// Two-sample, two-sided t-test.
pub fn t_test<T: Scalar>(a: &[T], b: &[T], mode: TTestMode) -> Result<TTest<T>, MetricError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(MetricError::InsufficientData("each sample needs at least two values"));
    }
    let (na, nb) = (T::from_count(a.len()), T::from_count(b.len()));
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a, ma), sample_variance(b, mb));
    let (se2, df) = match mode {
        TTestMode::Pooled => {
            let df = na + nb - T::lit(2.0);
            let sp2 = ((na - T::one()) * va + (nb - T::one()) * vb) / df;
            (sp2 * (T::one() / na + T::one() / nb), df)
        }
        TTestMode::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let denom = qa * qa / (na - T::one()) + qb * qb / (nb - T::one());
            let df = if denom > T::zero() { se2 * se2 / denom } else { na + nb - T::lit(2.0) };
            (se2, df)
        }
    };
    let diff = ma - mb;
    let (t, p) = if se2 > T::zero() {
        let t = diff / se2.sqrt();
        (t, T::lit(student_t_two_sided(t.as_f64(), df.as_f64())))
    } else if diff == T::zero() {
        (T::zero(), T::one())
    } else {
        (T::infinity() * diff.signum(), T::zero())
    };
    Ok(TTest { t, df, p })
}

/// Confidence counts per difficulty level.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelHistogram {
    counts: [[u64; 4]; 5],
}

impl LevelHistogram {
    pub fn add(&mut self, level: DifficultyLevel, confidence: LikertConfidence) {
        self.counts[level.index()][confidence.index()] += 1;
    }

    pub fn total(&self, level: DifficultyLevel) -> u64 {
        self.counts[level.index()].iter().sum()
    }

    pub fn distribution<T: Scalar>(&self, level: DifficultyLevel) -> Option<[T; 4]> {
        let total = self.total(level);
        (total > 0).then(|| {
            let n = T::from_u64(total).expect("count");
            self.counts[level.index()].map(|c| T::from_u64(c).expect("count") / n)
        })
    }
}

/// Mean per-level JSD between two confidence histograms, skipping levels
/// where either side has no trials.
pub fn participant_alignment<T: Scalar>(human: &LevelHistogram, ai: &LevelHistogram) -> Result<T, MetricError> {
    let mut sum = T::zero();
    let mut n = 0usize;
    for level in DifficultyLevel::all() {
        if let (Some(h), Some(a)) = (human.distribution::<T>(level), ai.distribution::<T>(level)) {
            sum = sum + jsd(&h, &a)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricError::Undefined("no difficulty level observed on both sides"));
    }
    Ok(sum / T::from_count(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: StrategyId,
    pub n_trials: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

impl StrategyOutcome {
    pub fn from_counts(strategy: StrategyId, n_trials: usize, n_correct: usize) -> Result<Self, MetricError> {
        if n_trials == 0 {
            return Err(MetricError::Undefined("no trials in subset"));
        }
        Ok(Self { strategy, n_trials, n_correct, accuracy: n_correct as f64 / n_trials as f64 })
    }
}

/// Higher-performing individual of a dyad; ties go to the human.
fn dyad_hp_is_human(records: &[&TrialRecord]) -> bool {
    let human = records.iter().filter(|r| r.human_initial.choice == r.truth).count();
    let ai = records.iter().filter(|r| r.ai.choice == r.truth).count();
    human >= ai
}

/// Accuracy of one strategy over all records or over disagreement trials.
/// HP and LP are resolved per session, over the whole session.
pub fn strategy_accuracy(
    records: &[TrialRecord],
    strategy: StrategyId,
    disagreement_only: bool,
) -> Result<StrategyOutcome, MetricError> {
    let mut by_session: BTreeMap<&str, Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        by_session.entry(r.session_id.as_str()).or_default().push(r);
    }
    let (mut n, mut k) = (0usize, 0usize);
    for dyad in by_session.values() {
        let hp_human = dyad_hp_is_human(dyad);
        for r in dyad.iter().filter(|r| !disagreement_only || r.disagreement()) {
            let correct = match strategy {
                StrategyId::Hp | StrategyId::Lp => {
                    let use_human = hp_human == (strategy == StrategyId::Hp);
                    let inf = if use_human { r.human_initial } else { r.ai };
                    inf.choice == r.truth
                }
                other => match r.outcomes.get(&other) {
                    Some(res) => res.correct,
                    None => continue,
                },
            };
            n += 1;
            k += usize::from(correct);
        }
    }
    StrategyOutcome::from_counts(strategy, n, k)
}

/// Strategies reported by [`virtual_pairing`], in table order.
pub const VIRTUAL_PAIRING_STRATEGIES: [StrategyId; 5] =
    [StrategyId::Mcs, StrategyId::Dlc, StrategyId::Dr, StrategyId::Hp, StrategyId::Lp];

/// Pairs an AI agent with every rated human trial at the trial's difficulty
/// level and scores MCS, DLC, DR and the HP/LP individuals of the dyad.
pub fn virtual_pairing<R: Rng + ?Sized>(
    dss: &AiDssModel,
    human_dataset: &[TrialDatum],
    rng: &mut R,
) -> Result<Vec<StrategyOutcome>, MetricError> {
    if human_dataset.is_empty() {
        return Err(MetricError::EmptyDataset);
    }
    let truth = RobotId::A;
    let mut correct = [0usize; 3];
    let (mut human_ok, mut ai_ok) = (0usize, 0usize);
    for d in human_dataset {
        let human = Inference::new(if d.correct { truth } else { truth.other() }, d.confidence);
        let ai = ai_infer(dss, truth, d.level, rng);
        let picks = [
            mcs(human, ai, TiePolicy::PreferHuman, rng).0,
            dummy_low_confidence(human, ai).0,
            dummy_random(human, ai, rng).0,
        ];
        for (c, p) in correct.iter_mut().zip(picks) {
            *c += usize::from(p.choice == truth);
        }
        human_ok += usize::from(d.correct);
        ai_ok += usize::from(ai.choice == truth);
    }
    let n = human_dataset.len();
    let (hp, lp) = if human_ok >= ai_ok { (human_ok, ai_ok) } else { (ai_ok, human_ok) };
    let counts = [correct[0], correct[1], correct[2], hp, lp];
    VIRTUAL_PAIRING_STRATEGIES
        .iter()
        .zip(counts)
        .map(|(&s, k)| StrategyOutcome::from_counts(s, n, k))
        .collect()
}
