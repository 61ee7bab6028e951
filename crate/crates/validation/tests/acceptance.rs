//! Headless acceptance suite. Each criterion runs in isolation and prints one
//! PASS/FAIL line; the process exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mcs_core::agents::{
    ai_infer, estimate_operator_auroc2, synthetic_infer, AiDssModel, Calibration, ConfidenceTable, SyntheticOperator,
    TrialDatum, INFORMATIVE_CORRECT, INFORMATIVE_INCORRECT, UNIFORM,
};
use mcs_core::experiment::{dss_for_session, run_experiment, run_synthetic_session, DssLabel, ExperimentConfig, PilotCache};
use mcs_core::fusion::{dummy_random, mcs, ts_select, ts_update, BanditState, Source, StrategyId, TiePolicy};
use mcs_core::metrics::{auroc2, jsd, ols_fit, student_t_two_sided, t_test, virtual_pairing, RatingSample, TTestMode};
use mcs_core::report::session_accuracies;
use mcs_core::session::{
    apply_exclusions, exclusion_reason, records_sha256, records_to_csv, replay, EventLog, SegmentOutcome, SessionConfig,
    StrategyResult, TrialRecord,
};
use mcs_core::sim::{delay_ticks, make_environment, run_trial_segment, VelocityCommand};
use mcs_core::staircase::{assign_delays, DelayAssignment, DifficultyLevel, StaircaseState, DIFFERENTIALS_MS};
use mcs_core::types::{Inference, LikertConfidence, RobotId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// P(c+ > c-) + ½ P(c+ = c-) by direct enumeration of all pairs.
fn pairwise_auroc2(sample: &[(u8, bool)]) -> f64 {
    let pos: Vec<u8> = sample.iter().filter(|s| s.1).map(|s| s.0).collect();
    let neg: Vec<u8> = sample.iter().filter(|s| !s.1).map(|s| s.0).collect();
    let mut score = 0.0;
    for &p in &pos {
        for &n in &neg {
            score += match p.cmp(&n) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Equal => 0.5,
                std::cmp::Ordering::Less => 0.0,
            };
        }
    }
    score / (pos.len() * neg.len()) as f64
}

/// Same statistic for two confidence distributions.
fn pairwise_auroc2_dist(correct: &[f64; 4], incorrect: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let w = correct[i] * incorrect[j];
            s += if i > j { w } else if i == j { 0.5 * w } else { 0.0 };
        }
    }
    s
}

fn c1_auroc2_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=200);
        let mut raw: Vec<(u8, bool)> = (0..n).map(|_| (rng.random_range(1..=4), rng.random_bool(0.6))).collect();
        raw[0].1 = true;
        raw[1].1 = false;
        let sample: RatingSample =
            raw.iter().map(|&(c, ok)| (LikertConfidence::new(i64::from(c)).unwrap(), ok)).collect();
        let got: f64 = auroc2(&sample).map_err(|e| e.to_string())?;
        worst = worst.max((got - pairwise_auroc2(&raw)).abs());
    }
    let dt = t0.elapsed();
    ensure!(worst <= 1e-12, "max |trapezoid - pairwise| = {worst:e}");
    ensure!(dt < Duration::from_secs(5), "took {dt:?}");
    Ok(format!("1000 samples, max deviation {worst:.1e}, {dt:.2?}"))
}

fn c2_operator_endpoints() -> Outcome {
    let want_1 = pairwise_auroc2_dist(&INFORMATIVE_CORRECT, &INFORMATIVE_INCORRECT);
    let want_0 = pairwise_auroc2_dist(&UNIFORM, &UNIFORM);
    let got_1 = estimate_operator_auroc2(1.0, 100_000, 21).ok_or("no estimate")?;
    let got_0 = estimate_operator_auroc2(0.0, 100_000, 22).ok_or("no estimate")?;
    ensure!((want_1 - 0.75).abs() < 1e-12 && (want_0 - 0.5).abs() < 1e-12, "oracle values {want_1}, {want_0}");
    ensure!((got_1 - want_1).abs() <= 0.01, "lambda=1: {got_1:.4} vs {want_1}");
    ensure!((got_0 - want_0).abs() <= 0.01, "lambda=0: {got_0:.4} vs {want_0}");
    Ok(format!("lambda=1 -> {got_1:.4} (oracle {want_1}), lambda=0 -> {got_0:.4} (oracle {want_0})"))
}

/// Logistic observer under the staircase; returns per-trial correctness.
fn staircase_run(op: &SyntheticOperator, n: usize, seed: u64, grid_ok: &mut bool) -> Vec<(DifficultyLevel, Inference, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = StaircaseState::new();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        *grid_ok &= DIFFERENTIALS_MS.contains(&s.differential_ms());
        let d = assign_delays(&s, &mut rng);
        let inf = synthetic_infer(op, f64::from(d.differential_ms()), d.lower_robot, &mut rng);
        let correct = inf.choice == d.lower_robot;
        out.push((s.level(), inf, correct));
        s = s.update(correct);
    }
    *grid_ok &= DIFFERENTIALS_MS.contains(&s.differential_ms());
    out
}

fn c3_staircase_convergence() -> Outcome {
    let t0 = Instant::now();
    let op = SyntheticOperator::default();
    let mut grid_ok = true;
    let accs: Vec<f64> = (0..20)
        .map(|seed| {
            let run = staircase_run(&op, 1000, 300 + seed, &mut grid_ok);
            run[500..].iter().filter(|r| r.2).count() as f64 / 500.0
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let (lo, hi) = accs.iter().fold((1.0f64, 0.0f64), |(l, h), &a| (l.min(a), h.max(a)));
    let dt = t0.elapsed();
    ensure!(grid_ok, "differential left the grid");
    ensure!((0.65..=0.76).contains(&mean), "mean accuracy {mean:.4} over the last 500 trials");
    ensure!(dt < Duration::from_secs(10), "took {dt:?}");
    Ok(format!("mean last-500 accuracy {mean:.4} over 20 seeds (range {lo:.3}..{hi:.3}), {dt:.2?}"))
}

fn c4_mcs_complementarity() -> Outcome {
    let agent = AiDssModel::new(0.7, ConfidenceTable::synthetic(1.0), Calibration::Well).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let level = DifficultyLevel::new(3).unwrap();
    let truth = RobotId::A;
    let (mut n_h, mut n_a, mut n_mcs) = (0usize, 0usize, 0usize);
    let (mut n_dis, mut dis_mcs, mut dis_dr) = (0usize, 0usize, 0usize);
    let n = 10_000;
    for _ in 0..n {
        let h = ai_infer(&agent, truth, level, &mut rng);
        let a = ai_infer(&agent, truth, level, &mut rng);
        let m = mcs(h, a, TiePolicy::PreferHuman, &mut rng).0;
        let r = dummy_random(h, a, &mut rng).0;
        n_h += usize::from(h.choice == truth);
        n_a += usize::from(a.choice == truth);
        n_mcs += usize::from(m.choice == truth);
        if h.choice != a.choice {
            n_dis += 1;
            dis_mcs += usize::from(m.choice == truth);
            dis_dr += usize::from(r.choice == truth);
        }
    }
    let pct = |k: usize, d: usize| 100.0 * k as f64 / d as f64;
    let best = pct(n_h.max(n_a), n);
    let (m_all, m_dis, r_dis) = (pct(n_mcs, n), pct(dis_mcs, n_dis), pct(dis_dr, n_dis));
    ensure!(m_all - best >= 2.0, "MCS {m_all:.2}% vs best individual {best:.2}%");
    ensure!(m_dis - r_dis >= 10.0, "disagreement MCS {m_dis:.2}% vs DR {r_dis:.2}%");
    Ok(format!("MCS {m_all:.2}% vs best {best:.2}%; disagreement ({n_dis}) MCS {m_dis:.2}% vs DR {r_dis:.2}%"))
}

fn c5_calibration_sensitivity() -> Outcome {
    let cfg = ExperimentConfig { n_sessions: 50, seed: 5, ..ExperimentConfig::default() };
    let runs = run_experiment(&cfg, |i| dss_for_session(DssLabel::Mixed, i)).map_err(|e| e.to_string())?;
    let records: Vec<TrialRecord> = runs.into_iter().flat_map(|r| r.records).collect();
    let accs = session_accuracies(&records, StrategyId::Mcs);
    let pick = |c| accs.iter().filter(|a| a.1 == c).map(|a| a.2).collect::<Vec<f64>>();
    let (well, poor) = (pick(Calibration::Well), pick(Calibration::Poor));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let t = t_test::<f64>(&well, &poor, TTestMode::Pooled).map_err(|e| e.to_string())?;
    let (mw, mp) = (mean(&well), mean(&poor));
    ensure!(well.len() == 25 && poor.len() == 25, "sessions {} well / {} poor", well.len(), poor.len());
    ensure!(mw > mp && t.p < 0.05, "MCS well {mw:.4} vs poor {mp:.4}, t({}) = {:.3}, p = {:.4}", t.df, t.t, t.p);
    Ok(format!("MCS well {mw:.4} vs poor {mp:.4}, t({}) = {:.3}, p = {:.2e}", t.df, t.t, t.p))
}

fn c6_poor_calibration_failure() -> Outcome {
    let op = SyntheticOperator::default();
    let mut grid_ok = true;
    let data: Vec<TrialDatum> = staircase_run(&op, 10_000, 6, &mut grid_ok)
        .into_iter()
        .map(|(level, inf, correct)| TrialDatum { level, correct, confidence: inf.confidence })
        .collect();
    let h = data.iter().filter(|d| d.correct).count() as f64 / data.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let rows = virtual_pairing(&AiDssModel::builtin(Calibration::Poor), &data, &mut rng).map_err(|e| e.to_string())?;
    let acc = |s| rows.iter().find(|o| o.strategy == s).map(|o| o.accuracy).unwrap_or(f64::NAN);
    let (m, hp) = (acc(StrategyId::Mcs), acc(StrategyId::Hp));
    let detail = format!("HP {hp:.4} vs MCS {m:.4} (operator accuracy {h:.4}, 10000 paired trials)");
    ensure!(hp >= m, "{detail}");
    Ok(detail)
}

fn c7_delay_semantics() -> Outcome {
    let arena = make_environment::<f64>(4, 3).map_err(|e| e.to_string())?;
    let issue = 20u64;
    for d in [0u32, 3, 5, 7, 40, 55, 135] {
        let cmd = VelocityCommand::new(1.0, 0.0, issue).map_err(|e| e.to_string())?;
        let tr = run_trial_segment(&arena, d, &[cmd], 2_000).map_err(|e| e.to_string())?;
        let first = tr.samples.iter().find(|s| s.pose != arena.start).map(|s| s.tick);
        let want = issue + d.div_ceil(5) as u64;
        ensure!(delay_ticks(d) == d.div_ceil(5) as u64, "delay_ticks({d})");
        ensure!(first == Some(want), "delay {d} ms: first motion at {first:?}, expected {want}");
    }
    let script = [(0u64, 0.6, 0.0), (40, 0.6, 0.8), (120, 0.3, -0.5), (260, 0.0, 0.0)];
    let cmds: Vec<_> =
        script.iter().map(|&(t, l, a)| VelocityCommand::new(l, a, t).unwrap()).collect::<Vec<VelocityCommand<f64>>>();
    let base = run_trial_segment(&arena, 0, &cmds, 3_000).map_err(|e| e.to_string())?;
    for d in [5u32, 35, 60, 95, 135] {
        let k = delay_ticks(d) as usize;
        let shifted = run_trial_segment(&arena, d, &cmds, 3_000).map_err(|e| e.to_string())?;
        for (i, s) in shifted.samples.iter().enumerate() {
            let want = if i < k { arena.start } else { base.samples[i - k].pose };
            ensure!(s.pose == want, "delay {d}: sample {i} {:?} != {:?}", s.pose, want);
        }
    }
    Ok("onset at t + ceil(d/5) for 7 delays; delay-shift exact on 5 delays".into())
}

/// Hash of the scored-record CSV of the seed-42 reference session.
const GOLDEN_RECORDS_SHA256: &str = "94b9eef7c35c34e8f1e2f119dff8f7d45f46e37200702d2d9dfe79d46e67175d";

fn c8_determinism_replay() -> Outcome {
    let pilots = PilotCache::new(30_000);
    let run = || {
        run_synthetic_session(
            "golden",
            SessionConfig::with_seed(42),
            AiDssModel::builtin(Calibration::Well),
            &SyntheticOperator::default(),
            0.5,
            &pilots,
        )
    };
    let (log_a, rec_a) = run().map_err(|e| e.to_string())?;
    let (log_b, rec_b) = run().map_err(|e| e.to_string())?;
    let (csv_a, csv_b) = (records_to_csv(&rec_a), records_to_csv(&rec_b));
    ensure!(csv_a.as_bytes() == csv_b.as_bytes(), "record CSVs differ between identical runs");
    ensure!(log_a.to_jsonl() == log_b.to_jsonl(), "event logs differ between identical runs");
    let replayed = replay(&log_a).map_err(|e| e.to_string())?;
    ensure!(replayed == rec_a, "replayed records differ from live records");
    let reread = EventLog::read_jsonl(log_a.to_jsonl().as_bytes()).map_err(|e| e.to_string())?;
    ensure!(replay(&reread).map_err(|e| e.to_string())? == rec_a, "replay from JSONL differs");
    let hash = records_sha256(&rec_a);
    ensure!(hash == GOLDEN_RECORDS_SHA256, "records hash {hash} != golden {GOLDEN_RECORDS_SHA256}");
    Ok(format!("{} records, sha256 {}", rec_a.len(), &hash[..16]))
}

fn c9_jsd_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut dist = || {
        let v: Vec<f64> = (0..4).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() + 1e-3 }).collect();
        let s: f64 = v.iter().sum();
        if s == 0.0 {
            vec![0.25; 4]
        } else {
            v.iter().map(|x| x / s).collect()
        }
    };
    for _ in 0..2000 {
        let (p, q) = (dist(), dist());
        let pq: f64 = jsd(&p, &q).map_err(|e| e.to_string())?;
        let qp: f64 = jsd(&q, &p).map_err(|e| e.to_string())?;
        let pp: f64 = jsd(&p, &p).map_err(|e| e.to_string())?;
        ensure!((pq - qp).abs() <= 1e-12, "asymmetric: {pq} vs {qp}");
        ensure!(pp.abs() <= 1e-12, "J(P,P) = {pp}");
        ensure!((0.0..=1.0).contains(&pq), "out of bounds: {pq}");
    }
    let disjoint: f64 = jsd(&[1.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 1.0]).map_err(|e| e.to_string())?;
    let worked: f64 = jsd(&[0.5, 0.5, 0.0, 0.0], &[0.25; 4]).map_err(|e| e.to_string())?;
    ensure!((disjoint - 1.0).abs() <= 1e-12, "disjoint JSD {disjoint}");
    ensure!((worked - 0.311278).abs() <= 1e-6, "worked value {worked}");
    Ok(format!("2000 random pairs; worked value {worked:.6}"))
}

fn c10_statistics() -> Outcome {
    let xs: Vec<f64> = (0..20).map(f64::from).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 2.0).collect();
    let fit = ols_fit(&xs, &ys).map_err(|e| e.to_string())?;
    ensure!(fit.r_squared == 1.0, "noiseless r^2 = {}", fit.r_squared);
    let t = t_test::<f64>(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], TTestMode::Pooled).map_err(|e| e.to_string())?;
    ensure!(t.t == 0.0 && t.p == 1.0, "identical samples: t {} p {}", t.t, t.p);
    let p = student_t_two_sided(2.0, 10.0);
    ensure!((p - 0.0734).abs() <= 5e-4, "t=2, df=10 -> p {p}");
    Ok(format!("r^2 = 1, identical t = 0 / p = 1, p(t=2, df=10) = {p:.5}"))
}

fn c11_ts_convergence() -> Outcome {
    let mut share = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_100 + seed);
        let mut s = BanditState::default();
        let mut human = 0usize;
        for i in 0..1000 {
            let pick = ts_select(&s, &mut rng);
            if i >= 800 && pick == Source::Human {
                human += 1;
            }
            s = ts_update(s, rng.random_bool(0.8), rng.random_bool(0.6));
        }
        share += human as f64 / 200.0;
    }
    share /= 100.0;
    ensure!(share > 0.85, "human arm share {share:.4}");
    Ok(format!("human arm chosen {:.2}% of the last 200 trials (100 seeds)", 100.0 * share))
}

fn fixture_session(id: &str, n_correct: usize, confidences: impl Fn(usize) -> u8) -> Vec<TrialRecord> {
    (0..100)
        .map(|i| {
            let truth = RobotId::A;
            let choice = if i < n_correct { truth } else { truth.other() };
            let inf = Inference::of(choice, confidences(i));
            TrialRecord {
                session_id: id.into(),
                trial_index: i as u32,
                env: (0, 0),
                delays: DelayAssignment { delay_a_ms: 40, delay_b_ms: 75, lower_robot: truth },
                level: DifficultyLevel::new(2).unwrap(),
                truth,
                human_initial: inf,
                ai: inf,
                changed: false,
                human_final: inf,
                outcomes: BTreeMap::from([(StrategyId::Mcs, StrategyResult { choice, correct: choice == truth })]),
                segments: [SegmentOutcome::default(); 2],
                calibration: Calibration::Well,
                started_at: String::new(),
                resolved_at: String::new(),
            }
        })
        .collect()
}

fn c12_exclusions() -> Outcome {
    let cfg = SessionConfig::default();
    let varied = |i: usize| (i % 4) as u8 + 1;
    let low = fixture_session("low", 60, varied);
    let edge = fixture_session("edge", 65, varied);
    let same = fixture_session("same", 90, |i| if i < 96 { 3 } else { 2 });
    let at_limit = fixture_session("limit", 90, |i| if i < 95 { 3 } else { 2 });
    ensure!(exclusion_reason(&low, &cfg).is_some(), "accuracy 0.60 retained");
    ensure!(exclusion_reason(&edge, &cfg).is_none(), "accuracy 0.65 excluded");
    ensure!(exclusion_reason(&same, &cfg).is_some(), "96 identical confidences retained");
    ensure!(exclusion_reason(&at_limit, &cfg).is_none(), "95 identical confidences excluded");
    let kept = apply_exclusions(vec![low, edge, same, at_limit], &cfg);
    let ids: Vec<&str> = kept.iter().map(|s| s[0].session_id.as_str()).collect();
    ensure!(ids == ["edge", "limit"], "kept {ids:?}");
    Ok("0.60 excluded, 0.65 retained, 96 identical excluded, 95 identical retained".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("AUROC2 trapezoid equals pairwise oracle", c1_auroc2_oracle),
        ("synthetic operator AUROC2 endpoints", c2_operator_endpoints),
        ("staircase convergence", c3_staircase_convergence),
        ("MCS complementarity", c4_mcs_complementarity),
        ("calibration sensitivity", c5_calibration_sensitivity),
        ("poor-calibration failure mode (HP >= MCS)", c6_poor_calibration_failure),
        ("delay semantics", c7_delay_semantics),
        ("determinism and replay", c8_determinism_replay),
        ("JSD properties", c9_jsd_properties),
        ("regression and t statistics", c10_statistics),
        ("Thompson sampling convergence", c11_ts_convergence),
        ("exclusion rules", c12_exclusions),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
