//! Acceptance suite. Prints one PASS/FAIL line per criterion to stdout
//! (bypassing the test harness capture) and fails if any hard criterion fails.

use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tempdens_core::backbone::head::loss_and_gradient;
use tempdens_core::backbone::{argmax, FeatureFrame, LinearHead, LinearModel, NativeBackboneModel};
use tempdens_core::calibration::{
    calibrate, calibrate_tau, fit_score_stats, CalibrationConfig, CalibrationPack, IdRun,
};
use tempdens_core::engine::{run_stream, write_jsonl, Decision, DecisionRecord, Engine, EngineConfig, GatedFrame};
use tempdens_core::evaluation::{
    auroc, evaluate_dataset, evaluate_subject, run_ablation, ComponentMask, SubjectComponents,
};
use tempdens_core::pipeline::{self, DatasetIndex};
use tempdens_core::scoring::{
    combine_density, score_density, score_energy, score_knn, score_mahalanobis, BaselineConfig, Components,
    DensityModel, FeatureMemory, Metric, Moments, RawComponents, ScoreStats, TempDensConfig, TemporalTracker,
};
use tempdens_core::stream::{TrueState, WindowFrame};
use tempdens_core::synth::{synth_feature_stream, FeatureSynthSpec};
use tempdens_core::RunConfig;

struct Outcome {
    name: &'static str,
    pass: bool,
    soft: bool,
    detail: String,
}

fn emit(o: &Outcome) {
    let tag = match (o.pass, o.soft) {
        (true, _) => "PASS",
        (false, false) => "FAIL",
        (false, true) => "FAIL (soft)",
    };
    let mut out = std::io::stdout().lock();
    writeln!(out, "[acceptance] {tag:<11} {:<28} {}", o.name, o.detail).unwrap();
    out.flush().unwrap();
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------- oracles

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (d, k) = (16, 10);
    let rows: Vec<Vec<f64>> = (0..10_000).map(|_| gaussian_vec(&mut rng, d)).collect();
    let memory = FeatureMemory::from_rows(&rows).unwrap();
    let mut knn_mismatch = 0;
    for _ in 0..1000 {
        let q = gaussian_vec(&mut rng, d);
        let mut all: Vec<f64> = rows.iter().map(|r| euclidean(&q, r)).collect();
        all.sort_by(f64::total_cmp);
        let expected = all[..k].iter().sum::<f64>() / k as f64;
        if score_knn(&q, &memory, k).unwrap().to_bits() != expected.to_bits() {
            knn_mismatch += 1;
        }
    }

    let mut maha_err: f64 = 0.0;
    for _ in 0..200 {
        let a = DMatrix::from_fn(d, d, |_, _| gaussian(&mut rng));
        let inv = &a * a.transpose() + DMatrix::identity(d, d) * 0.1;
        let means: Vec<Vec<f64>> = (0..4).map(|_| gaussian_vec(&mut rng, d)).collect();
        let x = gaussian_vec(&mut rng, d);
        let expected = means
            .iter()
            .map(|m| {
                let v = DVector::from_iterator(d, x.iter().zip(m).map(|(a, b)| a - b));
                (v.transpose() * &inv * &v)[(0, 0)]
            })
            .fold(f64::INFINITY, f64::min);
        let got = score_mahalanobis(&x, &means, &inv).unwrap();
        maha_err = maha_err.max((got - expected).abs() / expected.abs().max(1.0));
    }

    let id: Vec<f64> = (0..1000).map(|_| (gaussian(&mut rng) * 20.0).round() / 20.0).collect();
    let ood: Vec<f64> = (0..1000)
        .map(|_| ((gaussian(&mut rng) + 0.7) * 20.0).round() / 20.0)
        .collect();
    let mut wins = 0.0;
    for o in &ood {
        for i in &id {
            wins += if o > i {
                1.0
            } else if o == i {
                0.5
            } else {
                0.0
            };
        }
    }
    let expected_auc = wins / 1e6;
    let auc_err = (auroc(&id, &ood).unwrap() - expected_auc).abs();

    let elapsed = started.elapsed();
    Outcome {
        name: "oracle-equivalence",
        pass: knn_mismatch == 0 && maha_err < 1e-12 && auc_err < 1e-12 && elapsed < Duration::from_secs(30),
        soft: false,
        detail: format!(
            "knn bitwise mismatches {knn_mismatch}/1000; mahalanobis max rel err {maha_err:.1e}; auroc err {auc_err:.1e}; {:.2}s",
            elapsed.as_secs_f64()
        ),
    }
}

// ------------------------------------------------------------ identities

fn analytic_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut shift_err: f64 = 0.0;
    for _ in 0..10_000 {
        let k = rng.random_range(2..12);
        let z: Vec<f64> = (0..k).map(|_| gaussian(&mut rng) * 5.0).collect();
        let c = rng.random_range(-50.0..50.0);
        let t = rng.random_range(0.2..5.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let d = score_energy(&shifted, t).unwrap() - (score_energy(&z, t).unwrap() - c);
        shift_err = shift_err.max(d.abs());
    }

    let mut affine_err: f64 = 0.0;
    for _ in 0..1000 {
        let d = rng.random_range(2..32);
        let a = gaussian_vec(&mut rng, d);
        let b = gaussian_vec(&mut rng, d);
        let mut tracker = TemporalTracker::new(3, Metric::SecondOrder, 1e-12, 1.0).unwrap();
        for step in 0..6 {
            let t = step as f64 * 0.125;
            let f: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a + b * t).collect();
            let s = tracker.observe(t, &f).unwrap();
            if s.mature {
                affine_err = affine_err.max(s.value);
            }
        }
    }

    let raw: Vec<RawComponents> = (0..5000)
        .map(|_| RawComponents {
            ebo: gaussian(&mut rng) * 3.0 - 7.0,
            mahalanobis: 0.0,
            knn: 0.0,
            dens: rng.random_range(0.0..40.0),
            temp: rng.random_range(0.0..2.0),
            temp_mature: true,
        })
        .collect();
    let stats = fit_score_stats(&raw).unwrap();
    let std_set: Vec<Components> = raw.iter().map(|r| stats.standardize(r)).collect();
    let mut moment_err: f64 = 0.0;
    for pick in [|c: &Components| c.ebo, |c: &Components| c.dens, |c: &Components| c.temp] {
        let v: Vec<f64> = std_set.iter().map(pick).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt();
        moment_err = moment_err.max(m.abs()).max((s - 1.0).abs());
    }

    let (energy_match, energy_total) = energy_reduction();

    let mut endpoint_ok = true;
    let rows: Vec<Vec<f64>> = (0..200).map(|_| gaussian_vec(&mut rng, 6)).collect();
    let model = DensityModel {
        class_means: vec![gaussian_vec(&mut rng, 6), gaussian_vec(&mut rng, 6)],
        inv_cov: DMatrix::identity(6, 6) * 0.7,
        memory: FeatureMemory::from_rows(&rows).unwrap(),
    };
    for _ in 0..500 {
        let x = gaussian_vec(&mut rng, 6);
        let m = score_mahalanobis(&x, &model.class_means, &model.inv_cov).unwrap();
        let kn = score_knn(&x, &model.memory, 10).unwrap();
        endpoint_ok &= score_density(&x, &model, 10, 1.0).unwrap().value.to_bits() == m.to_bits();
        endpoint_ok &= score_density(&x, &model, 10, 0.0).unwrap().value.to_bits() == kn.to_bits();
        endpoint_ok &= combine_density(m, kn, 1.0) == m && combine_density(m, kn, 0.0) == kn;
    }

    Outcome {
        name: "analytic-identities",
        pass: shift_err < 1e-9 && affine_err < 1e-9 && moment_err < 1e-9 && energy_match == energy_total && endpoint_ok,
        soft: false,
        detail: format!(
            "energy shift {shift_err:.1e}; affine temporal {affine_err:.1e}; moments {moment_err:.1e}; \
             (1,0,0) decisions {energy_match}/{energy_total} equal; eta endpoints {}",
            if endpoint_ok { "exact" } else { "inexact" }
        ),
    }
}

fn id_runs(spec: &FeatureSynthSpec, runs: usize, episodes: usize, seed: u64) -> Vec<IdRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..runs)
        .map(|_| {
            synth_feature_stream(spec, episodes, 0.0, 0.0, &mut rng)
                .into_iter()
                .filter(|g| matches!(g.frame.true_state, TrueState::Id { .. }))
                .map(|g| g.frame)
                .collect()
        })
        .collect()
}

fn calibrated(spec: &FeatureSynthSpec, runs: &[IdRun], scoring: TempDensConfig, cap: usize) -> CalibrationPack {
    let cfg = CalibrationConfig {
        memory_cap: cap,
        ..Default::default()
    };
    calibrate(
        runs,
        Some(&spec.head()),
        &scoring,
        &BaselineConfig::default(),
        &cfg,
        0.5,
        7,
    )
    .unwrap()
}

/// Engine decisions under `(1, 0, 0)` against thresholding the raw energy
/// at the same nearest-rank quantile of the validation energies.
fn energy_reduction() -> (usize, usize) {
    let spec = FeatureSynthSpec::default();
    let runs = id_runs(&spec, 3, 60, 21);
    let mut scoring = TempDensConfig::default();
    scoring.fusion = scoring.fusion.with_mask(1.0, 0.0, 0.0);
    let pack = calibrated(&spec, &runs, scoring, 50_000);
    let all: Vec<&FeatureFrame> = runs.iter().flatten().collect();
    let val: Vec<f64> = all[all.len() - pack.validation_frames..]
        .iter()
        .map(|f| score_energy(&f.logits, 1.0).unwrap())
        .collect();
    let tau_e = calibrate_tau(&val, pack.calibration.quantile).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let stream = synth_feature_stream(&spec, 150, 0.5, 0.0, &mut rng);
    let records = run_stream(&stream, &pack, EngineConfig::from_pack(&pack)).unwrap();
    let mut matched = 0;
    for (g, r) in stream.iter().zip(&records) {
        let expected = if g.p_task < 0.5 {
            Decision::NoAction
        } else if score_energy(&g.frame.logits, 1.0).unwrap() > tau_e {
            Decision::Reject
        } else {
            Decision::Class {
                index: argmax(&g.frame.logits),
            }
        };
        matched += usize::from(expected == r.decision);
    }
    (matched, records.len())
}

// ---------------------------------------------------------- head gradient

fn head_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..100 {
        let k = rng.random_range(2..6);
        let d = rng.random_range(2..9);
        let n = rng.random_range(3..25);
        let l2 = rng.random_range(0.0..0.1);
        let head = LinearHead::random(k, d, &mut rng);
        let features: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut rng, d)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let (_, grad) = loss_and_gradient(&head, &features, &labels, l2);
        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for idx in 0..k * d + k {
            let bump = |delta: f64| {
                let mut hh = head.clone();
                if idx < k * d {
                    hh.weights[(idx / d, idx % d)] += delta;
                } else {
                    hh.bias[idx - k * d] += delta;
                }
                loss_and_gradient(&hh, &features, &labels, l2).0
            };
            numeric.push((bump(h) - bump(-h)) / (2.0 * h));
            analytic.push(if idx < k * d {
                grad.weights[(idx / d, idx % d)]
            } else {
                grad.bias[idx - k * d]
            });
        }
        let diff = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm =
            analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(diff / norm.max(1e-12));
    }
    Outcome {
        name: "head-gradient",
        pass: worst < 1e-5,
        soft: false,
        detail: format!("max relative error {worst:.2e} over 100 instances"),
    }
}

// ------------------------------------------------------ synthetic benchmark

fn separability() -> Outcome {
    let started = Instant::now();
    let spec = FeatureSynthSpec::default();
    let runs = id_runs(&spec, 4, 100, 31);
    let pack = calibrated(&spec, &runs, TempDensConfig::default(), 50_000);
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let stream = synth_feature_stream(&spec, 400, 0.5, 0.0, &mut rng);
    let records = run_stream(&stream, &pack, EngineConfig::from_pack(&pack)).unwrap();
    let mut comp = SubjectComponents {
        subject: "synthetic".into(),
        id: Vec::new(),
        ood: Vec::new(),
    };
    for (g, r) in stream.iter().zip(&records) {
        let Some(c) = r.standardized else { continue };
        match g.frame.true_state {
            TrueState::Id { .. } => comp.id.push(c),
            TrueState::Ood { .. } => comp.ood.push(c),
            _ => {}
        }
    }
    let grid = run_ablation(&[comp], &ComponentMask::TABLE, &pack.scoring.fusion).unwrap();
    let row = |label: &str| {
        grid.rows
            .iter()
            .find(|r| r.label == label)
            .and_then(|r| r.average)
            .unwrap()
    };
    let full = row("ebo+dens+temp");
    let single = ["ebo", "dens", "temp"].map(row);
    let best_single = single.iter().cloned().fold(f64::MIN, f64::max);
    let best_row = grid.rows.iter().filter_map(|r| r.average).fold(f64::MIN, f64::max);
    let elapsed = started.elapsed();
    let table: Vec<String> = grid
        .rows
        .iter()
        .map(|r| format!("{}={:.4}", r.label, r.average.unwrap()))
        .collect();
    Outcome {
        name: "synthetic-separability",
        pass: full >= 0.95 && full >= best_single - 0.02 && full >= best_row && elapsed < Duration::from_secs(60),
        soft: false,
        detail: format!(
            "full AUROC {full:.4}; {}; {:.2}s",
            table.join(" "),
            elapsed.as_secs_f64()
        ),
    }
}

// ------------------------------------------------------- policy invariants

fn random_stream(seed: u64, frames: usize) -> Vec<GatedFrame> {
    let spec = FeatureSynthSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_episode = spec.episode_frames + spec.rest_frames;
    let mut stream = synth_feature_stream(&spec, frames.div_ceil(per_episode), 0.3, 0.0, &mut rng);
    stream.truncate(frames);
    for g in &mut stream {
        let jitter: f64 = rng.random_range(-0.45..0.45);
        g.p_task = (g.p_task + jitter).clamp(0.0, 1.0);
    }
    stream
}

fn policy_invariants() -> Outcome {
    let spec = FeatureSynthSpec::default();
    let pack = calibrated(&spec, &id_runs(&spec, 2, 60, 41), TempDensConfig::default(), 50_000);
    let n = 100_000;
    let stream = random_stream(42, n);
    let cfg = EngineConfig::from_pack(&pack);
    let records = run_stream(&stream, &pack, cfg).unwrap();
    let (mut none, mut class, mut reject, mut violations) = (0usize, 0usize, 0usize, 0usize);
    for (g, r) in stream.iter().zip(&records) {
        let gated = g.p_task >= cfg.lambda;
        let over = r.s_ood.is_some_and(|s| s > cfg.tau);
        let ok = match r.decision {
            Decision::NoAction => {
                none += 1;
                !gated && r.s_ood.is_none()
            }
            Decision::Class { index } => {
                class += 1;
                gated && r.s_ood.is_some() && !over && index == argmax(&g.frame.logits)
            }
            Decision::Reject => {
                reject += 1;
                gated && (over || r.fault.is_some())
            }
        };
        violations += usize::from(!ok || r.fault.is_some());
    }
    let partition = none + class + reject == n && records.len() == n;
    let bytes = |recs: &[DecisionRecord]| {
        let mut b = Vec::new();
        write_jsonl(recs, &mut b).unwrap();
        b
    };
    let again = run_stream(&random_stream(42, n), &pack, cfg).unwrap();
    let identical = bytes(&records) == bytes(&again);
    Outcome {
        name: "policy-invariants",
        pass: partition && violations == 0 && identical,
        soft: false,
        detail: format!(
            "{n} steps: no_action {none}, class {class}, reject {reject}; violations {violations}; JSONL byte-identical: {identical}"
        ),
    }
}

// -------------------------------------------------------- tau calibration

fn tau_contract() -> Outcome {
    let spec = FeatureSynthSpec::default();
    let runs = id_runs(&spec, 8, 250, 51);
    let pack = calibrated(&spec, &runs, TempDensConfig::default(), 5000);
    let target = 1.0 - pack.calibration.quantile;
    let held_out = id_runs(&spec, 1, 10_000usize.div_ceil(spec.episode_frames), 52);
    let frames: Vec<GatedFrame> = held_out[0]
        .iter()
        .take(10_000)
        .map(|f| GatedFrame {
            frame: f.clone(),
            p_task: 1.0,
            coverage: 1.0,
        })
        .collect();
    let records = run_stream(&frames, &pack, EngineConfig::from_pack(&pack)).unwrap();
    let rejected = records.iter().filter(|r| r.decision == Decision::Reject).count();
    let frr = rejected as f64 / records.len() as f64;
    Outcome {
        name: "tau-calibration",
        pass: records.len() == 10_000 && (frr - target).abs() <= 0.02,
        soft: false,
        detail: format!(
            "held-out ID FRR {:.2}% vs target {:.2}% on {} frames ({} validation frames)",
            100.0 * frr,
            100.0 * target,
            records.len(),
            pack.validation_frames
        ),
    }
}

// ---------------------------------------------------------- real data

fn real_data() -> Outcome {
    let name = "real-data-directional";
    let Some(root) = std::env::var_os("TEMPDENS_REAL_DATA").map(PathBuf::from) else {
        return Outcome {
            name,
            pass: false,
            soft: true,
            detail: "no exported real data; set TEMPDENS_REAL_DATA to a data root to run".into(),
        };
    };
    let run = || -> tempdens_core::Result<String> {
        let cfg = RunConfig::default();
        let eval_cfg = cfg.eval_config();
        let index = DatasetIndex::load(&root)?;
        let mut lines = Vec::new();
        let mut all_ok = true;
        for ds in &index.datasets {
            let mut evals = Vec::new();
            for s in &ds.subjects {
                let model = pipeline::train_subject(&root, &ds.name, s, &cfg)?;
                let data = pipeline::subject_data(&root, s, &model, &cfg)?;
                evals.push(evaluate_subject(&data, &eval_cfg)?);
            }
            let report = evaluate_dataset(&ds.name, &evals, &eval_cfg)?;
            let get = |m: &str| report.average.get(m).copied().unwrap_or(f64::NAN);
            let (t, e, m) = (get("tempdens"), get("ebo"), get("msp"));
            all_ok &= t > e && t > m;
            lines.push(format!("{}: tempdens {t:.4} ebo {e:.4} msp {m:.4}", ds.name));
        }
        Ok(format!(
            "{}{}",
            lines.join("; "),
            if all_ok { "" } else { " (direction not met)" }
        ))
    };
    match run() {
        Ok(detail) => Outcome {
            name,
            pass: !detail.ends_with("(direction not met)"),
            soft: true,
            detail,
        },
        Err(e) => Outcome {
            name,
            pass: false,
            soft: true,
            detail: format!("pipeline error: {e}"),
        },
    }
}

// ------------------------------------------------------------- latency

fn random_pack(rng: &mut ChaCha8Rng, d: usize, rows: usize) -> CalibrationPack {
    let memory: Vec<Vec<f64>> = (0..rows).map(|_| gaussian_vec(rng, d)).collect();
    let unit = Moments { mean: 0.0, std: 1.0 };
    CalibrationPack {
        density: DensityModel {
            class_means: vec![gaussian_vec(rng, d), gaussian_vec(rng, d)],
            inv_cov: DMatrix::identity(d, d),
            memory: FeatureMemory::from_rows(&memory).unwrap(),
        },
        stats: ScoreStats {
            ebo: unit,
            dens: unit,
            temp: unit,
        },
        tau: 1.0,
        lambda: 0.5,
        scoring: TempDensConfig::default(),
        calibration: CalibrationConfig::default(),
        aux: None,
        fit_frames: rows,
        validation_frames: 0,
    }
}

fn latency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let (channels, window) = (22, 500);
    let cap = CalibrationConfig::default().memory_cap;
    let random_model = |rng: &mut ChaCha8Rng, d: usize| LinearModel {
        csp_filters: Array2::from_shape_fn((d, channels), |_| gaussian(rng)),
        head: Some(LinearHead::random(2, d, rng)),
    };
    let model = NativeBackboneModel {
        classifier: random_model(&mut rng, channels),
        gate: random_model(&mut rng, 6),
    };
    let pack = random_pack(&mut rng, channels, cap);
    let mut engine = Engine::new(&pack, EngineConfig::from_pack(&pack)).unwrap();
    let mut worst_full = Duration::ZERO;
    for i in 0..100 {
        let w = WindowFrame {
            start_s: i as f64 * 0.125,
            samples: Array2::from_shape_fn((channels, window), |_| gaussian(&mut rng)),
            true_state: TrueState::Rest,
            coverage: 0.0,
        };
        let t = Instant::now();
        engine.step(&w, &model).unwrap();
        worst_full = worst_full.max(t.elapsed());
    }

    let d = 64;
    let pack64 = random_pack(&mut rng, d, cap);
    let head = LinearHead::random(4, d, &mut rng);
    let mut engine = Engine::new(&pack64, EngineConfig::from_pack(&pack64)).unwrap();
    let mut worst_scoring = Duration::ZERO;
    for i in 0..100 {
        let features = gaussian_vec(&mut rng, d);
        let frame = FeatureFrame {
            start_s: i as f64 * 0.125,
            logits: head.logits(&features),
            features,
            true_state: TrueState::Rest,
        };
        let t = Instant::now();
        engine.step_frame(&frame, 1.0).unwrap();
        worst_scoring = worst_scoring.max(t.elapsed());
    }
    let budget = Duration::from_millis(125);
    Outcome {
        name: "step-latency",
        pass: worst_full < budget && worst_scoring < budget,
        soft: false,
        detail: format!(
            "worst step {:.2} ms (C=22, d=22, window+gate+score, {cap}-row memory); worst scoring step {:.2} ms (d=64)",
            worst_full.as_secs_f64() * 1e3,
            worst_scoring.as_secs_f64() * 1e3
        ),
    }
}

#[test]
fn acceptance() {
    let started = Instant::now();
    let mut outcomes = Vec::new();
    let criteria: [fn() -> Outcome; 8] = [
        oracle_equivalence,
        analytic_identities,
        head_gradient,
        separability,
        policy_invariants,
        tau_contract,
        real_data,
        latency,
    ];
    for c in criteria {
        let o = c();
        emit(&o);
        outcomes.push(o);
    }
    let total = started.elapsed();
    let suite = Outcome {
        name: "suite-runtime",
        pass: total < Duration::from_secs(300),
        soft: false,
        detail: format!("{:.1}s for the full suite", total.as_secs_f64()),
    };
    emit(&suite);
    outcomes.push(suite);
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass && !o.soft).map(|o| o.name).collect();
    assert!(failed.is_empty(), "failed acceptance criteria: {failed:?}");
}
