//! Online hierarchical decision loop: gate, classify, score, reject.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::backbone::{argmax, FeatureFrame, NativeBackboneModel};
use crate::calibration::CalibrationPack;
use crate::error::{Error, Result};
use crate::gate::{gate_decide, gate_probability, GateDecision};
use crate::scoring::{
    score_density, score_energy, AggregationBuffer, Components, RawComponents, ScoreStats, TempDensConfig,
    TemporalTracker,
};
use crate::stream::WindowFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    NoAction,
    Class { index: usize },
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub start_s: f64,
    pub decision: Decision,
    pub p_task: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawComponents>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardized: Option<Components>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_ood: Option<f64>,
    pub history_mature: bool,
    /// Set when a numeric error forced a fail-closed rejection.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

impl DecisionRecord {
    pub fn gated_task(&self) -> bool {
        self.decision != Decision::NoAction
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub lambda: f64,
    pub tau: f64,
    pub scoring: TempDensConfig,
    pub reset_gap_s: f64,
    pub history: usize,
    /// Frames averaged for the online baseline variants.
    pub aggregate_window: usize,
}

impl EngineConfig {
    pub fn from_pack(pack: &CalibrationPack) -> Self {
        Self {
            lambda: pack.lambda,
            tau: pack.tau,
            scoring: pack.scoring,
            reset_gap_s: pack.calibration.reset_gap_s,
            history: pack.calibration.history,
            aggregate_window: 3,
        }
    }
}

/// Task-frame outputs kept for downstream consumers (baselines, evaluation).
#[derive(Debug, Clone, PartialEq)]
pub struct TaskObservation {
    pub logits: Vec<f64>,
    pub features: Vec<f64>,
    pub aggregated_logits: Vec<f64>,
    pub aggregated_features: Vec<f64>,
}

/// Mutable per-stream state around a shared calibration pack.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    pack: &'a CalibrationPack,
    stats: ScoreStats,
    cfg: EngineConfig,
    tracker: TemporalTracker,
    buffer: AggregationBuffer,
    last_t: Option<f64>,
    last_task: Option<TaskObservation>,
}

impl<'a> Engine<'a> {
    pub fn new(pack: &'a CalibrationPack, cfg: EngineConfig) -> Result<Self> {
        cfg.scoring.validate()?;
        Ok(Self {
            pack,
            stats: pack.stats,
            cfg,
            tracker: TemporalTracker::new(cfg.history, cfg.scoring.metric, cfg.scoring.epsilon, cfg.reset_gap_s)?,
            buffer: AggregationBuffer::new(cfg.aggregate_window)?,
            last_t: None,
            last_task: None,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    /// Outputs of the most recent task-gated step, if it produced any.
    pub fn last_task(&self) -> Option<&TaskObservation> {
        self.last_task.as_ref()
    }

    /// Full step on a raw window with the native models.
    pub fn step(&mut self, window: &WindowFrame, model: &NativeBackboneModel) -> Result<DecisionRecord> {
        self.check_order(window.start_s)?;
        let p_task = match gate_probability(&window.samples, &model.gate) {
            Ok(p) => p,
            Err(e) => {
                self.last_t = Some(window.start_s);
                return Ok(self.fault(window.start_s, f64::NAN, e));
            }
        };
        self.step_with(window.start_s, p_task, || model.classifier.forward(&window.samples))
    }

    /// Step on a precomputed frame (replay or cached features).
    pub fn step_frame(&mut self, frame: &FeatureFrame, p_task: f64) -> Result<DecisionRecord> {
        self.step_with(frame.start_s, p_task, || {
            Ok((frame.logits.clone(), frame.features.clone()))
        })
    }

    /// Generic step: `infer` runs only when the gate opens.
    pub fn step_with<F>(&mut self, start_s: f64, p_task: f64, infer: F) -> Result<DecisionRecord>
    where
        F: FnOnce() -> Result<(Vec<f64>, Vec<f64>)>,
    {
        self.check_order(start_s)?;
        self.last_t = Some(start_s);
        self.last_task = None;
        if !p_task.is_finite() {
            return Ok(self.fault(start_s, p_task, Error::NonFinite(format!("p_task = {p_task}"))));
        }
        if gate_decide(p_task, self.cfg.lambda) == GateDecision::Rest {
            return Ok(DecisionRecord {
                start_s,
                decision: Decision::NoAction,
                p_task,
                raw: None,
                standardized: None,
                s_ood: None,
                history_mature: false,
                fault: None,
            });
        }
        let (logits, features) = match infer() {
            Ok(out) => out,
            Err(e) => return Ok(self.fault(start_s, p_task, e)),
        };
        match self.score(start_s, &logits, &features) {
            Ok((raw, standardized, s)) => {
                let decision = if s > self.cfg.tau {
                    Decision::Reject
                } else {
                    Decision::Class { index: argmax(&logits) }
                };
                if let Ok((al, af)) = self.buffer.push(&logits, &features) {
                    self.last_task = Some(TaskObservation {
                        logits,
                        features,
                        aggregated_logits: al,
                        aggregated_features: af,
                    });
                }
                Ok(DecisionRecord {
                    start_s,
                    decision,
                    p_task,
                    raw: Some(raw),
                    standardized: Some(standardized),
                    s_ood: Some(s),
                    history_mature: raw.temp_mature,
                    fault: None,
                })
            }
            Err(e) => Ok(self.fault(start_s, p_task, e)),
        }
    }

    fn check_order(&self, start_s: f64) -> Result<()> {
        match self.last_t {
            Some(prev) if !(start_s > prev) => Err(Error::OutOfOrder { prev, next: start_s }),
            _ => Ok(()),
        }
    }

    fn score(&mut self, t: f64, logits: &[f64], features: &[f64]) -> Result<(RawComponents, Components, f64)> {
        let sc = &self.cfg.scoring;
        if logits.iter().chain(features).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("frame at {t} s")));
        }
        let ebo = score_energy(logits, sc.fusion.temperature)?;
        let dens = score_density(features, &self.pack.density, sc.k, sc.fusion.eta)?;
        if self.tracker.gap_exceeded(t) {
            self.buffer.clear();
        }
        let temp = self.tracker.observe(t, features)?;
        let raw = RawComponents {
            ebo,
            mahalanobis: dens.mahalanobis,
            knn: dens.knn,
            dens: dens.value,
            temp: temp.value,
            temp_mature: temp.mature,
        };
        let z = self.stats.standardize(&raw);
        let s = z.fuse(&sc.fusion);
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("fused score at {t} s")));
        }
        Ok((raw, z, s))
    }

    fn fault(&self, start_s: f64, p_task: f64, e: Error) -> DecisionRecord {
        log::warn!("fault at {start_s} s: {e}");
        DecisionRecord {
            start_s,
            decision: Decision::Reject,
            p_task,
            raw: None,
            standardized: None,
            s_ood: None,
            history_mature: false,
            fault: Some(e.to_string()),
        }
    }
}

/// Frame plus the gate probability computed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedFrame {
    pub frame: FeatureFrame,
    pub p_task: f64,
    /// Share of the window inside a task event.
    pub coverage: f64,
}

/// Runs a fresh engine over time-ordered frames.
pub fn run_stream(frames: &[GatedFrame], pack: &CalibrationPack, cfg: EngineConfig) -> Result<Vec<DecisionRecord>> {
    let mut engine = Engine::new(pack, cfg)?;
    frames.iter().map(|g| engine.step_frame(&g.frame, g.p_task)).collect()
}

pub fn write_jsonl<W: Write>(records: &[DecisionRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<decision stream>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::calibration::CalibrationConfig;
    use crate::scoring::{DensityModel, FeatureMemory, Moments};
    use crate::stream::TrueState;

    fn pack() -> CalibrationPack {
        CalibrationPack {
            density: DensityModel {
                class_means: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
                inv_cov: DMatrix::identity(2, 2),
                memory: FeatureMemory::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.5]]).unwrap(),
            },
            stats: ScoreStats {
                ebo: Moments { mean: 0.0, std: 1.0 },
                dens: Moments { mean: 0.0, std: 1.0 },
                temp: Moments { mean: 0.0, std: 1.0 },
            },
            tau: 2.0,
            lambda: 0.5,
            scoring: TempDensConfig {
                k: 1,
                ..Default::default()
            },
            calibration: CalibrationConfig::default(),
            aux: None,
            fit_frames: 0,
            validation_frames: 0,
        }
    }

    fn frame(t: f64, z: [f64; 2], f: [f64; 2]) -> FeatureFrame {
        FeatureFrame {
            start_s: t,
            logits: z.to_vec(),
            features: f.to_vec(),
            true_state: TrueState::Rest,
        }
    }

    #[test]
    fn rest_short_circuits() {
        let p = pack();
        let mut e = Engine::new(&p, EngineConfig::from_pack(&p)).unwrap();
        let r = e
            .step_with(0.0, 0.2, || panic!("inference must not run on rest"))
            .unwrap();
        assert_eq!(r.decision, Decision::NoAction);
        assert!(r.raw.is_none() && r.s_ood.is_none());
        assert!(e.tracker.history().is_empty());
    }

    #[test]
    fn threshold_is_strict() {
        let p = pack();
        let mut cfg = EngineConfig::from_pack(&p);
        let mut e = Engine::new(&p, cfg).unwrap();
        let r = e.step_frame(&frame(0.0, [3.0, 1.0], [0.0, 0.0]), 0.9).unwrap();
        let s = r.s_ood.unwrap();
        cfg.tau = s;
        let mut e = Engine::new(&p, cfg).unwrap();
        let r = e.step_frame(&frame(0.0, [3.0, 1.0], [0.0, 0.0]), 0.9).unwrap();
        assert_eq!(r.decision, Decision::Class { index: 0 });
        cfg.tau = s - 1e-12;
        let mut e = Engine::new(&p, cfg).unwrap();
        let r = e.step_frame(&frame(0.0, [3.0, 1.0], [0.0, 0.0]), 0.9).unwrap();
        assert_eq!(r.decision, Decision::Reject);
    }

    #[test]
    fn unit_standardized_scores_reject_at_tau_two() {
        let mut p = pack();
        // raw ebo = -ln 2 etc.; shift the means so every standardized component is 1
        let z = [0.0, 0.0];
        let ebo = score_energy(&z, 1.0).unwrap();
        p.stats.ebo.mean = ebo - 1.0;
        p.stats.dens.mean = -1.0;
        p.stats.temp.mean = -1.0;
        let mut e = Engine::new(&p, EngineConfig::from_pack(&p)).unwrap();
        let r = e.step_frame(&frame(0.0, z, [0.0, 0.0]), 1.0).unwrap();
        let c = r.standardized.unwrap();
        assert_eq!((c.ebo, c.dens, c.temp), (1.0, 1.0, 1.0));
        assert_eq!(r.s_ood, Some(3.0));
        assert_eq!(r.decision, Decision::Reject);
    }

    #[test]
    fn cold_start_and_order() {
        let p = pack();
        let mut e = Engine::new(&p, EngineConfig::from_pack(&p)).unwrap();
        let a = e.step_frame(&frame(0.0, [1.0, 0.0], [0.0, 0.0]), 1.0).unwrap();
        let b = e.step_frame(&frame(0.125, [1.0, 0.0], [0.1, 0.0]), 1.0).unwrap();
        let c = e.step_frame(&frame(0.25, [1.0, 0.0], [0.2, 0.0]), 1.0).unwrap();
        assert!(!a.history_mature && !b.history_mature && c.history_mature);
        assert_eq!(a.raw.unwrap().temp, 0.0);
        assert!(e.step_frame(&frame(0.1, [1.0, 0.0], [0.0, 0.0]), 1.0).is_err());
    }

    #[test]
    fn faults_fail_closed() {
        let p = pack();
        let mut e = Engine::new(&p, EngineConfig::from_pack(&p)).unwrap();
        let r = e.step_frame(&frame(0.0, [f64::NAN, 0.0], [0.0, 0.0]), 1.0).unwrap();
        assert_eq!(r.decision, Decision::Reject);
        assert!(r.fault.is_some());
        let r = e
            .step_with(0.125, 1.0, || Err(Error::ZeroVariance { filter: 2 }))
            .unwrap();
        assert_eq!(r.decision, Decision::Reject);
    }

    #[test]
    fn jsonl_is_one_record_per_line() {
        let p = pack();
        let frames: Vec<GatedFrame> = (0..5)
            .map(|i| GatedFrame {
                frame: frame(i as f64 * 0.125, [1.0, 0.0], [0.0, i as f64]),
                p_task: if i == 2 { 0.1 } else { 0.9 },
                coverage: 0.0,
            })
            .collect();
        let recs = run_stream(&frames, &p, EngineConfig::from_pack(&p)).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        let back: DecisionRecord = serde_json::from_str(text.lines().nth(2).unwrap()).unwrap();
        assert_eq!(back.decision, Decision::NoAction);
        let back: DecisionRecord = serde_json::from_str(text.lines().nth(4).unwrap()).unwrap();
        assert_eq!(back, recs[4]);
    }
}
