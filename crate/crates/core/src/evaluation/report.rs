//! Per-subject and per-dataset evaluation runs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    auroc, average, coverage_bin, gate_accuracy, merge_bins, run_ablation, ComponentMask, CoverageBin, Grid, GridRow,
    SubjectComponents,
};
use crate::backbone::LinearHead;
use crate::calibration::{calibrate, CalibrationConfig, CalibrationPack, IdRun};
use crate::engine::{Decision, Engine, EngineConfig, GatedFrame};
use crate::error::{Error, Result};
use crate::scoring::{score_baseline, Baseline, BaselineConfig, BaselineContext, Metric, TempDensConfig};
use crate::stream::TrueState;

/// A scored method: the fused score, a baseline, or a baseline on aggregated frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    TempDens,
    Offline(Baseline),
    Online(Baseline),
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::TempDens => "tempdens".into(),
            Method::Offline(b) => b.name().into(),
            Method::Online(b) => format!("online-{}", b.name()),
        }
    }

    /// TempDens plus every baseline in both variants.
    pub fn all() -> Vec<Method> {
        let mut v = vec![Method::TempDens];
        v.extend(Baseline::ALL.iter().map(|b| Method::Offline(*b)));
        v.extend(Baseline::ALL.iter().map(|b| Method::Online(*b)));
        v
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        if key == "tempdens" {
            return Ok(Method::TempDens);
        }
        match key.strip_prefix("online-") {
            Some(rest) => Ok(Method::Online(rest.parse()?)),
            None => Ok(Method::Offline(key.parse()?)),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Frames whose scores enter the AUROC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Population {
    /// Frames the gate let through.
    Gated,
    /// Every task-truth frame, scored behind an oracle gate.
    AllTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub lambda: f64,
    pub scoring: TempDensConfig,
    pub calibration: CalibrationConfig,
    pub baselines: BaselineConfig,
    pub methods: Vec<Method>,
    pub aggregate_window: usize,
    pub coverage_bins: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            scoring: TempDensConfig::default(),
            calibration: CalibrationConfig::default(),
            baselines: BaselineConfig::default(),
            methods: Method::all(),
            aggregate_window: 3,
            coverage_bins: 10,
            seed: 0,
        }
    }
}

/// Everything needed to evaluate one subject.
#[derive(Debug, Clone)]
pub struct SubjectData {
    pub subject: String,
    /// Chronological training runs; only ID frames are used.
    pub train_runs: Vec<IdRun>,
    /// Time-ordered test sessions.
    pub test_sessions: Vec<Vec<GatedFrame>>,
    pub head: Option<LinearHead>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionCounts {
    pub no_action: usize,
    pub class: usize,
    pub reject: usize,
    pub faults: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectReport {
    pub subject: String,
    pub tau: f64,
    pub auroc: BTreeMap<String, f64>,
    pub auroc_all_task: BTreeMap<String, f64>,
    pub gate_accuracy: Option<f64>,
    pub gate_accuracy_with_ood: Option<f64>,
    pub id_frames: usize,
    pub ood_frames: usize,
    pub counts: DecisionCounts,
}

/// Report plus the per-frame material that dataset-level tables are built from.
#[derive(Debug, Clone)]
pub struct SubjectEval {
    pub report: SubjectReport,
    pub pack: CalibrationPack,
    pub components: SubjectComponents,
    pub coverage_counts: Vec<(usize, usize)>,
    pub coverage_counts_with_ood: Vec<(usize, usize)>,
}

struct Scored {
    id: BTreeMap<Method, Vec<f64>>,
    ood: BTreeMap<Method, Vec<f64>>,
    components: SubjectComponents,
    counts: DecisionCounts,
    gate: Vec<(TrueState, bool, f64)>,
}

fn score_population(
    data: &SubjectData,
    pack: &CalibrationPack,
    cfg: &EvalConfig,
    population: Population,
) -> Result<Scored> {
    let mut engine_cfg = EngineConfig::from_pack(pack);
    engine_cfg.aggregate_window = cfg.aggregate_window;
    let ctx = BaselineContext {
        density: Some(&pack.density),
        aux: pack.aux.as_ref(),
        cfg: &cfg.baselines,
    };
    let mut out = Scored {
        id: BTreeMap::new(),
        ood: BTreeMap::new(),
        components: SubjectComponents {
            subject: data.subject.clone(),
            ..Default::default()
        },
        counts: DecisionCounts::default(),
        gate: Vec::new(),
    };
    let mut unavailable: BTreeMap<Method, String> = BTreeMap::new();
    for session in &data.test_sessions {
        let mut engine = Engine::new(pack, engine_cfg)?;
        for g in session {
            let p = match population {
                Population::Gated => g.p_task,
                Population::AllTask => f64::from(u8::from(g.frame.true_state.is_task())),
            };
            let rec = engine.step_frame(&g.frame, p)?;
            match rec.decision {
                Decision::NoAction => out.counts.no_action += 1,
                Decision::Class { .. } => out.counts.class += 1,
                Decision::Reject => out.counts.reject += 1,
            }
            out.gate
                .push((g.frame.true_state.clone(), rec.gated_task(), g.coverage));
            if rec.fault.is_some() {
                out.counts.faults += 1;
                continue;
            }
            let is_ood = match &g.frame.true_state {
                TrueState::Id { .. } => false,
                TrueState::Ood { .. } => true,
                _ => continue,
            };
            let (Some(s), Some(z), Some(obs)) = (rec.s_ood, rec.standardized, engine.last_task()) else {
                continue;
            };
            if is_ood {
                out.components.ood.push(z);
            } else {
                out.components.id.push(z);
            }
            for m in &cfg.methods {
                if unavailable.contains_key(m) {
                    continue;
                }
                let value = match m {
                    Method::TempDens => Ok(s),
                    Method::Offline(b) => score_baseline(*b, &obs.logits, &obs.features, &ctx),
                    Method::Online(b) => score_baseline(*b, &obs.aggregated_logits, &obs.aggregated_features, &ctx),
                };
                match value {
                    Ok(v) => {
                        let side = if is_ood { &mut out.ood } else { &mut out.id };
                        side.entry(*m).or_default().push(v);
                    }
                    Err(e) => {
                        log::warn!("{}: {m} unavailable: {e}", data.subject);
                        unavailable.insert(*m, e.to_string());
                        out.id.remove(m);
                        out.ood.remove(m);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn aurocs(scored: &Scored) -> BTreeMap<String, f64> {
    scored
        .id
        .iter()
        .filter_map(|(m, id)| {
            let ood = scored.ood.get(m)?;
            auroc(id, ood).ok().map(|a| (m.name(), a))
        })
        .collect()
}

fn coverage_counts(gate: &[(TrueState, bool, f64)], bins: usize, include_ood: bool) -> Vec<(usize, usize)> {
    let mut counts = vec![(0usize, 0usize); bins];
    for (state, gated, cov) in gate {
        let keep = match state {
            TrueState::Id { .. } => true,
            TrueState::Ood { .. } => include_ood,
            _ => false,
        };
        if keep && *cov > 0.0 {
            let b = coverage_bin(*cov, bins);
            counts[b].0 += 1;
            counts[b].1 += usize::from(*gated);
        }
    }
    counts
}

pub fn evaluate_subject(data: &SubjectData, cfg: &EvalConfig) -> Result<SubjectEval> {
    if cfg.coverage_bins == 0 {
        return Err(Error::InvalidParameter("coverage bins must be at least 1".into()));
    }
    let pack = calibrate(
        &data.train_runs,
        data.head.as_ref(),
        &cfg.scoring,
        &cfg.baselines,
        &cfg.calibration,
        cfg.lambda,
        cfg.seed,
    )?;
    let gated = score_population(data, &pack, cfg, Population::Gated)?;
    let all_task = score_population(data, &pack, cfg, Population::AllTask)?;
    let gate_states = || gated.gate.iter().map(|(s, g, _)| (s, *g));
    let report = SubjectReport {
        subject: data.subject.clone(),
        tau: pack.tau,
        auroc: aurocs(&gated),
        auroc_all_task: aurocs(&all_task),
        gate_accuracy: gate_accuracy(gate_states(), false).ok(),
        gate_accuracy_with_ood: gate_accuracy(gate_states(), true).ok(),
        id_frames: gated.components.id.len(),
        ood_frames: gated.components.ood.len(),
        counts: gated.counts,
    };
    Ok(SubjectEval {
        report,
        coverage_counts: coverage_counts(&gated.gate, cfg.coverage_bins, false),
        coverage_counts_with_ood: coverage_counts(&gated.gate, cfg.coverage_bins, true),
        components: gated.components,
        pack,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset: String,
    pub subjects: Vec<SubjectReport>,
    pub average: BTreeMap<String, f64>,
    pub average_all_task: BTreeMap<String, f64>,
    pub gate_accuracy: Option<f64>,
    pub gate_accuracy_with_ood: Option<f64>,
    pub coverage_curve: Vec<CoverageBin>,
    pub coverage_curve_with_ood: Vec<CoverageBin>,
    pub ablation: Grid,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric_sweep: Option<Grid>,
}

fn method_averages(
    subjects: &[SubjectReport],
    pick: impl Fn(&SubjectReport) -> &BTreeMap<String, f64>,
) -> BTreeMap<String, f64> {
    let mut names: Vec<&String> = subjects.iter().flat_map(|s| pick(s).keys()).collect();
    names.sort();
    names.dedup();
    names
        .into_iter()
        .filter_map(|n| {
            let cells: Vec<Option<f64>> = subjects.iter().map(|s| pick(s).get(n).copied()).collect();
            average(&cells).map(|a| (n.clone(), a))
        })
        .collect()
}

fn pooled_curve(evals: &[SubjectEval], with_ood: bool) -> Vec<CoverageBin> {
    let bins = evals.first().map_or(0, |e| e.coverage_counts.len());
    let mut count = vec![0usize; bins];
    let mut gated = vec![0usize; bins];
    for e in evals {
        let src = if with_ood {
            &e.coverage_counts_with_ood
        } else {
            &e.coverage_counts
        };
        for (b, (c, g)) in src.iter().enumerate() {
            count[b] += c;
            gated[b] += g;
        }
    }
    merge_bins(&count, &gated)
}

/// Assembles the dataset tables from finished subject evaluations.
pub fn evaluate_dataset(dataset: &str, evals: &[SubjectEval], cfg: &EvalConfig) -> Result<DatasetReport> {
    let subjects: Vec<SubjectReport> = evals.iter().map(|e| e.report.clone()).collect();
    let components: Vec<SubjectComponents> = evals.iter().map(|e| e.components.clone()).collect();
    let gate_cells: Vec<Option<f64>> = subjects.iter().map(|s| s.gate_accuracy).collect();
    let gate_cells_ood: Vec<Option<f64>> = subjects.iter().map(|s| s.gate_accuracy_with_ood).collect();
    Ok(DatasetReport {
        dataset: dataset.to_string(),
        average: method_averages(&subjects, |s| &s.auroc),
        average_all_task: method_averages(&subjects, |s| &s.auroc_all_task),
        gate_accuracy: average(&gate_cells),
        gate_accuracy_with_ood: average(&gate_cells_ood),
        coverage_curve: pooled_curve(evals, false),
        coverage_curve_with_ood: pooled_curve(evals, true),
        ablation: run_ablation(&components, &ComponentMask::TABLE, &cfg.scoring.fusion)?,
        metric_sweep: None,
        subjects,
    })
}

/// Gated-population TempDens AUROC per temporal metric, recalibrating each time.
pub fn run_metric_sweep(subjects: &[SubjectData], metric_names: &[String], cfg: &EvalConfig) -> Result<Grid> {
    if metric_names.is_empty() {
        return Err(Error::InvalidParameter("empty metric list".into()));
    }
    let metrics: Vec<Metric> = metric_names.iter().map(|n| n.parse()).collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(metrics.len());
    for metric in metrics {
        let mut sub_cfg = cfg.clone();
        sub_cfg.scoring.metric = metric;
        sub_cfg.methods = vec![Method::TempDens];
        let mut per_subject = Vec::with_capacity(subjects.len());
        for s in subjects {
            let cell = match calibrate(
                &s.train_runs,
                s.head.as_ref(),
                &sub_cfg.scoring,
                &sub_cfg.baselines,
                &sub_cfg.calibration,
                sub_cfg.lambda,
                sub_cfg.seed,
            ) {
                Ok(pack) => {
                    let scored = score_population(s, &pack, &sub_cfg, Population::Gated)?;
                    aurocs(&scored).get("tempdens").copied()
                }
                Err(e) => {
                    log::warn!("{}: metric {metric} failed to calibrate: {e}", s.subject);
                    None
                }
            };
            per_subject.push(cell);
        }
        rows.push(GridRow {
            label: metric.name().to_string(),
            average: average(&per_subject),
            per_subject,
        });
    }
    Ok(Grid {
        subjects: subjects.iter().map(|s| s.subject.clone()).collect(),
        rows,
    })
}
