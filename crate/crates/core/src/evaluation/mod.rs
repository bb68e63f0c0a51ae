//! Threshold-free metrics, coverage curves, ablation and metric sweeps.

mod report;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{Components, FusionWeights};
use crate::stream::TrueState;

pub use report::{
    evaluate_dataset, evaluate_subject, run_metric_sweep, DatasetReport, DecisionCounts, EvalConfig, Method,
    Population, SubjectData, SubjectEval, SubjectReport,
};

/// Area under the ROC curve with OOD as the positive class; ties count one half.
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if id_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::InsufficientData(format!(
            "AUROC needs both sides, got {} ID and {} OOD scores",
            id_scores.len(),
            ood_scores.len()
        )));
    }
    if id_scores.iter().chain(ood_scores).any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score in AUROC input".into()));
    }
    let mut all: Vec<(f64, bool)> = id_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ood_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    // Counts pairs (id below ood) + 0.5 * (ties), group by group.
    let mut id_below = 0u64;
    let mut twice_credit = 0u128;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let (mut id_here, mut ood_here) = (0u64, 0u64);
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                ood_here += 1;
            } else {
                id_here += 1;
            }
            j += 1;
        }
        twice_credit += u128::from(ood_here) * (2 * u128::from(id_below) + u128::from(id_here));
        id_below += id_here;
        i = j;
    }
    let pairs = id_scores.len() as f64 * ood_scores.len() as f64;
    Ok(twice_credit as f64 / (2.0 * pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageBin {
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub count: usize,
    pub gated: usize,
    pub recall: f64,
}

/// Bin index of `coverage` among `n_bins` half-open bins `(lo, hi]` on `(0, 1]`.
fn coverage_bin(coverage: f64, n_bins: usize) -> usize {
    let b = (coverage * n_bins as f64 - 1e-9).ceil() as isize - 1;
    b.clamp(0, n_bins as isize - 1) as usize
}

/// Share of task-containing windows gated Task, per coverage bin. Empty bins are omitted.
pub fn coverage_recall_curve(items: &[(f64, bool)], n_bins: usize) -> Result<Vec<CoverageBin>> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be at least 1".into()));
    }
    let mut count = vec![0usize; n_bins];
    let mut gated = vec![0usize; n_bins];
    for &(c, g) in items {
        if c > 0.0 {
            let b = coverage_bin(c, n_bins);
            count[b] += 1;
            gated[b] += usize::from(g);
        }
    }
    Ok(merge_bins(&count, &gated))
}

pub(crate) fn merge_bins(count: &[usize], gated: &[usize]) -> Vec<CoverageBin> {
    let n = count.len() as f64;
    count
        .iter()
        .zip(gated)
        .enumerate()
        .filter(|(_, (c, _))| **c > 0)
        .map(|(b, (&c, &g))| CoverageBin {
            lo: b as f64 / n,
            hi: (b + 1) as f64 / n,
            center: (b as f64 + 0.5) / n,
            count: c,
            gated: g,
            recall: g as f64 / c as f64,
        })
        .collect()
}

/// Share of correct rest/task gate decisions. Excluded windows are ignored;
/// OOD windows count as task when `include_ood`, and are dropped otherwise.
pub fn gate_accuracy<'a, I>(items: I, include_ood: bool) -> Result<f64>
where
    I: IntoIterator<Item = (&'a TrueState, bool)>,
{
    let (mut n, mut right) = (0usize, 0usize);
    for (state, gated) in items {
        let truth = match state {
            TrueState::Excluded => continue,
            TrueState::Ood { .. } if !include_ood => continue,
            s => s.is_task(),
        };
        n += 1;
        right += usize::from(truth == gated);
    }
    if n == 0 {
        return Err(Error::InsufficientData("no frames to score the gate on".into()));
    }
    Ok(right as f64 / n as f64)
}

/// Which fused-score components are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentMask {
    pub ebo: bool,
    pub dens: bool,
    pub temp: bool,
}

impl ComponentMask {
    pub const fn new(ebo: bool, dens: bool, temp: bool) -> Self {
        Self { ebo, dens, temp }
    }

    /// The seven non-empty masks, single components first and full fusion last.
    pub const TABLE: [ComponentMask; 7] = [
        ComponentMask::new(true, false, false),
        ComponentMask::new(false, true, false),
        ComponentMask::new(false, false, true),
        ComponentMask::new(true, true, false),
        ComponentMask::new(true, false, true),
        ComponentMask::new(false, true, true),
        ComponentMask::new(true, true, true),
    ];

    pub fn is_empty(&self) -> bool {
        !(self.ebo || self.dens || self.temp)
    }

    pub fn label(&self) -> String {
        [(self.ebo, "ebo"), (self.dens, "dens"), (self.temp, "temp")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn apply(&self, w: &FusionWeights) -> FusionWeights {
        let keep = |on: bool, v: f64| if on { v } else { 0.0 };
        w.with_mask(
            keep(self.ebo, w.alpha),
            keep(self.dens, w.beta),
            keep(self.temp, w.gamma),
        )
    }
}

/// Standardized components of one subject's evaluation population.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubjectComponents {
    pub subject: String,
    pub id: Vec<Components>,
    pub ood: Vec<Components>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub label: String,
    /// One cell per subject; absent when the subject has no OOD or no ID frames.
    pub per_subject: Vec<Option<f64>>,
    pub average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub subjects: Vec<String>,
    pub rows: Vec<GridRow>,
}

/// Mean of the present cells.
pub fn average(cells: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = cells.iter().flatten().copied().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// AUROC of the masked fused score per mask and subject.
pub fn run_ablation(subjects: &[SubjectComponents], masks: &[ComponentMask], weights: &FusionWeights) -> Result<Grid> {
    if masks.is_empty() {
        return Err(Error::InvalidParameter("empty ablation grid".into()));
    }
    if let Some(m) = masks.iter().find(|m| m.is_empty()) {
        return Err(Error::InvalidParameter(format!(
            "ablation mask {m:?} switches every component off"
        )));
    }
    let mut seen = BTreeSet::new();
    let unique: Vec<ComponentMask> = masks.iter().copied().filter(|m| seen.insert(*m)).collect();
    if unique.len() < masks.len() {
        log::warn!("dropped {} duplicate ablation masks", masks.len() - unique.len());
    }
    let rows = unique
        .iter()
        .map(|mask| {
            let w = mask.apply(weights);
            let per_subject: Vec<Option<f64>> = subjects
                .iter()
                .map(|s| {
                    let id: Vec<f64> = s.id.iter().map(|c| c.fuse(&w)).collect();
                    let ood: Vec<f64> = s.ood.iter().map(|c| c.fuse(&w)).collect();
                    auroc(&id, &ood).ok()
                })
                .collect();
            GridRow {
                label: mask.label(),
                average: average(&per_subject),
                per_subject,
            }
        })
        .collect();
    Ok(Grid {
        subjects: subjects.iter().map(|s| s.subject.clone()).collect(),
        rows,
    })
}
