//! Calibration pack: class statistics, ID feature memory, score moments and
//! the rejection threshold, all fit on training in-distribution frames.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{FeatureFrame, LinearHead};
use crate::codec::{pack_f32, unpack_f32};
use crate::error::{Error, Result};
use crate::linalg::{shrink, spd_inverse};
use crate::provenance::unwrap_artifact;
use crate::scoring::baselines::recover_head;
use crate::scoring::{
    score_density, score_energy, BaselineAux, BaselineConfig, DensityModel, FeatureMemory, Moments, RawComponents,
    ScoreStats, TempDensConfig, TemporalTracker,
};
use crate::stream::TrueState;

pub const CALIBRATION_FORMAT: &str = "tempdens-calibration/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    /// Quantile of validation fused scores used as the rejection threshold.
    pub quantile: f64,
    /// Trailing share of the chronological ID stream held out for the threshold.
    pub validation_fraction: f64,
    pub shrinkage: f64,
    pub memory_cap: usize,
    pub history: usize,
    pub reset_gap_s: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            quantile: 0.95,
            validation_fraction: 0.2,
            shrinkage: 1e-3,
            memory_cap: 50_000,
            history: 3,
            reset_gap_s: 1.0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile {} outside (0, 1)",
                self.quantile
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "validation fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        if !(self.shrinkage >= 0.0) || self.memory_cap == 0 || !(self.reset_gap_s >= 0.0) {
            return Err(Error::InvalidParameter(
                "shrinkage, memory cap and reset gap must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub class_means: Vec<Vec<f64>>,
    pub inv_cov: DMatrix<f64>,
}

/// Per-class means and the inverse of the pooled class-centred covariance.
pub fn fit_class_stats(features: &[Vec<f64>], labels: &[usize], classes: usize, shrinkage: f64) -> Result<ClassStats> {
    if features.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} features for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let d = features.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::InsufficientData("no features".into()));
    }
    let mut sums = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (f, &y) in features.iter().zip(labels) {
        if y >= classes {
            return Err(Error::InvalidParameter(format!("label {y} outside 0..{classes}")));
        }
        if f.len() != d {
            return Err(Error::Dimension(format!("feature of length {}, expected {d}", f.len())));
        }
        counts[y] += 1;
        sums[y].iter_mut().zip(f).for_each(|(s, x)| *s += x);
    }
    if let Some(c) = counts.iter().position(|&n| n < 2) {
        return Err(Error::InsufficientData(format!(
            "class {c} has {} samples, need 2",
            counts[c]
        )));
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &n)| s.into_iter().map(|v| v / n as f64).collect())
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (f, &y) in features.iter().zip(labels) {
        let diff: Vec<f64> = f.iter().zip(&means[y]).map(|(a, b)| a - b).collect();
        for i in 0..d {
            for j in 0..=i {
                cov[(i, j)] += diff[i] * diff[j];
            }
        }
    }
    let n = features.len() as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = cov[(i, j)] / n;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let inv_cov = spd_inverse(&shrink(&cov, shrinkage))?;
    Ok(ClassStats {
        class_means: means,
        inv_cov,
    })
}

/// Population mean and standard deviation; a vanishing spread is an error naming `component`.
pub fn fit_moments(values: &[f64], component: &str) -> Result<Moments> {
    if values.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{component}: {} values, need 2",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if !std.is_finite() || std <= 1e-12 * mean.abs() || std == 0.0 {
        return Err(Error::ZeroScoreVariance(component.to_string()));
    }
    Ok(Moments { mean, std })
}

/// Moments of each fused-score component. Immature temporal scores are skipped.
pub fn fit_score_stats(raw: &[RawComponents]) -> Result<ScoreStats> {
    let ebo: Vec<f64> = raw.iter().map(|r| r.ebo).collect();
    let dens: Vec<f64> = raw.iter().map(|r| r.dens).collect();
    let temp: Vec<f64> = raw.iter().filter(|r| r.temp_mature).map(|r| r.temp).collect();
    Ok(ScoreStats {
        ebo: fit_moments(&ebo, "ebo")?,
        dens: fit_moments(&dens, "dens")?,
        temp: fit_moments(&temp, "temp")?,
    })
}

/// Nearest-rank quantile: the `ceil(q * n)`-th smallest score.
pub fn calibrate_tau(scores: &[f64], quantile: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::InsufficientData("no validation scores".into()));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile {quantile} outside (0, 1)")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("validation score is NaN".into()));
    }
    let mut v = scores.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let rank = ((quantile * v.len() as f64) - 1e-9).ceil().clamp(1.0, v.len() as f64) as usize;
    Ok(v[rank - 1])
}

/// Frozen calibration state shared by every engine of a subject.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPack {
    pub density: DensityModel,
    pub stats: ScoreStats,
    pub tau: f64,
    pub lambda: f64,
    pub scoring: TempDensConfig,
    pub calibration: CalibrationConfig,
    pub aux: Option<BaselineAux>,
    pub fit_frames: usize,
    pub validation_frames: usize,
}

fn round_f32(v: f64) -> f64 {
    f64::from(v as f32)
}

/// Indices kept by uniform reservoir sampling of `n` items into `cap` slots.
fn reservoir(n: usize, cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..n.min(cap)).collect();
    for i in cap..n {
        let j = rng.random_range(0..=i);
        if j < cap {
            kept[j] = i;
        }
    }
    kept.sort_unstable();
    kept
}

/// One chronological run of ID frames; the temporal history restarts at each run.
pub type IdRun = Vec<FeatureFrame>;

/// Fits a calibration pack from chronologically ordered training runs.
///
/// Only frames labeled in-distribution are used. The leading share fits the
/// class statistics, memory, score moments and baseline statistics; the
/// trailing `validation_fraction` sets the rejection threshold.
#[allow(clippy::too_many_arguments)]
pub fn calibrate(
    runs: &[IdRun],
    head: Option<&LinearHead>,
    scoring: &TempDensConfig,
    baselines: &BaselineConfig,
    cfg: &CalibrationConfig,
    lambda: f64,
    seed: u64,
) -> Result<CalibrationPack> {
    scoring.validate()?;
    cfg.validate()?;
    let mut frames: Vec<(usize, &FeatureFrame, usize)> = Vec::new();
    for (r, run) in runs.iter().enumerate() {
        for f in run {
            if let TrueState::Id { class } = f.true_state {
                frames.push((r, f, class));
            }
        }
    }
    let n = frames.len();
    let n_val = ((n as f64) * cfg.validation_fraction).ceil() as usize;
    if n < 4 || n_val == 0 || n_val >= n {
        return Err(Error::InsufficientData(format!(
            "{n} ID frames cannot be split for calibration"
        )));
    }
    let n_fit = n - n_val;
    let classes = frames[0].1.logits.len();

    let fit_features: Vec<Vec<f64>> = frames[..n_fit].iter().map(|(_, f, _)| f.features.clone()).collect();
    let fit_logits: Vec<Vec<f64>> = frames[..n_fit].iter().map(|(_, f, _)| f.logits.clone()).collect();
    let fit_labels: Vec<usize> = frames[..n_fit].iter().map(|(_, _, c)| *c).collect();
    let stats = fit_class_stats(&fit_features, &fit_labels, classes, cfg.shrinkage)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept = reservoir(n_fit, cfg.memory_cap, &mut rng);
    let mut memory_row = vec![None; n_fit];
    let mut memory = FeatureMemory::new(fit_features[0].len());
    for (row, &i) in kept.iter().enumerate() {
        memory_row[i] = Some(row);
        let q: Vec<f64> = fit_features[i].iter().copied().map(round_f32).collect();
        memory.push(&q)?;
    }
    let density = DensityModel {
        class_means: stats
            .class_means
            .iter()
            .map(|m| m.iter().copied().map(round_f32).collect())
            .collect(),
        inv_cov: stats.inv_cov.map(round_f32),
        memory,
    };
    if scoring.k >= density.memory.len() {
        return Err(Error::InsufficientData(format!(
            "k = {} needs more than {} memory rows",
            scoring.k,
            density.memory.len()
        )));
    }

    let mut raw = Vec::with_capacity(n);
    let mut tracker = TemporalTracker::new(cfg.history, scoring.metric, scoring.epsilon, cfg.reset_gap_s)?;
    let mut current_run = usize::MAX;
    for (i, (run, f, _)) in frames.iter().enumerate() {
        if *run != current_run {
            tracker.reset();
            current_run = *run;
        }
        let temp = tracker.observe(f.start_s, &f.features)?;
        let ebo = score_energy(&f.logits, scoring.fusion.temperature)?;
        let skip = if i < n_fit { memory_row[i] } else { None };
        let dens = match skip {
            Some(row) => {
                crate::scoring::score_density_inner(&f.features, &density, scoring.k, scoring.fusion.eta, Some(row))?
            }
            None => score_density(&f.features, &density, scoring.k, scoring.fusion.eta)?,
        };
        raw.push(RawComponents {
            ebo,
            mahalanobis: dens.mahalanobis,
            knn: dens.knn,
            dens: dens.value,
            temp: temp.value,
            temp_mature: temp.mature,
        });
    }
    let score_stats = fit_score_stats(&raw[..n_fit])?;
    let fused: Vec<f64> = raw[n_fit..]
        .iter()
        .map(|r| score_stats.standardize(r).fuse(&scoring.fusion))
        .collect();
    let tau = calibrate_tau(&fused, cfg.quantile)?;

    let recovered;
    let head = match head {
        Some(h) => Some(h),
        None => match recover_head(&fit_features, &fit_logits) {
            Ok(h) => {
                recovered = h;
                Some(&recovered)
            }
            Err(e) => {
                log::warn!("no linear head for feature-space baselines: {e}");
                None
            }
        },
    };
    let aux = match head {
        Some(h) => Some(BaselineAux::fit(h, &fit_features, &fit_logits, &fit_labels, baselines)?),
        None => None,
    };
    log::debug!("calibrated on {n_fit} + {n_val} ID frames, tau = {tau:.4}");
    Ok(CalibrationPack {
        density,
        stats: score_stats,
        tau,
        lambda,
        scoring: *scoring,
        calibration: *cfg,
        aux,
        fit_frames: n_fit,
        validation_frames: n_val,
    })
}

#[derive(Serialize, Deserialize)]
struct PackFile {
    format: String,
    classes: usize,
    dim: usize,
    memory_rows: usize,
    class_means: String,
    inv_cov: String,
    memory: String,
    score_stats: ScoreStats,
    tau: f64,
    lambda: f64,
    scoring: TempDensConfig,
    calibration: CalibrationConfig,
    aux: Option<BaselineAux>,
    fit_frames: usize,
    validation_frames: usize,
}

impl CalibrationPack {
    pub fn to_json(&self) -> Result<String> {
        let d = self.density.memory.dim();
        let file = PackFile {
            format: CALIBRATION_FORMAT.to_string(),
            classes: self.density.class_means.len(),
            dim: d,
            memory_rows: self.density.memory.len(),
            class_means: pack_f32(self.density.class_means.iter().flatten().copied()),
            inv_cov: pack_f32(self.density.inv_cov.iter().copied()),
            memory: pack_f32(self.density.memory.flat().iter().copied()),
            score_stats: self.stats,
            tau: self.tau,
            lambda: self.lambda,
            scoring: self.scoring,
            calibration: self.calibration,
            aux: self.aux.clone(),
            fit_frames: self.fit_frames,
            validation_frames: self.validation_frames,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Accepts a bare pack or one inside a provenance envelope.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: PackFile = serde_json::from_value(unwrap_artifact(text)?)?;
        if file.format != CALIBRATION_FORMAT {
            return Err(Error::Serde(format!(
                "unsupported calibration format `{}`",
                file.format
            )));
        }
        let d = file.dim;
        let means = unpack_f32(&file.class_means, file.classes * d)?;
        let inv = unpack_f32(&file.inv_cov, d * d)?;
        let memory = unpack_f32(&file.memory, file.memory_rows * d)?;
        Ok(Self {
            density: DensityModel {
                class_means: means.chunks(d.max(1)).map(<[f64]>::to_vec).collect(),
                inv_cov: DMatrix::from_column_slice(d, d, &inv),
                memory: FeatureMemory::from_flat(d, memory)?,
            },
            stats: file.score_stats,
            tau: file.tau,
            lambda: file.lambda,
            scoring: file.scoring,
            calibration: file.calibration,
            aux: file.aux,
            fit_frames: file.fit_frames,
            validation_frames: file.validation_frames,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
