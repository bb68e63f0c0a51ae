//! Out-of-distribution scores. Every score here is oriented so that a
//! larger value means "more out-of-distribution".

pub mod aggregate;
pub mod baselines;
pub mod metric;
pub mod openmax;
pub mod temporal;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aggregate::{online_aggregate, AggregationBuffer};
pub use baselines::{score_baseline, Baseline, BaselineAux, BaselineConfig, BaselineContext};
pub use metric::{metric_distance, Metric, DEFAULT_EPSILON};
pub use temporal::{score_temporal, FeatureHistory, TemporalScore, TemporalTracker};

/// Weights and shape parameters of the fused score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Energy temperature.
    pub temperature: f64,
    /// Mahalanobis share of the density term.
    pub eta: f64,
}

impl Default for FusionWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            temperature: 1.0,
            eta: 0.5,
        }
    }
}

impl FusionWeights {
    pub fn validate(&self) -> Result<()> {
        let w_ok = [self.alpha, self.beta, self.gamma]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0);
        if !w_ok {
            return Err(Error::InvalidParameter(format!(
                "fusion weights ({}, {}, {}) must be non-negative",
                self.alpha, self.beta, self.gamma
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("eta {} outside [0, 1]", self.eta)));
        }
        Ok(())
    }

    pub fn with_mask(self, alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            ..self
        }
    }
}

/// Everything that shapes the fused score besides calibration data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TempDensConfig {
    pub fusion: FusionWeights,
    /// Neighbours for the kNN density term.
    pub k: usize,
    pub metric: Metric,
    pub epsilon: f64,
}

impl Default for TempDensConfig {
    fn default() -> Self {
        Self {
            fusion: FusionWeights::default(),
            k: 10,
            metric: Metric::SecondOrder,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl TempDensConfig {
    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// `-T log sum_k exp(z_k / T)`, evaluated with max-subtraction.
pub fn score_energy(logits: &[f64], temperature: f64) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::Dimension(format!(
            "energy needs at least 2 logits, got {}",
            logits.len()
        )));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite(format!("logits {logits:?}")));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature {temperature}")));
    }
    Ok(-temperature * log_sum_exp(logits.iter().map(|z| z / temperature)))
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Row-major `n x d` store of in-distribution training features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMemory {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMemory {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut m = Self::new(dim);
        for r in rows {
            m.push(r)?;
        }
        Ok(m)
    }

    pub(crate) fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!("{} values do not form rows of {dim}", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Dimension(format!(
                "memory row of length {}, expected {}",
                row.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub(crate) fn flat(&self) -> &[f64] {
        &self.data
    }
}

/// Nearest class-conditional Mahalanobis distance, `min_c (f - mu_c)' S (f - mu_c)`.
pub fn score_mahalanobis(f: &[f64], class_means: &[Vec<f64>], inv_cov: &DMatrix<f64>) -> Result<f64> {
    if class_means.is_empty() {
        return Err(Error::InsufficientData("no class means".into()));
    }
    let d = f.len();
    if inv_cov.nrows() != d || inv_cov.ncols() != d {
        return Err(Error::Dimension(format!(
            "feature of length {d} against {}x{} inverse covariance",
            inv_cov.nrows(),
            inv_cov.ncols()
        )));
    }
    let mut best = f64::INFINITY;
    let mut diff = vec![0.0; d];
    for mu in class_means {
        if mu.len() != d {
            return Err(Error::Dimension(format!(
                "class mean of length {}, expected {d}",
                mu.len()
            )));
        }
        for ((x, a), b) in diff.iter_mut().zip(f).zip(mu) {
            *x = a - b;
        }
        let mut q = 0.0;
        for j in 0..d {
            let col = inv_cov.column(j);
            let s: f64 = col.iter().zip(&diff).map(|(a, x)| a * x).sum();
            q += diff[j] * s;
        }
        best = best.min(q);
    }
    Ok(best.max(0.0))
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean Euclidean distance to the `k` nearest memory rows.
pub fn score_knn(f: &[f64], memory: &FeatureMemory, k: usize) -> Result<f64> {
    knn_inner(f, memory, k, None)
}

/// Same as [`score_knn`] but ignores memory row `skip` (leave-one-out).
pub fn score_knn_excluding(f: &[f64], memory: &FeatureMemory, k: usize, skip: usize) -> Result<f64> {
    knn_inner(f, memory, k, Some(skip))
}

fn knn_inner(f: &[f64], memory: &FeatureMemory, k: usize, skip: Option<usize>) -> Result<f64> {
    let available = memory.len() - usize::from(skip.is_some_and(|s| s < memory.len()));
    if k == 0 || k > available {
        return Err(Error::InvalidParameter(format!("k = {k} with {available} memory rows")));
    }
    if f.len() != memory.dim() {
        return Err(Error::Dimension(format!(
            "feature of length {}, memory holds {}",
            f.len(),
            memory.dim()
        )));
    }
    let mut dist: Vec<f64> = memory
        .rows()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(_, row)| euclidean(f, row))
        .collect();
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, f64::total_cmp);
    }
    let nearest = &mut dist[..k];
    nearest.sort_unstable_by(f64::total_cmp);
    Ok(nearest.iter().sum::<f64>() / k as f64)
}

/// Class statistics and feature memory behind the density term.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    pub class_means: Vec<Vec<f64>>,
    pub inv_cov: DMatrix<f64>,
    pub memory: FeatureMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityScore {
    pub mahalanobis: f64,
    pub knn: f64,
    pub value: f64,
}

/// `eta * S_mahal + (1 - eta) * S_knn`.
pub fn score_density(f: &[f64], model: &DensityModel, k: usize, eta: f64) -> Result<DensityScore> {
    score_density_inner(f, model, k, eta, None)
}

pub(crate) fn score_density_inner(
    f: &[f64],
    model: &DensityModel,
    k: usize,
    eta: f64,
    skip: Option<usize>,
) -> Result<DensityScore> {
    let mahalanobis = score_mahalanobis(f, &model.class_means, &model.inv_cov)?;
    let knn = knn_inner(f, &model.memory, k, skip)?;
    Ok(DensityScore {
        mahalanobis,
        knn,
        value: combine_density(mahalanobis, knn, eta),
    })
}

pub fn combine_density(mahalanobis: f64, knn: f64, eta: f64) -> f64 {
    if eta == 1.0 {
        mahalanobis
    } else if eta == 0.0 {
        knn
    } else {
        eta * mahalanobis + (1.0 - eta) * knn
    }
}

/// Raw (unstandardized) fused-score components of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawComponents {
    pub ebo: f64,
    pub mahalanobis: f64,
    pub knn: f64,
    pub dens: f64,
    pub temp: f64,
    pub temp_mature: bool,
}

/// Standardized components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub ebo: f64,
    pub dens: f64,
    pub temp: f64,
}

impl Components {
    pub fn fuse(&self, w: &FusionWeights) -> f64 {
        w.alpha * self.ebo + w.beta * self.dens + w.gamma * self.temp
    }
}

/// Population mean and standard deviation of one component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub std: f64,
}

impl Moments {
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub ebo: Moments,
    pub dens: Moments,
    pub temp: Moments,
}

impl ScoreStats {
    pub fn standardize(&self, raw: &RawComponents) -> Components {
        Components {
            ebo: self.ebo.standardize(raw.ebo),
            dens: self.dens.standardize(raw.dens),
            temp: self.temp.standardize(raw.temp),
        }
    }
}

/// Energy and density terms of a frame; the temporal term is filled by the caller.
pub fn static_components(
    logits: &[f64],
    features: &[f64],
    density: &DensityModel,
    cfg: &TempDensConfig,
) -> Result<RawComponents> {
    let ebo = score_energy(logits, cfg.fusion.temperature)?;
    let dens = score_density(features, density, cfg.k, cfg.fusion.eta)?;
    Ok(RawComponents {
        ebo,
        mahalanobis: dens.mahalanobis,
        knn: dens.knn,
        dens: dens.value,
        temp: 0.0,
        temp_mature: false,
    })
}
