//! Post-hoc baseline detectors, all oriented so that higher means more OOD.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::openmax::OpenMaxModel;
use super::{log_sum_exp, score_energy, score_knn, score_mahalanobis, DensityModel};
use crate::backbone::{softmax, LinearHead};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Msp,
    #[serde(rename = "maxlogit")]
    MaxLogit,
    OdinT,
    Ebo,
    React,
    Dice,
    Vim,
    #[serde(rename = "openmax")]
    OpenMax,
    #[serde(rename = "gradnorm")]
    GradNorm,
    Mahalanobis,
    Knn,
}

impl Baseline {
    pub const ALL: [Baseline; 11] = [
        Baseline::Msp,
        Baseline::MaxLogit,
        Baseline::OdinT,
        Baseline::Ebo,
        Baseline::React,
        Baseline::Dice,
        Baseline::Vim,
        Baseline::OpenMax,
        Baseline::GradNorm,
        Baseline::Mahalanobis,
        Baseline::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Msp => "msp",
            Baseline::MaxLogit => "maxlogit",
            Baseline::OdinT => "odin-t",
            Baseline::Ebo => "ebo",
            Baseline::React => "react",
            Baseline::Dice => "dice",
            Baseline::Vim => "vim",
            Baseline::OpenMax => "openmax",
            Baseline::GradNorm => "gradnorm",
            Baseline::Mahalanobis => "mahalanobis",
            Baseline::Knn => "knn",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        Baseline::ALL
            .into_iter()
            .find(|b| b.name() == key || (key == "odin" && *b == Baseline::OdinT))
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub temperature: f64,
    pub odin_temperature: f64,
    pub react_percentile: f64,
    pub dice_percentile: f64,
    /// Principal subspace dimension; `None` means `ceil(d / 2)`.
    pub vim_dim: Option<usize>,
    pub openmax_tail: usize,
    pub k: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            odin_temperature: 1000.0,
            react_percentile: 90.0,
            dice_percentile: 90.0,
            vim_dim: None,
            openmax_tail: 20,
            k: 10,
        }
    }
}

/// Serializable copy of a linear head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSnapshot {
    pub classes: usize,
    pub dim: usize,
    /// Row-major `K x d`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&LinearHead> for HeadSnapshot {
    fn from(h: &LinearHead) -> Self {
        Self {
            classes: h.classes(),
            dim: h.dim(),
            weights: h.weights.iter().copied().collect(),
            bias: h.bias.to_vec(),
        }
    }
}

impl HeadSnapshot {
    pub fn to_head(&self) -> Result<LinearHead> {
        let weights = Array2::from_shape_vec((self.classes, self.dim), self.weights.clone())
            .map_err(|e| Error::Shape(format!("head snapshot: {e}")))?;
        if self.bias.len() != self.classes {
            return Err(Error::Shape(format!(
                "{} biases for {} classes",
                self.bias.len(),
                self.classes
            )));
        }
        Ok(LinearHead {
            weights,
            bias: Array1::from(self.bias.clone()),
        })
    }
}

/// Residual-subspace statistics for VIM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VimModel {
    pub origin: Vec<f64>,
    /// Row-major `d x r` basis of the residual subspace.
    pub residual_basis: Vec<f64>,
    pub residual_dim: usize,
    pub alpha: f64,
}

impl VimModel {
    pub fn residual_norm(&self, f: &[f64]) -> f64 {
        let r = self.residual_dim;
        let mut total = 0.0;
        for j in 0..r {
            let p: f64 = f
                .iter()
                .zip(&self.origin)
                .enumerate()
                .map(|(i, (x, o))| (x - o) * self.residual_basis[i * r + j])
                .sum();
            total += p * p;
        }
        total.sqrt()
    }

    pub fn fit(head: &LinearHead, features: &[Vec<f64>], subspace_dim: usize) -> Result<Self> {
        let d = head.dim();
        if subspace_dim == 0 || subspace_dim >= d {
            return Err(Error::InvalidParameter(format!(
                "VIM subspace dimension {subspace_dim} must lie in 1..{d}"
            )));
        }
        if features.len() < 2 {
            return Err(Error::InsufficientData("VIM needs at least two training frames".into()));
        }
        let w = DMatrix::from_fn(head.classes(), d, |r, c| head.weights[(r, c)]);
        let b = DVector::from_iterator(head.classes(), head.bias.iter().copied());
        let pinv = w
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::Singular(format!("head pseudo-inverse: {e}")))?;
        let origin: Vec<f64> = (-(pinv * b)).iter().copied().collect();
        let mut scatter = DMatrix::<f64>::zeros(d, d);
        for f in features {
            let x = DVector::from_iterator(d, f.iter().zip(&origin).map(|(a, o)| a - o));
            scatter += &x * x.transpose();
        }
        scatter /= features.len() as f64;
        let eig = SymmetricEigen::new(scatter);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let r = d - subspace_dim;
        let mut basis = vec![0.0; d * r];
        for (col, &idx) in order[subspace_dim..].iter().enumerate() {
            for i in 0..d {
                basis[i * r + col] = eig.eigenvectors[(i, idx)];
            }
        }
        let mut model = Self {
            origin,
            residual_basis: basis,
            residual_dim: r,
            alpha: 1.0,
        };
        let n = features.len() as f64;
        let mean_residual = features.iter().map(|f| model.residual_norm(f)).sum::<f64>() / n;
        let mean_max_logit = features
            .iter()
            .map(|f| head.logits(f).into_iter().fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / n;
        if !(mean_residual > 0.0) {
            return Err(Error::ZeroScoreVariance("vim residual".into()));
        }
        model.alpha = mean_max_logit.abs() / mean_residual;
        Ok(model)
    }
}

/// Baseline statistics frozen at calibration time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineAux {
    pub head: HeadSnapshot,
    pub react_clamp: f64,
    pub dice_head: HeadSnapshot,
    pub vim: Option<VimModel>,
    pub openmax: Option<OpenMaxModel>,
}

/// Nearest-rank percentile (`p` in percent) of `values`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientData("percentile of an empty set".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("percentile {p} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64 - 1e-9).ceil().max(1.0) as usize;
    Ok(v[rank.min(v.len()) - 1])
}

/// Keeps head weights whose contribution `w_kj * mean(f_j)` reaches the percentile.
pub fn dice_mask(head: &LinearHead, mean_features: &[f64], p: f64) -> Result<LinearHead> {
    let contrib: Vec<f64> = head
        .weights
        .rows()
        .into_iter()
        .flat_map(|row| row.iter().zip(mean_features).map(|(w, m)| w * m).collect::<Vec<_>>())
        .collect();
    let cut = percentile(&contrib, p)?;
    let mut masked = head.clone();
    for ((k, j), w) in masked.weights.indexed_iter_mut() {
        if head.weights[(k, j)] * mean_features[j] < cut {
            *w = 0.0;
        }
    }
    Ok(masked)
}

/// Least-squares recovery of a linear head from `(features, logits)` pairs,
/// for replayed frames whose producing head is not available.
pub fn recover_head(features: &[Vec<f64>], logits: &[Vec<f64>]) -> Result<LinearHead> {
    let n = features.len();
    let d = features.first().map_or(0, Vec::len);
    let k = logits.first().map_or(0, Vec::len);
    if n < d + 1 || k < 2 {
        return Err(Error::InsufficientData(format!(
            "{n} frames cannot determine a {k}x{d} head"
        )));
    }
    let x = DMatrix::from_fn(n, d + 1, |r, c| if c == d { 1.0 } else { features[r][c] });
    let y = DMatrix::from_fn(n, k, |r, c| logits[r][c]);
    let sol = x
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::Singular(format!("head recovery: {e}")))?;
    Ok(LinearHead {
        weights: Array2::from_shape_fn((k, d), |(r, c)| sol[(c, r)]),
        bias: Array1::from_shape_fn(k, |r| sol[(d, r)]),
    })
}

impl BaselineAux {
    pub fn fit(
        head: &LinearHead,
        features: &[Vec<f64>],
        logits: &[Vec<f64>],
        labels: &[usize],
        cfg: &BaselineConfig,
    ) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InsufficientData(
                "baseline statistics need training frames".into(),
            ));
        }
        let d = head.dim();
        let all: Vec<f64> = features.iter().flatten().copied().collect();
        let react_clamp = percentile(&all, cfg.react_percentile)?;
        let mean: Vec<f64> = (0..d)
            .map(|j| features.iter().map(|f| f[j]).sum::<f64>() / features.len() as f64)
            .collect();
        let dice_head = dice_mask(head, &mean, cfg.dice_percentile)?;
        let vim_dim = cfg.vim_dim.unwrap_or(d.div_ceil(2));
        let vim = match VimModel::fit(head, features, vim_dim) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("VIM unavailable: {e}");
                None
            }
        };
        let openmax = match OpenMaxModel::fit(logits, labels, head.classes(), cfg.openmax_tail) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("OpenMax unavailable: {e}");
                None
            }
        };
        Ok(Self {
            head: HeadSnapshot::from(head),
            react_clamp,
            dice_head: HeadSnapshot::from(&dice_head),
            vim,
            openmax,
        })
    }
}

/// Calibration data available to the baselines.
#[derive(Debug, Clone, Copy)]
pub struct BaselineContext<'a> {
    pub density: Option<&'a DensityModel>,
    pub aux: Option<&'a BaselineAux>,
    pub cfg: &'a BaselineConfig,
}

fn max_softmax(logits: &[f64], t: f64) -> f64 {
    let scaled: Vec<f64> = logits.iter().map(|z| z / t).collect();
    softmax(&scaled).into_iter().fold(0.0, f64::max)
}

fn missing(what: &str) -> Error {
    Error::InsufficientData(format!("calibration lacks {what}"))
}

/// ReAct: clamp features at `c`, re-apply the head, take the energy.
pub fn react_score(head: &LinearHead, features: &[f64], clamp: f64, temperature: f64) -> Result<f64> {
    let clipped: Vec<f64> = features.iter().map(|f| f.min(clamp)).collect();
    score_energy(&head.logits(&clipped), temperature)
}

/// `-(sum_k |p_k - 1/K|) * (sum_j |f_j|)`: the negated L1 norm of the
/// gradient of `KL(uniform || softmax)` with respect to the head weights.
pub fn gradnorm_score(logits: &[f64], features: &[f64], temperature: f64) -> f64 {
    let k = logits.len() as f64;
    let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
    let p = softmax(&scaled);
    let gp: f64 = p.iter().map(|pk| (pk - 1.0 / k).abs()).sum();
    let gf: f64 = features.iter().map(|f| f.abs()).sum();
    -(gp * gf) / temperature
}

pub fn score_baseline(baseline: Baseline, logits: &[f64], features: &[f64], ctx: &BaselineContext) -> Result<f64> {
    if logits.len() < 2 || logits.iter().chain(features).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("baseline input logits {logits:?}")));
    }
    let cfg = ctx.cfg;
    let aux = || ctx.aux.ok_or_else(|| missing("baseline statistics"));
    let density = || ctx.density.ok_or_else(|| missing("density model"));
    match baseline {
        Baseline::Msp => Ok(1.0 - max_softmax(logits, 1.0)),
        Baseline::MaxLogit => Ok(-logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max)),
        Baseline::OdinT => Ok(1.0 - max_softmax(logits, cfg.odin_temperature)),
        Baseline::Ebo => score_energy(logits, cfg.temperature),
        Baseline::React => {
            let a = aux()?;
            react_score(&a.head.to_head()?, features, a.react_clamp, cfg.temperature)
        }
        Baseline::Dice => {
            let a = aux()?;
            score_energy(&a.dice_head.to_head()?.logits(features), cfg.temperature)
        }
        Baseline::Vim => {
            let v = aux()?.vim.as_ref().ok_or_else(|| missing("VIM subspace"))?;
            if features.len() != v.origin.len() {
                return Err(Error::Dimension(format!(
                    "VIM fit on d={}, got {}",
                    v.origin.len(),
                    features.len()
                )));
            }
            Ok(v.alpha * v.residual_norm(features) - log_sum_exp(logits.iter().copied()))
        }
        Baseline::OpenMax => aux()?
            .openmax
            .as_ref()
            .ok_or_else(|| missing("OpenMax tails"))?
            .unknown_probability(logits),
        Baseline::GradNorm => Ok(gradnorm_score(logits, features, cfg.temperature)),
        Baseline::Mahalanobis => {
            let m = density()?;
            score_mahalanobis(features, &m.class_means, &m.inv_cov)
        }
        Baseline::Knn => score_knn(features, &density()?.memory, cfg.k),
    }
}
