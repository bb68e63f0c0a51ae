//! Multinomial logistic head trained by full-batch gradient descent.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    /// `K x d`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearHead {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros((classes, dim)),
            bias: Array1::zeros(classes),
        }
    }

    /// Small Gaussian weights, zero bias.
    pub fn random<R: Rng + ?Sized>(classes: usize, dim: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        Self {
            weights: Array2::from_shape_fn((classes, dim), |_| normal.sample(rng)),
            bias: Array1::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        self.weights
            .rows()
            .into_iter()
            .zip(self.bias.iter())
            .map(|(row, b)| row.iter().zip(features).map(|(w, f)| w * f).sum::<f64>() + b)
            .collect()
    }

    pub fn predict(&self, features: &[f64]) -> usize {
        argmax(&self.logits(features))
    }

    /// Rewrites a head trained on `(f - mean) / scale` so it accepts raw `f`.
    pub fn fold_standardization(&self, mean: &[f64], scale: &[f64]) -> LinearHead {
        let mut weights = self.weights.clone();
        let mut bias = self.bias.clone();
        for (k, mut row) in weights.rows_mut().into_iter().enumerate() {
            for j in 0..row.len() {
                row[j] /= scale[j];
                bias[k] -= row[j] * mean[j];
            }
        }
        LinearHead { weights, bias }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.1,
            l2: 1e-4,
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Gradient of the regularized mean cross-entropy.
#[derive(Debug, Clone)]
pub struct HeadGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Mean cross-entropy plus `l2/2 * ||W||^2` (bias unregularized), with its gradient.
pub fn loss_and_gradient(head: &LinearHead, features: &[Vec<f64>], labels: &[usize], l2: f64) -> (f64, HeadGradient) {
    let n = features.len() as f64;
    let mut gw = Array2::zeros(head.weights.raw_dim());
    let mut gb = Array1::zeros(head.classes());
    let mut loss = 0.0;
    for (f, &y) in features.iter().zip(labels) {
        let z = head.logits(f);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - z[y];
        for (k, zk) in z.iter().enumerate() {
            let p = (zk - lse).exp() - if k == y { 1.0 } else { 0.0 };
            gb[k] += p;
            for (g, x) in gw.row_mut(k).iter_mut().zip(f) {
                *g += p * x;
            }
        }
    }
    loss /= n;
    gw /= n;
    gb /= n;
    loss += 0.5 * l2 * head.weights.iter().map(|w| w * w).sum::<f64>();
    gw.scaled_add(l2, &head.weights);
    (loss, HeadGradient { weights: gw, bias: gb })
}

#[derive(Debug, Clone)]
pub struct TrainedHead {
    pub head: LinearHead,
    /// Loss before training followed by the loss after every epoch.
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent from `init`.
///
/// A step that would raise the loss is halved until it does not, so the
/// recorded loss sequence never increases.
pub fn train_head(features: &[Vec<f64>], labels: &[usize], init: LinearHead, cfg: &HeadConfig) -> Result<TrainedHead> {
    let k = init.classes();
    if features.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    if let Some(f) = features.iter().find(|f| f.len() != init.dim()) {
        return Err(Error::Dimension(format!(
            "feature of length {}, head expects {}",
            f.len(),
            init.dim()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::InvalidParameter(format!("label {bad} outside 0..{k}")));
    }
    for c in 0..k {
        if !labels.contains(&c) {
            return Err(Error::MissingClass { label: c, classes: k });
        }
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite() && cfg.l2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("lr = {}, l2 = {}", cfg.lr, cfg.l2)));
    }

    let mut head = init;
    let (mut loss, mut grad) = loss_and_gradient(&head, features, labels, cfg.l2);
    if !loss.is_finite() {
        return Err(Error::NonFinite("initial training loss".into()));
    }
    let mut losses = vec![loss];
    for _ in 0..cfg.epochs {
        let mut step = cfg.lr;
        let mut accepted = None;
        for _ in 0..40 {
            let mut cand = head.clone();
            cand.weights.scaled_add(-step, &grad.weights);
            cand.bias.scaled_add(-step, &grad.bias);
            let (l, g) = loss_and_gradient(&cand, features, labels, cfg.l2);
            if !l.is_finite() {
                return Err(Error::NonFinite("training loss".into()));
            }
            if l <= loss {
                accepted = Some((cand, l, g));
                break;
            }
            step *= 0.5;
        }
        if let Some((h, l, g)) = accepted {
            head = h;
            loss = l;
            grad = g;
        }
        losses.push(loss);
    }
    Ok(TrainedHead { head, losses })
}
