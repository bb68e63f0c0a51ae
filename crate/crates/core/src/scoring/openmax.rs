//! OpenMax: Weibull tail models on distances to class mean activations.

use serde::{Deserialize, Serialize};

use crate::backbone::softmax;
use crate::error::{Error, Result};

/// Two-parameter Weibull distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weibull {
    pub shape: f64,
    pub scale: f64,
}

impl Weibull {
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            1.0 - (-(x / self.scale).powf(self.shape)).exp()
        }
    }

    /// Maximum-likelihood fit. The shape solves
    /// `sum x^k ln x / sum x^k - 1/k - mean(ln x) = 0`, which is increasing in `k`.
    pub fn fit(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 || samples.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InsufficientData(format!(
                "Weibull fit needs at least two positive samples, got {samples:?}"
            )));
        }
        let top = samples.iter().cloned().fold(0.0, f64::max);
        let xs: Vec<f64> = samples.iter().map(|x| x / top).collect();
        let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let mean_log = logs.iter().sum::<f64>() / xs.len() as f64;
        if logs.iter().all(|l| (l - mean_log).abs() < 1e-12) {
            return Err(Error::InsufficientData("Weibull fit on identical samples".into()));
        }
        let g = |k: f64| {
            let (mut num, mut den) = (0.0, 0.0);
            for (x, l) in xs.iter().zip(&logs) {
                let p = x.powf(k);
                num += p * l;
                den += p;
            }
            num / den - 1.0 / k - mean_log
        };
        let (mut lo, mut hi) = (1e-3, 1.0);
        while g(hi) < 0.0 {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::NonFinite("Weibull shape diverged".into()));
            }
        }
        while g(lo) > 0.0 {
            lo /= 2.0;
            if lo < 1e-12 {
                return Err(Error::NonFinite("Weibull shape collapsed".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 * hi {
                break;
            }
        }
        let shape = 0.5 * (lo + hi);
        let mean_pow = xs.iter().map(|x| x.powf(shape)).sum::<f64>() / xs.len() as f64;
        Ok(Self {
            shape,
            scale: top * mean_pow.powf(1.0 / shape),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenMaxModel {
    /// Mean logit vector of correctly classified training frames, per class.
    pub mavs: Vec<Vec<f64>>,
    pub tails: Vec<Weibull>,
    /// Number of top-ranked classes whose logits are revised.
    pub alpha_rank: usize,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl OpenMaxModel {
    pub fn fit(logits: &[Vec<f64>], labels: &[usize], classes: usize, tail_size: usize) -> Result<Self> {
        if tail_size < 2 {
            return Err(Error::InvalidParameter(format!("OpenMax tail size {tail_size} < 2")));
        }
        let mut mavs = Vec::with_capacity(classes);
        let mut tails = Vec::with_capacity(classes);
        for c in 0..classes {
            let members: Vec<&Vec<f64>> = logits
                .iter()
                .zip(labels)
                .filter(|(z, &y)| y == c && crate::backbone::argmax(z) == c)
                .map(|(z, _)| z)
                .collect();
            if members.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "OpenMax needs two correctly classified frames of class {c}, got {}",
                    members.len()
                )));
            }
            let mut mav = vec![0.0; classes];
            for z in &members {
                mav.iter_mut().zip(z.iter()).for_each(|(m, v)| *m += v);
            }
            mav.iter_mut().for_each(|m| *m /= members.len() as f64);
            let mut dists: Vec<f64> = members.iter().map(|z| distance(z, &mav)).collect();
            dists.sort_unstable_by(|a, b| b.total_cmp(a));
            dists.truncate(tail_size);
            dists.retain(|d| *d > 0.0);
            tails.push(Weibull::fit(&dists)?);
            mavs.push(mav);
        }
        Ok(Self {
            mavs,
            tails,
            alpha_rank: classes,
        })
    }

    /// Probability of the extra "unknown" class after logit revision.
    pub fn unknown_probability(&self, logits: &[f64]) -> Result<f64> {
        let k = self.mavs.len();
        if logits.len() != k {
            return Err(Error::Dimension(format!(
                "{} logits for {k} OpenMax classes",
                logits.len()
            )));
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        let alpha = self.alpha_rank.min(k);
        let mut revised = vec![0.0; k + 1];
        revised[1..].copy_from_slice(logits);
        for (rank, &c) in order.iter().take(alpha).enumerate() {
            let w = self.tails[c].cdf(distance(logits, &self.mavs[c]));
            let keep = 1.0 - (alpha - rank) as f64 / alpha as f64 * w;
            revised[c + 1] = logits[c] * keep;
            revised[0] += logits[c] * (1.0 - keep);
        }
        Ok(softmax(&revised)[0])
    }
}
