//! Native CSP + linear-head backbone, its checkpoint format, and inference.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::csp::{extract_features, fit_csp_multiclass, DEFAULT_SHRINKAGE};
use super::head::{train_head, HeadConfig, LinearHead};
use crate::codec::{pack_f32, unpack_f32};
use crate::error::{Error, Result};
use crate::stream::{TrueState, WindowFrame};

/// Backbone output for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub start_s: f64,
    /// One logit per in-distribution class.
    pub logits: Vec<f64>,
    pub features: Vec<f64>,
    pub true_state: TrueState,
}

/// One CSP + linear stage. The Stage-II classifier and the rest/task gate
/// share this structure.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `d x C`
    pub csp_filters: Array2<f64>,
    pub head: Option<LinearHead>,
}

impl LinearModel {
    pub fn untrained(csp_filters: Array2<f64>) -> Self {
        Self {
            csp_filters,
            head: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.csp_filters.ncols()
    }

    pub fn feature_dim(&self) -> usize {
        self.csp_filters.nrows()
    }

    pub fn head(&self) -> Result<&LinearHead> {
        self.head
            .as_ref()
            .ok_or_else(|| Error::NotTrained("linear head has not been fit".into()))
    }

    pub fn features(&self, samples: &Array2<f64>) -> Result<Vec<f64>> {
        extract_features(samples, &self.csp_filters)
    }

    /// `(logits, features)` for raw window samples.
    pub fn forward(&self, samples: &Array2<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let head = self.head()?;
        if samples.nrows() != self.channels() {
            return Err(Error::Dimension(format!(
                "window has {} channels, model expects {}",
                samples.nrows(),
                self.channels()
            )));
        }
        let f = self.features(samples)?;
        Ok((head.logits(&f), f))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NativeBackboneModel {
    pub classifier: LinearModel,
    /// Binary rest (0) / task (1) stage.
    pub gate: LinearModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneConfig {
    pub n_pairs: usize,
    pub shrinkage: f64,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        let head = HeadConfig::default();
        Self {
            n_pairs: 3,
            shrinkage: DEFAULT_SHRINKAGE,
            epochs: head.epochs,
            lr: head.lr,
            l2: head.l2,
        }
    }
}

impl BackboneConfig {
    pub fn head(&self) -> HeadConfig {
        HeadConfig {
            epochs: self.epochs,
            lr: self.lr,
            l2: self.l2,
        }
    }
}

/// Fits CSP filters and a linear head on windows grouped by class index.
///
/// The head is trained on standardized log-variance features and the
/// standardization is folded back into its weights.
pub fn train_stage<R: Rng + ?Sized>(
    classes: &[Vec<&Array2<f64>>],
    cfg: &BackboneConfig,
    rng: &mut R,
) -> Result<LinearModel> {
    let csp = fit_csp_multiclass(classes, cfg.n_pairs, cfg.shrinkage)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (label, windows) in classes.iter().enumerate() {
        for w in windows {
            features.push(extract_features(w, &csp.filters)?);
            labels.push(label);
        }
    }
    let d = csp.filters.nrows();
    let n = features.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| features.iter().map(|f| f[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = features.iter().map(|f| (f[j] - mean[j]).powi(2)).sum::<f64>() / n;
            var.sqrt().max(1e-12)
        })
        .collect();
    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.iter().zip(&mean).zip(&scale).map(|((x, m), s)| (x - m) / s).collect())
        .collect();
    let init = LinearHead::random(classes.len(), d, rng);
    let trained = train_head(&standardized, &labels, init, &cfg.head())?;
    log::debug!(
        "stage head: {} samples, loss {:.4} -> {:.4}",
        labels.len(),
        trained.losses[0],
        trained.losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(LinearModel {
        csp_filters: csp.filters,
        head: Some(trained.head.fold_standardization(&mean, &scale)),
    })
}

/// Runs the Stage-II classifier on a window.
pub fn infer(window: &WindowFrame, model: &LinearModel) -> Result<FeatureFrame> {
    let (logits, features) = model.forward(&window.samples)?;
    Ok(FeatureFrame {
        start_s: window.start_s,
        logits,
        features,
        true_state: window.true_state.clone(),
    })
}

pub const MODEL_FORMAT: &str = "tempdens-model/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StageRecord {
    channels: usize,
    dim: usize,
    classes: usize,
    csp_filters: String,
    weights: String,
    bias: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format: String,
    classifier: StageRecord,
    gate: StageRecord,
}

impl StageRecord {
    fn from_model(m: &LinearModel) -> Result<Self> {
        let head = m.head()?;
        Ok(Self {
            channels: m.channels(),
            dim: m.feature_dim(),
            classes: head.classes(),
            csp_filters: pack_f32(m.csp_filters.iter().copied()),
            weights: pack_f32(head.weights.iter().copied()),
            bias: pack_f32(head.bias.iter().copied()),
        })
    }

    fn to_model(&self) -> Result<LinearModel> {
        let shape = |r: usize, c: usize, v: Vec<f64>| {
            Array2::from_shape_vec((r, c), v).map_err(|e| Error::Shape(e.to_string()))
        };
        let csp = shape(
            self.dim,
            self.channels,
            unpack_f32(&self.csp_filters, self.dim * self.channels)?,
        )?;
        let weights = shape(
            self.classes,
            self.dim,
            unpack_f32(&self.weights, self.classes * self.dim)?,
        )?;
        let bias = Array1::from(unpack_f32(&self.bias, self.classes)?);
        Ok(LinearModel {
            csp_filters: csp,
            head: Some(LinearHead { weights, bias }),
        })
    }
}

impl NativeBackboneModel {
    pub fn to_checkpoint(&self) -> Result<ModelCheckpoint> {
        Ok(ModelCheckpoint {
            format: MODEL_FORMAT.into(),
            classifier: StageRecord::from_model(&self.classifier)?,
            gate: StageRecord::from_model(&self.gate)?,
        })
    }

    pub fn from_checkpoint(ck: &ModelCheckpoint) -> Result<Self> {
        if ck.format != MODEL_FORMAT {
            return Err(Error::Serde(format!("unsupported model format `{}`", ck.format)));
        }
        let model = Self {
            classifier: ck.classifier.to_model()?,
            gate: ck.gate.to_model()?,
        };
        if model.gate.head()?.classes() != 2 {
            return Err(Error::Shape("gate head must have two classes".into()));
        }
        Ok(model)
    }

    /// Rounds every parameter through the `f32` checkpoint encoding.
    pub fn quantized(&self) -> Result<Self> {
        Self::from_checkpoint(&self.to_checkpoint()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: ModelCheckpoint = serde_json::from_value(crate::provenance::unwrap_artifact(&text)?)?;
        Self::from_checkpoint(&ck)
    }
}
