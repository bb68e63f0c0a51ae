//! Dataset layout on disk and the per-subject train / calibrate / replay steps.
//!
//! A data root holds `index.json`:
//!
//! ```json
//! {"datasets": [{"name": "bnci2014001", "subjects": [
//!     {"id": "S01", "train": ["bnci/S01/s1.json"], "test": ["bnci/S01/s2.json"],
//!      "test_features": ["bnci/S01/s2.features"]}]}]}
//! ```
//!
//! Paths are relative to the data root. Feature files are optional and,
//! when present, replace the native classifier's outputs session by session.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backbone::replay::replay_provider;
use crate::backbone::{train_stage, FeatureFrame, LinearModel, NativeBackboneModel};
use crate::calibration::{calibrate, CalibrationPack, IdRun};
use crate::config::RunConfig;
use crate::engine::GatedFrame;
use crate::error::{Error, Result};
use crate::evaluation::SubjectData;
use crate::gate::gate_probability;
use crate::stream::filter::Bandpass;
use crate::stream::{load_session, segment, SessionManifest, TrueState, WindowFrame};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectEntry {
    pub id: String,
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_features: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_features: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub subjects: Vec<SubjectEntry>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub datasets: Vec<DatasetEntry>,
}

impl DatasetIndex {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: Self = serde_json::from_str(&text)?;
        for ds in &index.datasets {
            for s in &ds.subjects {
                for (feats, sessions, what) in [
                    (&s.train_features, &s.train, "train"),
                    (&s.test_features, &s.test, "test"),
                ] {
                    if !feats.is_empty() && feats.len() != sessions.len() {
                        return Err(Error::Manifest {
                            path: path.clone(),
                            reason: format!(
                                "{}/{}: {} {what} feature files for {} sessions",
                                ds.name,
                                s.id,
                                feats.len(),
                                sessions.len()
                            ),
                        });
                    }
                }
            }
        }
        Ok(index)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(INDEX_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    /// `(dataset, subject)` pairs allowed by the configured selections.
    pub fn select<'a>(&'a self, cfg: &RunConfig) -> Result<Vec<(&'a str, &'a SubjectEntry)>> {
        for name in &cfg.datasets {
            if !self.datasets.iter().any(|d| &d.name == name) {
                return Err(Error::UnknownName(format!("dataset {name}")));
            }
        }
        let out: Vec<(&str, &SubjectEntry)> = self
            .datasets
            .iter()
            .filter(|d| cfg.datasets.is_empty() || cfg.datasets.contains(&d.name))
            .flat_map(|d| d.subjects.iter().map(move |s| (d.name.as_str(), s)))
            .filter(|(_, s)| cfg.subjects.is_empty() || cfg.subjects.contains(&s.id))
            .collect();
        if out.is_empty() {
            return Err(Error::InsufficientData("selection matches no subjects".into()));
        }
        Ok(out)
    }
}

/// Deterministic per-subject seed.
pub fn subject_seed(seed: u64, dataset: &str, subject: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(dataset.as_bytes());
    h.update([0]);
    h.update(subject.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}

/// Loads a session and applies the configured causal band-pass.
pub fn load_filtered(root: &Path, manifest: &Path, cfg: &RunConfig) -> Result<(SessionManifest, Array2<f64>)> {
    let (m, raw) = load_session(root.join(manifest))?;
    let filter = Bandpass::design(cfg.band.order, cfg.band.low_hz, cfg.band.high_hz, m.sampling_rate)?;
    Ok((m, filter.filter(&raw)))
}

fn is_training_id(w: &TrueState, coverage: f64, cfg: &RunConfig) -> Option<usize> {
    w.id_class().filter(|_| coverage >= cfg.train_min_coverage)
}

/// Trains the rest/task gate and the ID classifier on a subject's training sessions.
pub fn train_subject(
    root: &Path,
    dataset: &str,
    subject: &SubjectEntry,
    cfg: &RunConfig,
) -> Result<NativeBackboneModel> {
    let mut rest: Vec<Array2<f64>> = Vec::new();
    let mut by_class: Vec<Vec<Array2<f64>>> = Vec::new();
    for path in &subject.train {
        let (m, signal) = load_filtered(root, path, cfg)?;
        let k = m.id_class_count();
        if by_class.len() < k {
            by_class.resize_with(k, Vec::new);
        }
        for (i, w) in segment(&signal, &m, &cfg.window)?.enumerate() {
            if i % cfg.train_stride != 0 {
                continue;
            }
            match (&w.true_state, is_training_id(&w.true_state, w.coverage, cfg)) {
                (TrueState::Rest, _) => rest.push(w.samples),
                (_, Some(c)) => by_class[c].push(w.samples),
                _ => {}
            }
        }
    }
    if by_class.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{dataset}/{}: fewer than two ID classes",
            subject.id
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(subject_seed(cfg.seed, dataset, &subject.id));
    let classes: Vec<Vec<&Array2<f64>>> = by_class.iter().map(|ws| ws.iter().collect()).collect();
    let classifier = train_stage(&classes, &cfg.backbone, &mut rng)?;
    let task: Vec<&Array2<f64>> = by_class.iter().flatten().collect();
    let gate = train_stage(&[rest.iter().collect(), task], &cfg.backbone, &mut rng)?;
    log::info!(
        "{dataset}/{}: trained on {} rest and {} ID windows",
        subject.id,
        rest.len(),
        by_class.iter().map(Vec::len).sum::<usize>()
    );
    NativeBackboneModel { classifier, gate }.quantized()
}

fn classifier_frame(window: &WindowFrame, model: &LinearModel) -> FeatureFrame {
    match model.forward(&window.samples) {
        Ok((logits, features)) => FeatureFrame {
            start_s: window.start_s,
            logits,
            features,
            true_state: window.true_state.clone(),
        },
        Err(e) => {
            log::warn!("window at {} s: {e}", window.start_s);
            FeatureFrame {
                start_s: window.start_s,
                logits: vec![f64::NAN; model.head.as_ref().map_or(2, |h| h.classes())],
                features: vec![f64::NAN; model.feature_dim()],
                true_state: window.true_state.clone(),
            }
        }
    }
}

/// Every window of a session with its gate probability and Stage-II outputs.
pub fn session_frames(
    root: &Path,
    manifest: &Path,
    features: Option<&Path>,
    model: &NativeBackboneModel,
    cfg: &RunConfig,
) -> Result<Vec<GatedFrame>> {
    let (m, signal) = load_filtered(root, manifest, cfg)?;
    let windows = segment(&signal, &m, &cfg.window)?;
    let replayed: Option<Vec<FeatureFrame>> = match features {
        Some(p) => Some(replay_provider(&root.join(p), &m, &cfg.window)?.collect()),
        None => None,
    };
    let mut out = Vec::with_capacity(windows.len());
    for (i, w) in windows.enumerate() {
        let p_task = gate_probability(&w.samples, &model.gate).unwrap_or(f64::NAN);
        let frame = match &replayed {
            Some(r) => r[i].clone(),
            None => classifier_frame(&w, &model.classifier),
        };
        out.push(GatedFrame {
            frame,
            p_task,
            coverage: w.coverage,
        });
    }
    Ok(out)
}

/// ID training frames per training session, in time order.
pub fn calibration_runs(
    root: &Path,
    subject: &SubjectEntry,
    model: &NativeBackboneModel,
    cfg: &RunConfig,
) -> Result<Vec<IdRun>> {
    subject
        .train
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let feats = subject.train_features.get(i).map(PathBuf::as_path);
            let frames = session_frames(root, path, feats, model, cfg)?;
            Ok(frames
                .into_iter()
                .filter(|g| is_training_id(&g.frame.true_state, g.coverage, cfg).is_some())
                .filter(|g| g.frame.logits.iter().chain(&g.frame.features).all(|v| v.is_finite()))
                .map(|g| g.frame)
                .collect())
        })
        .collect()
}

/// Same pack as the evaluation path builds for this subject.
pub fn calibrate_subject(
    root: &Path,
    subject: &SubjectEntry,
    model: &NativeBackboneModel,
    cfg: &RunConfig,
) -> Result<CalibrationPack> {
    let runs = calibration_runs(root, subject, model, cfg)?;
    let head = subject
        .train_features
        .is_empty()
        .then(|| model.classifier.head())
        .transpose()?;
    let eval = cfg.eval_config();
    calibrate(
        &runs,
        head,
        &cfg.scoring,
        &eval.baselines,
        &cfg.calibration,
        cfg.gate_threshold,
        cfg.seed,
    )
}

/// Training runs, test streams and head of a subject, ready for evaluation.
pub fn subject_data(
    root: &Path,
    subject: &SubjectEntry,
    model: &NativeBackboneModel,
    cfg: &RunConfig,
) -> Result<SubjectData> {
    let train_runs = calibration_runs(root, subject, model, cfg)?;
    let test_sessions = subject
        .test
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let feats = subject.test_features.get(i).map(PathBuf::as_path);
            session_frames(root, path, feats, model, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let head = if subject.train_features.is_empty() {
        Some(model.classifier.head()?.clone())
    } else {
        None
    };
    Ok(SubjectData {
        subject: subject.id.clone(),
        train_runs,
        test_sessions,
        head,
    })
}
