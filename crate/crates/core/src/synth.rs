//! Synthetic data with known ground truth: EEG-like sessions for the full
//! pipeline and feature-level streams for the scoring benchmarks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::backbone::{FeatureFrame, LinearHead};
use crate::engine::GatedFrame;
use crate::error::Result;
use crate::pipeline::{subject_seed, DatasetEntry, DatasetIndex, SubjectEntry};
use crate::stream::{write_session, ClassRole, Event, SessionManifest, TrueState};

/// Parameters of a synthetic motor-imagery recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EegSynthSpec {
    pub channels: usize,
    pub sampling_rate: f64,
    pub duration_s: f64,
    pub task_s: f64,
    /// Rest between trials is drawn uniformly from this range.
    pub rest_s: (f64, f64),
    /// `(name, role)` per trial class.
    pub classes: Vec<(String, ClassRole)>,
    /// Amplitude left on a class's own source during its trials.
    pub desync: f64,
    pub sensor_noise: f64,
}

impl Default for EegSynthSpec {
    fn default() -> Self {
        Self {
            channels: 8,
            sampling_rate: 250.0,
            duration_s: 240.0,
            task_s: 4.0,
            rest_s: (3.0, 5.0),
            classes: vec![
                ("left_hand".into(), ClassRole::Id { index: 0 }),
                ("right_hand".into(), ClassRole::Id { index: 1 }),
                ("feet".into(), ClassRole::Ood),
                ("tongue".into(), ClassRole::Ood),
            ],
            desync: 0.35,
            sensor_noise: 0.5,
        }
    }
}

/// Narrow-band AR(2) oscillator driven by white noise.
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new(freq_hz: f64, rate: f64, radius: f64) -> Self {
        let w = 2.0 * std::f64::consts::PI * freq_hz / rate;
        Self {
            a1: 2.0 * radius * w.cos(),
            a2: -radius * radius,
            gain: (1.0 - radius * radius).sqrt(),
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn next(&mut self, e: f64) -> f64 {
        let y = self.a1 * self.y1 + self.a2 * self.y2 + self.gain * e;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Generates one session. Each trial class desynchronizes its own source;
/// every task trial also damps a shared source, so task differs from rest.
pub fn synth_session<R: Rng + ?Sized>(
    spec: &EegSynthSpec,
    mixing: &Array2<f64>,
    subject_id: &str,
    session: &str,
    rng: &mut R,
) -> (SessionManifest, Array2<f64>) {
    let rate = spec.sampling_rate;
    let n = (spec.duration_s * rate).round() as usize;
    let sources = spec.classes.len() + 1;
    let mut events = Vec::new();
    let mut t = rng.random_range(spec.rest_s.0..spec.rest_s.1);
    let mut order: Vec<usize> = Vec::new();
    while t + spec.task_s + spec.rest_s.0 <= spec.duration_s {
        if order.is_empty() {
            order = (0..spec.classes.len()).collect();
            order.shuffle(rng);
        }
        let c = order.pop().expect("refilled above");
        let onset = (t * rate).round() / rate;
        events.push(Event {
            onset_s: onset,
            duration_s: spec.task_s,
            class_name: spec.classes[c].0.clone(),
        });
        t = onset + spec.task_s + rng.random_range(spec.rest_s.0..spec.rest_s.1);
    }
    let mut gain = vec![vec![1.0; n]; sources];
    for e in &events {
        let c = spec
            .classes
            .iter()
            .position(|(name, _)| *name == e.class_name)
            .expect("known class");
        let a = (e.onset_s * rate).round() as usize;
        let b = ((e.onset_s + e.duration_s) * rate).round() as usize;
        let span = a.min(n)..b.min(n);
        gain[c][span.clone()].fill(spec.desync);
        gain[sources - 1][span].fill(0.5);
    }
    let freqs: Vec<f64> = (0..sources).map(|s| 9.0 + 1.5 * s as f64).collect();
    let mut osc: Vec<Resonator> = freqs.iter().map(|f| Resonator::new(*f, rate, 0.985)).collect();
    let noise = Normal::new(0.0, spec.sensor_noise).expect("valid noise");
    let mut signal = Array2::zeros((spec.channels, n));
    let mut s = vec![0.0; sources];
    for i in 0..n {
        for (k, o) in osc.iter_mut().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            s[k] = 10.0 * gain[k][i] * o.next(e);
        }
        for ch in 0..spec.channels {
            let mut v = noise.sample(rng);
            for k in 0..sources {
                v += mixing[(ch, k)] * s[k];
            }
            signal[(ch, i)] = v;
        }
    }
    let manifest = SessionManifest {
        subject_id: subject_id.to_string(),
        session: Some(session.to_string()),
        channel_count: spec.channels,
        sampling_rate: rate,
        sample_count: n,
        channel_names: (1..=spec.channels).map(|c| format!("C{c:02}")).collect(),
        events,
        class_map: spec.classes.iter().cloned().collect::<BTreeMap<_, _>>(),
        data_path: format!("{session}.f32"),
    };
    (manifest, signal)
}

/// Random `channels x sources` mixing matrix with unit-norm columns.
pub fn random_mixing<R: Rng + ?Sized>(spec: &EegSynthSpec, rng: &mut R) -> Array2<f64> {
    let sources = spec.classes.len() + 1;
    let mut m = Array2::from_shape_fn((spec.channels, sources), |_| rng.sample::<f64, _>(StandardNormal));
    for mut col in m.columns_mut() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        col.mapv_inplace(|v| v / norm);
    }
    m
}

pub const SYNTHETIC_DATASET: &str = "synthetic";

/// Writes a data root with one training and one test session per subject
/// (`S01`, `S02`, ...) and its `index.json`.
pub fn write_synthetic_root(root: &Path, spec: &EegSynthSpec, subjects: usize, seed: u64) -> Result<DatasetIndex> {
    let mut entries = Vec::with_capacity(subjects);
    for n in 1..=subjects {
        let id = format!("S{n:02}");
        let mut rng = ChaCha8Rng::seed_from_u64(subject_seed(seed, SYNTHETIC_DATASET, &id));
        let mixing = random_mixing(spec, &mut rng);
        let mut paths = Vec::new();
        for session in ["train", "test"] {
            let (manifest, signal) = synth_session(spec, &mixing, &id, session, &mut rng);
            let rel: PathBuf = [SYNTHETIC_DATASET, id.as_str(), &format!("{session}.json")]
                .iter()
                .collect();
            write_session(root.join(&rel), &manifest, &signal)?;
            paths.push(rel);
        }
        let test = paths.pop().expect("two sessions");
        entries.push(SubjectEntry {
            id,
            train: paths,
            test: vec![test],
            train_features: Vec::new(),
            test_features: Vec::new(),
        });
    }
    let index = DatasetIndex {
        datasets: vec![DatasetEntry {
            name: SYNTHETIC_DATASET.into(),
            subjects: entries,
        }],
    };
    index.save(root)?;
    Ok(index)
}

/// Feature-level stream: ID episodes are smooth AR(1) trajectories around
/// two separated class means; OOD episodes sit at a shifted mean with
/// independent frame-to-frame jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSynthSpec {
    pub dim: usize,
    /// Class means are `+/- separation` along the first axis.
    pub separation: f64,
    pub id_noise: f64,
    /// AR(1) coefficient of the ID trajectories.
    pub smoothness: f64,
    /// OOD mean along the first axis, as a fraction of `separation`.
    pub ood_logit_fraction: f64,
    /// OOD mean along the second axis, outside the head's span.
    pub ood_offset: f64,
    pub ood_noise: f64,
    pub ood_jitter: f64,
    pub episode_frames: usize,
    pub rest_frames: usize,
    pub hop_s: f64,
    pub logit_gain: f64,
}

impl Default for FeatureSynthSpec {
    fn default() -> Self {
        Self {
            dim: 8,
            separation: 3.0,
            id_noise: 1.0,
            smoothness: 0.97,
            ood_logit_fraction: 0.45,
            ood_offset: 2.4,
            ood_noise: 1.0,
            ood_jitter: 0.45,
            episode_frames: 24,
            rest_frames: 12,
            hop_s: 0.125,
            logit_gain: 1.0,
        }
    }
}

impl FeatureSynthSpec {
    /// The linear head that maps synthetic features to logits.
    pub fn head(&self) -> LinearHead {
        let mut head = LinearHead::zeros(2, self.dim);
        head.weights[(0, 0)] = self.logit_gain;
        head.weights[(1, 0)] = -self.logit_gain;
        head
    }

    fn mean(&self, class: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        m[0] = if class == 0 { self.separation } else { -self.separation };
        m
    }
}

/// Generates `episodes` task episodes separated by rest frames. Each episode
/// is OOD with probability `ood_rate`. Rest frames carry `p_task = 0.1`,
/// task frames `0.9`.
pub fn synth_feature_stream<R: Rng + ?Sized>(
    spec: &FeatureSynthSpec,
    episodes: usize,
    ood_rate: f64,
    start_s: f64,
    rng: &mut R,
) -> Vec<GatedFrame> {
    let head = spec.head();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let innovation = (1.0 - spec.smoothness * spec.smoothness).sqrt();
    let mut frames = Vec::with_capacity(episodes * (spec.episode_frames + spec.rest_frames));
    let mut step = 0usize;
    let push = |frames: &mut Vec<GatedFrame>, f: Vec<f64>, state: TrueState, p: f64, cov: f64, step: &mut usize| {
        frames.push(GatedFrame {
            frame: FeatureFrame {
                start_s: start_s + *step as f64 * spec.hop_s,
                logits: head.logits(&f),
                features: f,
                true_state: state,
            },
            p_task: p,
            coverage: cov,
        });
        *step += 1;
    };
    for _ in 0..episodes {
        for _ in 0..spec.rest_frames {
            let f: Vec<f64> = (0..spec.dim).map(|_| unit.sample(rng) * spec.id_noise).collect();
            push(&mut frames, f, TrueState::Rest, 0.1, 0.0, &mut step);
        }
        let ood = rng.random_bool(ood_rate);
        let class = rng.random_range(0..2usize);
        let mut x: Vec<f64> = (0..spec.dim).map(|_| unit.sample(rng)).collect();
        let center = if ood {
            let sign = if class == 0 { 1.0 } else { -1.0 };
            let mut c = vec![0.0; spec.dim];
            c[0] = sign * spec.ood_logit_fraction * spec.separation;
            c[1] = spec.ood_offset;
            c
        } else {
            spec.mean(class)
        };
        for _ in 0..spec.episode_frames {
            for v in x.iter_mut() {
                *v = spec.smoothness * *v + innovation * unit.sample(rng);
            }
            let f: Vec<f64> = if ood {
                x.iter()
                    .zip(&center)
                    .map(|(v, c)| c + spec.ood_noise * v + spec.ood_jitter * unit.sample(rng))
                    .collect()
            } else {
                x.iter().zip(&center).map(|(v, c)| c + spec.id_noise * v).collect()
            };
            let state = if ood {
                TrueState::Ood {
                    class: "synthetic".into(),
                }
            } else {
                TrueState::Id { class }
            };
            push(&mut frames, f, state, 0.9, 1.0, &mut step);
        }
    }
    frames
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn session_is_valid_and_deterministic() {
        let spec = EegSynthSpec {
            duration_s: 60.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mix = random_mixing(&spec, &mut rng);
        let (m, x) = synth_session(&spec, &mix, "S01", "train-1", &mut rng);
        assert!(m.validate().is_ok(), "{:?}", m.validate());
        assert_eq!(x.dim(), (8, 15_000));
        assert!(x.iter().all(|v| v.is_finite()));
        assert!(m.events.len() >= 6);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mix2 = random_mixing(&spec, &mut rng);
        let (m2, x2) = synth_session(&spec, &mix2, "S01", "train-1", &mut rng);
        assert_eq!(m, m2);
        assert_eq!(x, x2);
    }

    #[test]
    fn feature_stream_layout() {
        let spec = FeatureSynthSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames = synth_feature_stream(&spec, 10, 0.5, 0.0, &mut rng);
        assert_eq!(frames.len(), 10 * 36);
        assert!(frames.windows(2).all(|w| w[0].frame.start_s < w[1].frame.start_s));
        assert!(frames
            .iter()
            .any(|g| matches!(g.frame.true_state, TrueState::Ood { .. })));
        assert!(frames
            .iter()
            .all(|g| g.frame.features.len() == 8 && g.frame.logits.len() == 2));
    }
}
