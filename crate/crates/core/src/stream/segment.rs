//! Sliding-window segmentation and ground-truth labeling.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::manifest::{ClassRole, SessionManifest};
use crate::error::{Error, Result};

/// Ground-truth state of a window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum TrueState {
    Rest,
    Id {
        class: usize,
    },
    Ood {
        class: String,
    },
    /// Post-offset transition window, dropped from training and evaluation.
    Excluded,
}

impl TrueState {
    pub fn is_task(&self) -> bool {
        matches!(self, TrueState::Id { .. } | TrueState::Ood { .. })
    }

    pub fn id_class(&self) -> Option<usize> {
        match self {
            TrueState::Id { class } => Some(*class),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub window_len_s: f64,
    pub hop_s: f64,
    /// Span after each task offset whose task-free windows are excluded.
    pub exclusion_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_len_s: 2.0,
            hop_s: 0.125,
            exclusion_s: 0.5,
        }
    }
}

fn whole_samples(what: &str, seconds: f64, rate: f64) -> Result<usize> {
    let x = seconds * rate;
    let r = x.round();
    if !(x.is_finite() && r >= 1.0 && (x - r).abs() < 1e-9 * r.max(1.0)) {
        return Err(Error::NonIntegerSamples(format!(
            "{what} = {seconds} s at {rate} Hz gives {x} samples"
        )));
    }
    Ok(r as usize)
}

impl WindowConfig {
    /// Window length in samples and hop in (possibly fractional) samples.
    ///
    /// The window must span a whole number of samples. The hop may not:
    /// 0.125 s at 250 Hz is 31.25 samples, so frame `i` starts at sample
    /// `floor(i * hop)` while its nominal time stays `i * hop_s`.
    pub fn samples(&self, rate: f64) -> Result<(usize, f64)> {
        let window = whole_samples("window_len_s", self.window_len_s, rate)?;
        let hop = self.hop_s * rate;
        if !(hop.is_finite() && hop >= 1.0 - 1e-9) {
            return Err(Error::NonIntegerSamples(format!(
                "hop_s = {} s at {rate} Hz is shorter than one sample",
                self.hop_s
            )));
        }
        Ok((window, hop))
    }

    pub fn frame_count(&self, total_samples: usize, rate: f64) -> Result<usize> {
        let (window, hop) = self.samples(rate)?;
        Ok(frame_count(total_samples, window, hop))
    }
}

/// `floor((N - W) / hop) + 1`, or 0 when the recording is shorter than a window.
pub fn frame_count(total_samples: usize, window: usize, hop: f64) -> usize {
    if total_samples < window {
        0
    } else {
        ((total_samples - window) as f64 / hop + 1e-9).floor() as usize + 1
    }
}

fn frame_start(index: usize, hop: f64) -> usize {
    (index as f64 * hop + 1e-9).floor() as usize
}

/// Label and timing of one window, independent of the signal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLabel {
    pub start_sample: usize,
    pub start_s: f64,
    pub true_state: TrueState,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowFrame {
    pub start_s: f64,
    /// `C x T_w` samples.
    pub samples: Array2<f64>,
    pub true_state: TrueState,
    pub coverage: f64,
}

struct TaskSpan {
    begin: usize,
    end: usize,
    role: ClassRole,
    name: String,
}

/// Labels every window of a session from its annotations alone.
pub fn label_frames(manifest: &SessionManifest, cfg: &WindowConfig) -> Result<Vec<FrameLabel>> {
    let rate = manifest.sampling_rate;
    let (window, hop) = cfg.samples(rate)?;
    let exclusion = (cfg.exclusion_s * rate).round() as usize;
    let to_sample = |t: f64| ((t * rate).round() as usize).min(manifest.sample_count);

    let spans: Vec<TaskSpan> = manifest
        .events
        .iter()
        .filter_map(|ev| {
            let role = manifest.role_of(&ev.class_name)?;
            match role {
                ClassRole::Id { .. } | ClassRole::Ood => Some(TaskSpan {
                    begin: to_sample(ev.onset_s),
                    end: to_sample(ev.offset_s()),
                    role,
                    name: ev.class_name.clone(),
                }),
                ClassRole::Rest => None,
            }
        })
        .collect();

    let n = frame_count(manifest.sample_count, window, hop);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let begin = frame_start(i, hop);
        let end = begin + window;
        let mut covered = 0usize;
        let mut best: Option<(usize, &TaskSpan)> = None;
        let mut excluded = false;
        for span in &spans {
            let overlap = end.min(span.end).saturating_sub(begin.max(span.begin));
            covered += overlap;
            if overlap > 0 && best.is_none_or(|(b, _)| overlap > b) {
                best = Some((overlap, span));
            }
            let ex_end = span.end + exclusion;
            if exclusion > 0 && begin < ex_end && span.end < end {
                excluded = true;
            }
        }
        let true_state = match best {
            Some((_, span)) => match span.role {
                ClassRole::Id { index } => TrueState::Id { class: index },
                _ => TrueState::Ood {
                    class: span.name.clone(),
                },
            },
            None if excluded => TrueState::Excluded,
            None => TrueState::Rest,
        };
        labels.push(FrameLabel {
            start_sample: begin,
            start_s: i as f64 * cfg.hop_s,
            true_state,
            coverage: covered as f64 / window as f64,
        });
    }
    Ok(labels)
}

/// Pull-based window stream over a `C x N` signal.
pub struct Segments<'a> {
    signal: &'a Array2<f64>,
    labels: std::vec::IntoIter<FrameLabel>,
    window: usize,
}

impl Iterator for Segments<'_> {
    type Item = WindowFrame;

    fn next(&mut self) -> Option<WindowFrame> {
        let label = self.labels.next()?;
        let b = label.start_sample;
        Some(WindowFrame {
            start_s: label.start_s,
            samples: self.signal.slice(s![.., b..b + self.window]).to_owned(),
            true_state: label.true_state,
            coverage: label.coverage,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        self.labels.size_hint()
    }
}

impl ExactSizeIterator for Segments<'_> {}

pub fn segment<'a>(signal: &'a Array2<f64>, manifest: &SessionManifest, cfg: &WindowConfig) -> Result<Segments<'a>> {
    if signal.nrows() != manifest.channel_count || signal.ncols() != manifest.sample_count {
        return Err(Error::Dimension(format!(
            "signal is {}x{}, manifest declares {}x{}",
            signal.nrows(),
            signal.ncols(),
            manifest.channel_count,
            manifest.sample_count
        )));
    }
    let (window, _) = cfg.samples(manifest.sampling_rate)?;
    Ok(Segments {
        signal,
        labels: label_frames(manifest, cfg)?.into_iter(),
        window,
    })
}
