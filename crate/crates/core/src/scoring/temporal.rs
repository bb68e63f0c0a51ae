//! Temporal-consistency term and the feature history it reads from.

use std::collections::VecDeque;

use super::metric::{metric_distance, Metric};
use crate::error::{Error, Result};

/// Ring buffer of recent task-frame features, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHistory {
    capacity: usize,
    entries: VecDeque<(f64, Vec<f64>)>,
}

impl FeatureHistory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < 3 {
            return Err(Error::InvalidParameter(format!("history capacity {capacity} < 3")));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn last_time(&self) -> Option<f64> {
        self.entries.back().map(|(t, _)| *t)
    }

    /// The `n`-th most recent feature vector (`0` = latest).
    pub fn recent(&self, n: usize) -> Option<&[f64]> {
        let len = self.entries.len();
        if n < len {
            Some(&self.entries[len - 1 - n].1)
        } else {
            None
        }
    }

    pub fn push(&mut self, t: f64, features: Vec<f64>) -> Result<()> {
        if let Some((last_t, last_f)) = self.entries.back() {
            if t <= *last_t {
                return Err(Error::OutOfOrder { prev: *last_t, next: t });
            }
            if last_f.len() != features.len() {
                return Err(Error::Dimension(format!(
                    "history holds {}-dim features, got {}",
                    last_f.len(),
                    features.len()
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((t, features));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalScore {
    pub value: f64,
    /// False when fewer than two previous frames were available; `value` is then 0.
    pub mature: bool,
}

/// Scores `f_t` against the previous frames held in `history`.
///
/// The second-order metric uses `f_{t-1}` and `f_{t-2}`; the pairwise
/// metrics compare `f_t` with the mean of those two frames.
pub fn score_temporal(f_t: &[f64], history: &FeatureHistory, metric: Metric, eps: f64) -> Result<TemporalScore> {
    let (Some(prev1), Some(prev2)) = (history.recent(0), history.recent(1)) else {
        return Ok(TemporalScore {
            value: 0.0,
            mature: false,
        });
    };
    if prev1.len() != f_t.len() {
        return Err(Error::Dimension(format!(
            "feature of length {} against history of length {}",
            f_t.len(),
            prev1.len()
        )));
    }
    let value = match metric {
        Metric::SecondOrder => f_t
            .iter()
            .zip(prev1)
            .zip(prev2)
            .map(|((a, b), c)| {
                let d = a - 2.0 * b + c;
                d * d
            })
            .sum::<f64>()
            .sqrt(),
        _ => {
            let center: Vec<f64> = prev1.iter().zip(prev2).map(|(b, c)| 0.5 * (b + c)).collect();
            metric_distance(metric, f_t, &center, eps)?
        }
    };
    Ok(TemporalScore { value, mature: true })
}

/// History plus the gap rule that clears it between task episodes.
///
/// The history is cleared when more than `reset_gap_s` separates two
/// consecutive observed frames. On a hop grid this is the same as having
/// seen at least `reset_gap_s` of rest decisions in between.
#[derive(Debug, Clone)]
pub struct TemporalTracker {
    history: FeatureHistory,
    metric: Metric,
    eps: f64,
    reset_gap_s: f64,
}

impl TemporalTracker {
    pub fn new(capacity: usize, metric: Metric, eps: f64, reset_gap_s: f64) -> Result<Self> {
        Ok(Self {
            history: FeatureHistory::new(capacity)?,
            metric,
            eps,
            reset_gap_s,
        })
    }

    pub fn history(&self) -> &FeatureHistory {
        &self.history
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// True if a frame at `t` would start a new episode.
    pub fn gap_exceeded(&self, t: f64) -> bool {
        self.history.last_time().is_some_and(|last| t - last > self.reset_gap_s)
    }

    /// Scores `features` at time `t`, then appends them to the history.
    pub fn observe(&mut self, t: f64, features: &[f64]) -> Result<TemporalScore> {
        if let Some(last) = self.history.last_time() {
            if t <= last {
                return Err(Error::OutOfOrder { prev: last, next: t });
            }
        }
        if self.gap_exceeded(t) {
            self.history.clear();
        }
        let score = score_temporal(features, &self.history, self.metric, self.eps)?;
        self.history.push(t, features.to_vec())?;
        Ok(score)
    }
}
