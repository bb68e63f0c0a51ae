//! Session manifests and the raw `.f32` signal format.
//!
//! A session is a JSON manifest next to a packed little-endian `f32` file
//! laid out channel-major: all samples of channel 0, then channel 1, and so on.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role a class name plays in the decoding problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum ClassRole {
    /// In-distribution control class with its logit index.
    Id { index: usize },
    /// Task-like activity outside the control vocabulary.
    Ood,
    /// Annotated rest interval.
    Rest,
}

/// One annotated interval of the recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub onset_s: f64,
    pub duration_s: f64,
    pub class_name: String,
}

impl Event {
    pub fn offset_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub subject_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    pub channel_count: usize,
    pub sampling_rate: f64,
    /// Samples per channel in the raw file.
    pub sample_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channel_names: Vec<String>,
    pub events: Vec<Event>,
    pub class_map: BTreeMap<String, ClassRole>,
    /// Raw file path, relative to the manifest's directory.
    pub data_path: String,
}

impl SessionManifest {
    pub fn duration_s(&self) -> f64 {
        self.sample_count as f64 / self.sampling_rate
    }

    pub fn role_of(&self, class_name: &str) -> Option<ClassRole> {
        self.class_map.get(class_name).copied()
    }

    /// Number of in-distribution classes (K).
    pub fn id_class_count(&self) -> usize {
        self.class_map
            .values()
            .filter(|r| matches!(r, ClassRole::Id { .. }))
            .count()
    }

    /// Checks every structural invariant of the manifest.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.channel_count == 0 {
            return Err("channel_count must be positive".into());
        }
        if !(self.sampling_rate.is_finite() && self.sampling_rate > 0.0) {
            return Err(format!("invalid sampling_rate {}", self.sampling_rate));
        }
        if !self.channel_names.is_empty() && self.channel_names.len() != self.channel_count {
            return Err(format!(
                "{} channel names for {} channels",
                self.channel_names.len(),
                self.channel_count
            ));
        }
        let mut id_indices: Vec<usize> = self
            .class_map
            .values()
            .filter_map(|r| match r {
                ClassRole::Id { index } => Some(*index),
                _ => None,
            })
            .collect();
        id_indices.sort_unstable();
        if id_indices.iter().enumerate().any(|(i, &idx)| i != idx) {
            return Err(format!("in-distribution indices must be 0..K-1, found {id_indices:?}"));
        }
        let length = self.duration_s();
        let mut prev_end = f64::NEG_INFINITY;
        for (i, ev) in self.events.iter().enumerate() {
            if !(ev.onset_s.is_finite() && ev.duration_s.is_finite()) {
                return Err(format!("event {i} has non-finite timing"));
            }
            if ev.onset_s < 0.0 || ev.duration_s < 0.0 {
                return Err(format!("event {i} has negative onset or duration"));
            }
            if !self.class_map.contains_key(&ev.class_name) {
                return Err(format!("event {i} class `{}` missing from class_map", ev.class_name));
            }
            if ev.onset_s < prev_end - 1e-9 {
                return Err(format!("event {i} overlaps or precedes its predecessor"));
            }
            if ev.offset_s() > length + 1e-9 {
                return Err(format!(
                    "event {i} ends at {} s beyond recording length {length} s",
                    ev.offset_s()
                ));
            }
            prev_end = ev.offset_s();
        }
        Ok(())
    }
}

/// Reads a manifest and its raw signal as a `C x N` matrix.
pub fn load_session(manifest_path: impl AsRef<Path>) -> Result<(SessionManifest, Array2<f64>)> {
    let manifest = read_manifest(&manifest_path)?;
    let raw_path = raw_path_for(manifest_path.as_ref(), &manifest);
    let signal = read_raw(&raw_path, manifest.channel_count, manifest.sample_count)?;
    Ok((manifest, signal))
}

pub fn read_manifest(manifest_path: impl AsRef<Path>) -> Result<SessionManifest> {
    let path = manifest_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: SessionManifest = serde_json::from_str(&text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    manifest.validate().map_err(|reason| Error::Manifest {
        path: path.to_path_buf(),
        reason,
    })?;
    Ok(manifest)
}

pub fn raw_path_for(manifest_path: &Path, manifest: &SessionManifest) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.data_path)
}

/// Parses a channel-major little-endian `f32` file.
pub fn read_raw(path: &Path, channels: usize, samples: usize) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raw(&bytes, channels, samples)
}

pub fn decode_raw(bytes: &[u8], channels: usize, samples: usize) -> Result<Array2<f64>> {
    let expected = (channels * samples * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let mut out = Array2::<f64>::zeros((channels, samples));
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        let (c, s) = (i / samples, i % samples);
        if !v.is_finite() {
            return Err(Error::NonFiniteSample {
                offset: (i * 4) as u64,
                channel: c,
                sample: s,
            });
        }
        out[[c, s]] = f64::from(v);
    }
    Ok(out)
}

pub fn encode_raw(signal: &Array2<f64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(signal.len() * 4);
    for row in signal.rows() {
        for &v in row {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    bytes
}

/// Writes `manifest_path` and the raw file it points to.
pub fn write_session(manifest_path: impl AsRef<Path>, manifest: &SessionManifest, signal: &Array2<f64>) -> Result<()> {
    let path = manifest_path.as_ref();
    if signal.nrows() != manifest.channel_count || signal.ncols() != manifest.sample_count {
        return Err(Error::Dimension(format!(
            "signal is {}x{}, manifest declares {}x{}",
            signal.nrows(),
            signal.ncols(),
            manifest.channel_count,
            manifest.sample_count
        )));
    }
    manifest.validate().map_err(|reason| Error::Manifest {
        path: path.to_path_buf(),
        reason,
    })?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let raw = raw_path_for(path, manifest);
    fs::write(&raw, encode_raw(signal)).map_err(|e| Error::io(&raw, e))?;
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn manifest(channels: usize, samples: usize, events: Vec<Event>) -> SessionManifest {
        let mut class_map = BTreeMap::new();
        class_map.insert("left".to_string(), ClassRole::Id { index: 0 });
        class_map.insert("right".to_string(), ClassRole::Id { index: 1 });
        class_map.insert("feet".to_string(), ClassRole::Ood);
        SessionManifest {
            subject_id: "S1".into(),
            session: None,
            channel_count: channels,
            sampling_rate: 250.0,
            sample_count: samples,
            channel_names: vec![],
            events,
            class_map,
            data_path: "s.f32".into(),
        }
    }

    #[test]
    fn round_trip_22_channels() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(22, 500, vec![]);
        let signal = Array2::from_shape_fn((22, 500), |(c, s)| (c * 1000 + s) as f64 * 0.5);
        let path = dir.path().join("s.json");
        write_session(&path, &m, &signal).unwrap();
        let (m2, sig2) = load_session(&path).unwrap();
        assert_eq!(m2, m);
        assert_eq!(sig2.nrows(), 22);
        assert_eq!(sig2, signal);
    }

    #[test]
    fn short_file_is_size_mismatch() {
        let bytes = vec![0u8; 2 * 10 * 4 - 4];
        match decode_raw(&bytes, 2, 10) {
            Err(Error::SizeMismatch { expected, found }) => {
                assert_eq!(expected, 80);
                assert_eq!(found, 76);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_reports_first_offset() {
        let mut bytes = vec![0u8; 2 * 4 * 4];
        bytes[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        bytes[28..32].copy_from_slice(&f32::INFINITY.to_le_bytes());
        match decode_raw(&bytes, 2, 4) {
            Err(Error::NonFiniteSample {
                offset,
                channel,
                sample,
            }) => assert_eq!((offset, channel, sample), (20, 1, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_overlapping_and_unknown_events() {
        let ev = |on, dur, name: &str| Event {
            onset_s: on,
            duration_s: dur,
            class_name: name.into(),
        };
        assert!(manifest(2, 2500, vec![ev(1.0, 2.0, "left"), ev(2.5, 1.0, "right")])
            .validate()
            .is_err());
        assert!(manifest(2, 2500, vec![ev(1.0, 2.0, "tongue")]).validate().is_err());
        assert!(manifest(2, 2500, vec![ev(9.0, 2.0, "left")]).validate().is_err());
        assert!(manifest(2, 2500, vec![ev(1.0, 2.0, "left"), ev(3.0, 1.0, "feet")])
            .validate()
            .is_ok());
    }

    #[test]
    fn malformed_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{ \"subject_id\": 3 }").unwrap();
        assert!(matches!(load_session(&path), Err(Error::Manifest { .. })));
    }
}
