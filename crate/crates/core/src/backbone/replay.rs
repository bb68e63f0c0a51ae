//! Replay of externally exported backbone outputs.
//!
//! File layout: one JSON header line `{"d": .., "K": .., "frame_count": ..}`
//! followed by `frame_count` packed little-endian `f32` records, each
//! holding `K` logits then `d` features. Records are in segmentation order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::FeatureFrame;
use crate::error::{Error, Result};
use crate::stream::{label_frames, SessionManifest, WindowConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFileHeader {
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub frame_count: usize,
}

/// Logits and features of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub logits: Vec<f64>,
    pub features: Vec<f64>,
}

pub fn encode_feature_file(header: FeatureFileHeader, records: &[FeatureRecord]) -> Result<Vec<u8>> {
    if records.len() != header.frame_count {
        return Err(Error::Shape(format!(
            "header declares {} frames, got {}",
            header.frame_count,
            records.len()
        )));
    }
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    for (i, r) in records.iter().enumerate() {
        if r.logits.len() != header.k || r.features.len() != header.d {
            return Err(Error::Shape(format!(
                "record {i} has {} logits and {} features, header declares K={} d={}",
                r.logits.len(),
                r.features.len(),
                header.k,
                header.d
            )));
        }
        for v in r.logits.iter().chain(&r.features) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_feature_file(bytes: &[u8]) -> Result<(FeatureFileHeader, Vec<FeatureRecord>)> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Shape("missing header line".into()))?;
    let header: FeatureFileHeader = serde_json::from_slice(&bytes[..newline])?;
    if header.k < 2 {
        return Err(Error::Shape(format!(
            "K = {} but at least two classes are required",
            header.k
        )));
    }
    let body = &bytes[newline + 1..];
    let width = header.k + header.d;
    let expected = header.frame_count * width * 4;
    if body.len() != expected {
        return Err(Error::Shape(format!(
            "body holds {} bytes, header implies {expected} ({} frames x (K={} + d={}) x 4)",
            body.len(),
            header.frame_count,
            header.k,
            header.d
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    let mut records = Vec::with_capacity(header.frame_count);
    for (i, rec) in values.chunks(width.max(1)).take(header.frame_count).enumerate() {
        if rec.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature record {i}")));
        }
        records.push(FeatureRecord {
            logits: rec[..header.k].to_vec(),
            features: rec[header.k..].to_vec(),
        });
    }
    Ok((header, records))
}

pub fn write_feature_file(path: &Path, header: FeatureFileHeader, records: &[FeatureRecord]) -> Result<()> {
    let bytes = encode_feature_file(header, records)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Pairs a feature file with the windows the manifest segments into.
pub fn replay_provider(
    feature_file: &Path,
    manifest: &SessionManifest,
    window: &WindowConfig,
) -> Result<impl Iterator<Item = FeatureFrame>> {
    let bytes = fs::read(feature_file).map_err(|e| Error::io(feature_file, e))?;
    replay_frames(&bytes, manifest, window)
}

pub fn replay_frames(
    bytes: &[u8],
    manifest: &SessionManifest,
    window: &WindowConfig,
) -> Result<impl Iterator<Item = FeatureFrame>> {
    let (header, records) = decode_feature_file(bytes)?;
    let labels = label_frames(manifest, window)?;
    if labels.len() != header.frame_count {
        return Err(Error::Shape(format!(
            "feature file has {} frames, session segments into {}",
            header.frame_count,
            labels.len()
        )));
    }
    Ok(labels.into_iter().zip(records).map(|(label, rec)| FeatureFrame {
        start_s: label.start_s,
        logits: rec.logits,
        features: rec.features,
        true_state: label.true_state,
    }))
}
