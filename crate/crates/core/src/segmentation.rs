//! Onset-driven slicing with an even-split length cap.

use serde::{Deserialize, Serialize};

use crate::corpus::AudioBuffer;
use crate::error::{Error, Result};
use crate::features::{self, Frame, HOP_SIZE, WINDOW_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: usize,
    pub source_index: usize,
    pub start_sample: usize,
    pub length_samples: usize,
    pub start_seconds: f64,
    pub duration_seconds: f64,
    pub cluster_node: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub flux_multiplier: f64,
    pub median_width: usize,
    pub min_segment_seconds: f64,
    pub max_segment_seconds: f64,
    /// Peaks must also reach this fraction of the largest flux value in the file.
    pub relative_floor: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            flux_multiplier: 1.5,
            median_width: 11,
            min_segment_seconds: 0.25,
            max_segment_seconds: 4.0,
            relative_floor: 0.1,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_segment_seconds > 0.0) {
            return Err(Error::invalid("min_segment_seconds", "must be > 0"));
        }
        // the even split of a segment just over the cap must stay above the minimum
        if !(self.max_segment_seconds >= 2.0 * self.min_segment_seconds) {
            return Err(Error::invalid(
                "max_segment_seconds",
                "must be at least twice min_segment_seconds",
            ));
        }
        if !(self.flux_multiplier > 0.0) {
            return Err(Error::invalid("flux_multiplier", "must be > 0"));
        }
        if self.median_width == 0 {
            return Err(Error::invalid("median_width", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.relative_floor) {
            return Err(Error::invalid("relative_floor", "must be in [0, 1)"));
        }
        Ok(())
    }

    fn min_frames(&self, sample_rate: u32) -> usize {
        ((self.min_segment_seconds * sample_rate as f64) / HOP_SIZE as f64).ceil() as usize
    }
}

/// Half-wave rectified spectral flux; the first frame has zero flux.
pub fn spectral_flux(frames: &[Frame]) -> Result<Vec<f64>> {
    if frames.len() < 2 {
        return Err(Error::NotEnoughData {
            needed: 2,
            got: frames.len(),
        });
    }
    let mut flux = Vec::with_capacity(frames.len());
    flux.push(0.0);
    for pair in frames.windows(2) {
        let f = pair[1]
            .magnitude
            .iter()
            .zip(&pair[0].magnitude)
            .map(|(cur, prev)| (cur - prev).max(0.0))
            .sum();
        flux.push(f);
    }
    Ok(flux)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Frame indices of onsets. Index 0 is always the first entry.
pub fn detect_onsets(flux: &[f64], config: &SegmentationConfig, sample_rate: u32) -> Vec<usize> {
    let mut onsets = vec![0];
    let peak_max = flux.iter().cloned().fold(0.0, f64::max);
    if peak_max <= 0.0 {
        return onsets;
    }
    let floor = config.relative_floor * peak_max;
    let half = config.median_width / 2;
    let min_gap = config.min_frames(sample_rate).max(1);
    let mut scratch = Vec::with_capacity(config.median_width);
    for t in 1..flux.len() {
        let v = flux[t];
        if v <= floor {
            continue;
        }
        let is_peak = v >= flux[t - 1] && flux.get(t + 1).is_none_or(|&n| v > n);
        if !is_peak {
            continue;
        }
        scratch.clear();
        scratch.extend_from_slice(&flux[t.saturating_sub(half)..(t + half + 1).min(flux.len())]);
        if v <= median(&mut scratch) * config.flux_multiplier {
            continue;
        }
        if t - onsets.last().unwrap() >= min_gap {
            onsets.push(t);
        }
    }
    onsets
}

/// Sample position where the material that raised frame `t`'s flux begins.
pub fn onset_sample(frame: usize) -> usize {
    if frame == 0 {
        0
    } else {
        (frame + 1) * HOP_SIZE
    }
}

/// Splits one source file into segments that tile it exactly.
pub fn segment(buffer: &AudioBuffer, config: &SegmentationConfig) -> Result<Vec<Segment>> {
    config.validate()?;
    let len = buffer.len();
    if len == 0 {
        return Err(Error::EmptyAudio);
    }
    let sr = buffer.sample_rate;
    let mut bounds = vec![0];
    if len >= WINDOW_SIZE + HOP_SIZE {
        let frames = features::stft_frames(buffer)?;
        let flux = spectral_flux(&frames)?;
        let min_len = (config.min_segment_seconds * sr as f64).ceil() as usize;
        for onset in detect_onsets(&flux, config, sr).into_iter().skip(1) {
            let s = onset_sample(onset);
            if s < len && s - bounds.last().unwrap() >= min_len {
                bounds.push(s);
            }
        }
    }
    bounds.push(len);

    let max_len = (config.max_segment_seconds * sr as f64).floor() as usize;
    let mut segments = Vec::new();
    for pair in bounds.windows(2) {
        let (start, end) = (pair[0], pair[1]);
        let span = end - start;
        let parts = span.div_ceil(max_len).max(1);
        let base = span / parts;
        let extra = span % parts;
        let mut at = start;
        for p in 0..parts {
            let length = base + usize::from(p < extra);
            segments.push(Segment {
                id: 0,
                source_index: 0,
                start_sample: at,
                length_samples: length,
                start_seconds: at as f64 / sr as f64,
                duration_seconds: length as f64 / sr as f64,
                cluster_node: None,
            });
            at += length;
        }
    }
    Ok(segments)
}
