//! Descriptor-space nearest-neighbour retrieval.
//!
//! The mosaic space extends the 31-value segment vector with the segment's
//! mean centroid, periodicity and f0, plus its duration. All axes are
//! min-max normalized to [-1, 1] over the corpus.

use serde::{Deserialize, Serialize};

use crate::corpus::TrainedModel;
use crate::error::{Error, Result};
use crate::features::{dim, segment_vector, RunningStats, SegmentStats, VECTOR_DIMS};
use crate::som::Normalization;

pub const MOSAIC_DIMS: usize = VECTOR_DIMS + 4;
pub const CENTROID_AXIS: usize = VECTOR_DIMS;
pub const PERIODICITY_AXIS: usize = VECTOR_DIMS + 1;
pub const F0_AXIS: usize = VECTOR_DIMS + 2;
pub const DURATION_AXIS: usize = VECTOR_DIMS + 3;

pub const MOSAIC_AXIS_NAMES: [&str; 4] = ["centroid", "periodicity", "f0", "duration"];

/// Index of a named axis: any name from the 31-value vector or one of
/// [`MOSAIC_AXIS_NAMES`].
pub fn axis_index(name: &str) -> Option<usize> {
    crate::features::VECTOR_NAMES
        .iter()
        .chain(MOSAIC_AXIS_NAMES.iter())
        .position(|n| *n == name)
}

pub fn axis_name(axis: usize) -> Option<&'static str> {
    crate::features::VECTOR_NAMES
        .iter()
        .chain(MOSAIC_AXIS_NAMES.iter())
        .nth(axis)
        .copied()
}

fn raw_point(stats: &SegmentStats, vector: &[f64], duration: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(MOSAIC_DIMS);
    p.extend_from_slice(vector);
    p.push(stats.mean[dim::CENTROID]);
    p.push(stats.mean[dim::PERIODICITY]);
    p.push(stats.mean[dim::F0]);
    p.push(duration);
    p
}

/// Per-axis weights for the weighted Euclidean distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights(pub Vec<f64>);

impl FeatureWeights {
    /// Equal weight on every descriptor axis. Duration is excluded because a
    /// live target has no meaningful duration.
    pub fn uniform() -> Self {
        let mut w = vec![1.0; MOSAIC_DIMS];
        w[DURATION_AXIS] = 0.0;
        FeatureWeights(w)
    }

    pub fn all_equal() -> Self {
        FeatureWeights(vec![1.0; MOSAIC_DIMS])
    }

    pub fn one_hot(axis: usize) -> Result<Self> {
        if axis >= MOSAIC_DIMS {
            return Err(Error::invalid("weights", format!("axis {axis} out of range 0..{MOSAIC_DIMS}")));
        }
        let mut w = vec![0.0; MOSAIC_DIMS];
        w[axis] = 1.0;
        Ok(FeatureWeights(w))
    }

    /// Weights from `name=value` pairs; unnamed axes get 0.
    pub fn from_named<'a>(pairs: impl IntoIterator<Item = (&'a str, f64)>) -> Result<Self> {
        let mut w = vec![0.0; MOSAIC_DIMS];
        for (name, value) in pairs {
            let axis = axis_index(name)
                .ok_or_else(|| Error::invalid("weights", format!("unknown descriptor '{name}'")))?;
            w[axis] = value;
        }
        let w = FeatureWeights(w);
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.len() != MOSAIC_DIMS {
            return Err(Error::DimensionMismatch {
                expected: MOSAIC_DIMS,
                got: self.0.len(),
            });
        }
        if self.0.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights", "weights must be finite and >= 0"));
        }
        if self.0.iter().all(|w| *w == 0.0) {
            return Err(Error::ZeroWeights);
        }
        Ok(())
    }
}

impl Default for FeatureWeights {
    fn default() -> Self {
        FeatureWeights::uniform()
    }
}

/// A query point in normalized mosaic space.
#[derive(Debug, Clone, PartialEq)]
pub struct MosaicTarget(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSpace {
    pub normalization: Normalization,
    /// Unnormalized descriptor values, one row per segment.
    pub raw: Vec<Vec<f64>>,
    /// Normalized points, one per segment.
    pub points: Vec<Vec<f64>>,
}

impl DescriptorSpace {
    pub fn from_model(model: &TrainedModel) -> Result<Self> {
        let raw: Vec<Vec<f64>> = (0..model.num_data())
            .map(|i| {
                raw_point(
                    &model.stats[i],
                    model.vector(i).as_slice(),
                    model.segments[i].duration_seconds,
                )
            })
            .collect();
        let normalization = Normalization::fit(&raw)?;
        let points = raw.iter().map(|p| normalization.apply(p)).collect();
        Ok(DescriptorSpace {
            normalization,
            raw,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Target for a segment's statistics, clamped to the corpus range.
    /// Without a duration the duration axis sits at mid-range.
    pub fn target(&self, stats: &SegmentStats, duration: Option<f64>) -> MosaicTarget {
        let v = segment_vector(stats);
        let p = raw_point(stats, v.as_slice(), duration.unwrap_or(0.0));
        let mut n = self.normalization.apply_clamped(&p);
        if duration.is_none() {
            n[DURATION_AXIS] = 0.0;
        }
        MosaicTarget(n)
    }

    /// Raw (unnormalized) value of `axis` for every segment.
    pub fn raw_axis(&self, axis: usize) -> Result<Vec<f64>> {
        if axis >= MOSAIC_DIMS {
            return Err(Error::invalid("axis", format!("axis {axis} out of range 0..{MOSAIC_DIMS}")));
        }
        Ok(self.raw.iter().map(|p| p[axis]).collect())
    }
}

pub fn weighted_distance(a: &[f64], b: &[f64], weights: &FeatureWeights) -> f64 {
    a.iter()
        .zip(b)
        .zip(&weights.0)
        .map(|((x, y), w)| w * (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// The `k` nearest segments to `target`, nearest first. Equal distances are
/// broken by the lower segment id.
pub fn knn_query(
    space: &DescriptorSpace,
    target: &MosaicTarget,
    weights: &FeatureWeights,
    k: usize,
) -> Result<Vec<usize>> {
    weights.validate()?;
    if target.0.len() != MOSAIC_DIMS {
        return Err(Error::DimensionMismatch {
            expected: MOSAIC_DIMS,
            got: target.0.len(),
        });
    }
    if k == 0 {
        return Err(Error::invalid("k", "k must be at least 1"));
    }
    if space.is_empty() {
        return Err(Error::Untrained);
    }
    let mut scored: Vec<(f64, usize)> = space
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (weighted_distance(p, &target.0, weights), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

/// Nearest segment to the live statistics, or `None` while the trigger gate
/// is closed.
pub fn reactive_step(
    space: &DescriptorSpace,
    live: &RunningStats,
    weights: &FeatureWeights,
    gate_open: bool,
) -> Result<Option<usize>> {
    weights.validate()?;
    if !gate_open {
        return Ok(None);
    }
    let target = space.target(&live.finalize()?, None);
    Ok(knn_query(space, &target, weights, 1)?.first().copied())
}
