//! Scatter-plot view of the corpus: one point per segment.

use corpus_agent_core::mosaic::{axis_index, axis_name, DescriptorSpace, CENTROID_AXIS, DURATION_AXIS, F0_AXIS, PERIODICITY_AXIS};
use corpus_agent_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScatterAxes {
    pub x: usize,
    pub y: usize,
}

impl Default for ScatterAxes {
    fn default() -> Self {
        ScatterAxes {
            x: CENTROID_AXIS,
            y: PERIODICITY_AXIS,
        }
    }
}

impl ScatterAxes {
    /// Axes by descriptor name; a missing name keeps the default.
    pub fn named(x: Option<&str>, y: Option<&str>) -> Result<Self> {
        let pick = |name: Option<&str>, field: &'static str, default: usize| match name {
            None => Ok(default),
            Some(n) => axis_index(n).ok_or_else(|| Error::InvalidParameter {
                field,
                message: format!("unknown descriptor '{n}'"),
            }),
        };
        let d = ScatterAxes::default();
        Ok(ScatterAxes {
            x: pick(x, "x", d.x)?,
            y: pick(y, "y", d.y)?,
        })
    }

    pub fn names(&self) -> (&'static str, &'static str) {
        (axis_name(self.x).unwrap_or("?"), axis_name(self.y).unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub segment: usize,
    pub x: f64,
    pub y: f64,
    /// f0 mean scaled to [0, 1] over the corpus.
    pub opacity: f64,
    /// Duration scaled to [0, 1] over the corpus.
    pub size: f64,
}

/// Min-max scaling to [0, 1]; a constant column maps to 0.5.
fn unit_scale(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.5 })
        .collect()
}

/// Raw descriptor values on x and y, with opacity and size scaled.
pub fn scatter_data(space: &DescriptorSpace, axes: ScatterAxes) -> Result<Vec<ScatterPoint>> {
    if space.is_empty() {
        return Err(Error::Untrained);
    }
    let xs = space.raw_axis(axes.x)?;
    let ys = space.raw_axis(axes.y)?;
    let opacity = unit_scale(&space.raw_axis(F0_AXIS)?);
    let size = unit_scale(&space.raw_axis(DURATION_AXIS)?);
    Ok((0..space.len())
        .map(|i| ScatterPoint {
            segment: i,
            x: xs[i],
            y: ys[i],
            opacity: opacity[i],
            size: size[i],
        })
        .collect())
}
