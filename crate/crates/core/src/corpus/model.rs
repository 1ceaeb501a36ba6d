//! Trained model and its folder format.
//!
//! ```text
//! model/
//!   model.json            manifest, segments + stats, SOM, normalization, sequences
//!   features.f32le        numData x 31 little-endian f32, row-major
//!   oracle_nodes.json     factor oracle over SOM node ids
//!   oracle_segments.json  factor oracle over segment ids
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusManifest;
use crate::error::{Error, Result};
use crate::features::{SegmentStats, Vector31, VECTOR_DIMS};
use crate::oracle::{FactorOracle, OracleTables, Symbol};
use crate::segmentation::Segment;
use crate::som::{Normalization, Som};

pub const FORMAT_VERSION: u32 = 1;

const MODEL_FILE: &str = "model.json";
const FEATURES_FILE: &str = "features.f32le";
const ORACLE_NODES_FILE: &str = "oracle_nodes.json";
const ORACLE_SEGMENTS_FILE: &str = "oracle_segments.json";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub format_version: u32,
    pub seed: u64,
    pub manifest: CorpusManifest,
    pub segments: Vec<Segment>,
    /// Frame statistics per segment (parallel to `segments`).
    pub stats: Vec<SegmentStats>,
    /// Row-major `segments.len() x 31` segment vectors.
    pub feature_matrix: Vec<f32>,
    pub normalization: Normalization,
    pub som: Som,
    pub node_sequence: Vec<usize>,
    pub oracle_nodes: FactorOracle,
    pub segment_sequence: Vec<usize>,
    pub oracle_segments: FactorOracle,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    seed: u64,
    num_data: usize,
    vector_dims: usize,
    manifest: CorpusManifest,
    segments: Vec<Segment>,
    stats: Vec<SegmentStats>,
    normalization: Normalization,
    som: Som,
    node_sequence: Vec<usize>,
    segment_sequence: Vec<usize>,
}

impl TrainedModel {
    pub fn num_data(&self) -> usize {
        self.segments.len()
    }

    pub fn vector(&self, segment: usize) -> Vector31 {
        let row = &self.feature_matrix[segment * VECTOR_DIMS..(segment + 1) * VECTOR_DIMS];
        let mut v = [0.0; VECTOR_DIMS];
        for (o, &x) in v.iter_mut().zip(row) {
            *o = x as f64;
        }
        Vector31(v)
    }

    /// Segment vectors mapped into the SOM's [-1, 1] space.
    pub fn normalized_vectors(&self) -> Vec<Vec<f64>> {
        (0..self.num_data())
            .map(|i| self.normalization.apply(self.vector(i).as_slice()))
            .collect()
    }

    /// Segment ids per SOM node.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.som.node_count()];
        for s in &self.segments {
            if let Some(n) = s.cluster_node {
                out[n].push(s.id);
            }
        }
        out
    }

    pub fn artist_song(&self, segment: usize) -> (&str, &str) {
        let entry = &self.manifest.entries[self.segments[segment].source_index];
        (&entry.artist, &entry.song)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_data();
        if n == 0 {
            return Err(Error::InvalidModel("model has no segments".into()));
        }
        if self.feature_matrix.len() != n * VECTOR_DIMS || self.stats.len() != n {
            return Err(Error::InvalidModel(
                "feature matrix or stats do not match segment count".into(),
            ));
        }
        self.som.validate()?;
        if self.normalization.dims() != VECTOR_DIMS || self.som.dims != VECTOR_DIMS {
            return Err(Error::InvalidModel("descriptor dimension is not 31".into()));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.id != i {
                return Err(Error::InvalidModel(format!("segment {i} has id {}", s.id)));
            }
            if s.source_index >= self.manifest.entries.len() {
                return Err(Error::InvalidModel(format!("segment {i} has no source")));
            }
            match s.cluster_node {
                Some(node) if node < self.som.node_count() => {}
                _ => return Err(Error::InvalidModel(format!("segment {i} has no valid node"))),
            }
        }
        if self.node_sequence.iter().any(|&n| n >= self.som.node_count())
            || self.segment_sequence.iter().any(|&s| s >= n)
        {
            return Err(Error::InvalidModel("sequence symbol out of range".into()));
        }
        let as_symbols = |v: &[usize]| v.iter().map(|&x| x as Symbol).collect::<Vec<_>>();
        if self.oracle_nodes.sequence() != as_symbols(&self.node_sequence)
            || self.oracle_segments.sequence() != as_symbols(&self.segment_sequence)
        {
            return Err(Error::InvalidModel(
                "oracle was not built from the stored sequence".into(),
            ));
        }
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn save_model(model: &TrainedModel, dir: &Path) -> Result<()> {
    model.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = ModelFile {
        format_version: model.format_version,
        seed: model.seed,
        num_data: model.num_data(),
        vector_dims: VECTOR_DIMS,
        manifest: model.manifest.clone(),
        segments: model.segments.clone(),
        stats: model.stats.clone(),
        normalization: model.normalization.clone(),
        som: model.som.clone(),
        node_sequence: model.node_sequence.clone(),
        segment_sequence: model.segment_sequence.clone(),
    };
    write_json(&dir.join(MODEL_FILE), &file)?;
    let bytes: Vec<u8> = model
        .feature_matrix
        .iter()
        .flat_map(|x| x.to_le_bytes())
        .collect();
    let path = dir.join(FEATURES_FILE);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join(ORACLE_NODES_FILE), &model.oracle_nodes.to_tables())?;
    write_json(&dir.join(ORACLE_SEGMENTS_FILE), &model.oracle_segments.to_tables())?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<TrainedModel> {
    let model_path = dir.join(MODEL_FILE);
    let raw: serde_json::Value = read_json(&model_path)?;
    let version = raw
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::InvalidModel("missing format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version as u32,
            expected: FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(raw).map_err(|e| Error::Json {
        path: model_path.clone(),
        source: e,
    })?;
    if file.vector_dims != VECTOR_DIMS || file.num_data != file.segments.len() {
        return Err(Error::InvalidModel("header does not match contents".into()));
    }

    let features_path = dir.join(FEATURES_FILE);
    let bytes = fs::read(&features_path).map_err(|e| Error::io(&features_path, e))?;
    let expected = file.num_data * VECTOR_DIMS * 4;
    if bytes.len() != expected {
        return Err(Error::MatrixLengthMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let feature_matrix = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    let nodes: OracleTables = read_json(&dir.join(ORACLE_NODES_FILE))?;
    let segs: OracleTables = read_json(&dir.join(ORACLE_SEGMENTS_FILE))?;

    let model = TrainedModel {
        format_version: file.format_version,
        seed: file.seed,
        manifest: file.manifest,
        segments: file.segments,
        stats: file.stats,
        feature_matrix,
        normalization: file.normalization,
        som: file.som,
        node_sequence: file.node_sequence,
        oracle_nodes: FactorOracle::from_tables(&nodes)?,
        segment_sequence: file.segment_sequence,
        oracle_segments: FactorOracle::from_tables(&segs)?,
    };
    model.validate()?;
    for entry in &model.manifest.entries {
        if !entry.path.exists() {
            log::warn!("model references missing audio {}", entry.path.display());
        }
    }
    Ok(model)
}
