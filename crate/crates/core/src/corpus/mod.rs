//! Audio I/O, corpus folder scanning, and trained-model persistence.

mod model;
pub mod wav;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::dsp;
use crate::error::{Error, Result};

pub use model::{load_model, save_model, TrainedModel, FORMAT_VERSION};
pub use wav::{load_wav, render_wav, LoadOptions};

pub const SAMPLE_RATE: u32 = 44_100;

/// Mono PCM audio. Multichannel sources are averaged on load.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_channels: u16,
}

impl AudioBuffer {
    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioBuffer {
            samples,
            sample_rate,
            source_channels: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn resampled_to(&self, sample_rate: u32) -> AudioBuffer {
        let step = self.sample_rate as f64 / sample_rate as f64;
        AudioBuffer {
            samples: dsp::resample_linear(&self.samples, step),
            sample_rate,
            source_channels: self.source_channels,
        }
    }

    pub fn slice(&self, start: usize, len: usize) -> AudioBuffer {
        let end = (start + len).min(self.samples.len());
        AudioBuffer::mono(self.samples[start.min(end)..end].to_vec(), self.sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub artist: String,
    pub song: String,
    pub duration_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub total_duration_seconds: f64,
}

impl CorpusManifest {
    pub fn from_entries(root: PathBuf, entries: Vec<ManifestEntry>) -> Self {
        let total_duration_seconds = entries.iter().map(|e| e.duration_seconds).sum();
        CorpusManifest {
            root,
            entries,
            total_duration_seconds,
        }
    }
}

fn is_wav(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

/// Recursively lists `.wav` files under `dir`, ordered by their relative path
/// with `/` separators so the order does not depend on the platform.
pub fn scan_corpus(dir: &Path) -> Result<CorpusManifest> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "corpus directory not found"),
        ));
    }
    let mut found: Vec<(String, PathBuf)> = Vec::new();
    for entry in WalkDir::new(dir).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(dir).to_path_buf();
            Error::io(path, e.into())
        })?;
        if entry.file_type().is_file() && is_wav(entry.path()) {
            let rel = entry.path().strip_prefix(dir).unwrap_or(entry.path());
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            found.push((key, entry.path().to_path_buf()));
        }
    }
    if found.is_empty() {
        return Err(Error::EmptyCorpus(dir.to_path_buf()));
    }
    found.sort_by(|a, b| a.0.cmp(&b.0));

    let mut entries = Vec::with_capacity(found.len());
    for (_, path) in found {
        let info = wav::probe_wav(&path)?;
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        entries.push(ManifestEntry {
            path,
            artist: stem.clone(),
            song: stem,
            duration_seconds: info.duration_seconds(),
        });
    }
    Ok(CorpusManifest::from_entries(dir.to_path_buf(), entries))
}

/// Lazily loaded, cached source audio for a manifest.
///
/// Missing files only fail when a segment from them is actually requested.
#[derive(Debug, Clone, Default)]
pub struct AudioLibrary {
    sources: Arc<Mutex<HashMap<usize, Arc<AudioBuffer>>>>,
    paths: Vec<PathBuf>,
    options: LoadOptions,
}

impl AudioLibrary {
    pub fn for_manifest(manifest: &CorpusManifest, options: LoadOptions) -> Self {
        for entry in &manifest.entries {
            if !entry.path.exists() {
                log::warn!("corpus file {} is missing; segments from it cannot play", entry.path.display());
            }
        }
        AudioLibrary {
            sources: Arc::default(),
            paths: manifest.entries.iter().map(|e| e.path.clone()).collect(),
            options,
        }
    }

    /// Library backed by in-memory buffers (one per manifest entry).
    pub fn from_buffers(buffers: Vec<AudioBuffer>) -> Self {
        let sources = buffers
            .into_iter()
            .enumerate()
            .map(|(i, b)| (i, Arc::new(b)))
            .collect();
        AudioLibrary {
            sources: Arc::new(Mutex::new(sources)),
            paths: Vec::new(),
            options: LoadOptions::default(),
        }
    }

    /// Points a source at a new location, e.g. after the corpus folder moved.
    pub fn relocate(&mut self, source_index: usize, path: PathBuf) {
        if source_index < self.paths.len() {
            self.paths[source_index] = path;
            self.sources.lock().unwrap().remove(&source_index);
        }
    }

    pub fn source(&self, source_index: usize) -> Result<Arc<AudioBuffer>> {
        if let Some(buf) = self.sources.lock().unwrap().get(&source_index) {
            return Ok(Arc::clone(buf));
        }
        let path = self
            .paths
            .get(source_index)
            .ok_or_else(|| Error::InvalidModel(format!("no source with index {source_index}")))?;
        let buf = Arc::new(load_wav(path, self.options)?);
        self.sources
            .lock()
            .unwrap()
            .insert(source_index, Arc::clone(&buf));
        Ok(buf)
    }
}
