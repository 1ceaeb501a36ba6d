//! Deterministic synthetic corpora for tests and demos.
//!
//! Each file is a sequence of separated notes with sharp attacks, so onset
//! segmentation yields exactly one segment per note.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{render_wav, AudioBuffer, CorpusManifest, ManifestEntry, SAMPLE_RATE};
use crate::error::Result;

pub const NOTE_SECONDS: f64 = 0.4;
pub const GAP_SECONDS: f64 = 0.1;
pub const TIMBRES: usize = 4;

const PITCHES: [f64; 8] = [220.0, 261.6, 293.7, 329.6, 392.0, 440.0, 523.3, 587.3];

pub fn sine(freq: f64, seconds: f64, amplitude: f64) -> AudioBuffer {
    let n = (seconds * SAMPLE_RATE as f64).round() as usize;
    let samples = (0..n)
        .map(|i| (amplitude * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin()) as f32)
        .collect();
    AudioBuffer::mono(samples, SAMPLE_RATE)
}

/// One note of `timbre` (0 sine, 1 sawtooth-like, 2 odd harmonics, 3 bright
/// bell-like partials) with a 5 ms attack, exponential decay and a 20 ms
/// release so the note end does not click.
pub fn note(freq: f64, timbre: usize, seconds: f64) -> Vec<f32> {
    let n = (seconds * SAMPLE_RATE as f64).round() as usize;
    let attack = (0.005 * SAMPLE_RATE as f64) as usize;
    let release = (0.020 * SAMPLE_RATE as f64) as usize;
    let partials: Vec<(f64, f64)> = match timbre % TIMBRES {
        0 => vec![(1.0, 1.0)],
        1 => (1..=10).map(|h| (h as f64, 1.0 / h as f64)).collect(),
        2 => (1..=10).step_by(2).map(|h| (h as f64, 1.0 / h as f64)).collect(),
        _ => vec![(1.0, 0.6), (2.76, 0.5), (5.4, 0.4), (8.93, 0.3)],
    };
    let norm: f64 = partials.iter().map(|p| p.1).sum();
    (0..n)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE as f64;
            let mut env = if i < attack {
                i as f64 / attack as f64
            } else {
                (-(t - attack as f64 / SAMPLE_RATE as f64) * 4.0).exp()
            };
            if i + release > n {
                env *= (n - i) as f64 / release as f64;
            }
            let tone: f64 = partials
                .iter()
                .filter(|(h, _)| h * freq < 20_000.0)
                .map(|(h, a)| a * (2.0 * PI * h * freq * t).sin())
                .sum();
            (0.5 * env * tone / norm) as f32
        })
        .collect()
}

/// Notes separated by silence.
pub fn note_sequence(notes: &[(f64, usize)]) -> AudioBuffer {
    let gap = (GAP_SECONDS * SAMPLE_RATE as f64).round() as usize;
    let mut samples = Vec::new();
    for &(freq, timbre) in notes {
        samples.extend(note(freq, timbre, NOTE_SECONDS));
        samples.extend(std::iter::repeat_n(0.0, gap));
    }
    AudioBuffer::mono(samples, SAMPLE_RATE)
}

/// Seeded `(frequency, timbre)` lists, one per file.
pub fn corpus_notes(files: usize, notes_per_file: usize, seed: u64) -> Vec<Vec<(f64, usize)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..files)
        .map(|_| {
            (0..notes_per_file)
                .map(|_| {
                    (
                        PITCHES[rng.random_range(0..PITCHES.len())],
                        rng.random_range(0..TIMBRES),
                    )
                })
                .collect()
        })
        .collect()
}

/// `files` buffers of `notes_per_file` seeded random notes each.
pub fn corpus_buffers(files: usize, notes_per_file: usize, seed: u64) -> Vec<AudioBuffer> {
    corpus_notes(files, notes_per_file, seed)
        .iter()
        .map(|notes| note_sequence(notes))
        .collect()
}

/// In-memory corpus with manifest paths under `mem/`.
pub fn memory_corpus(files: usize, notes_per_file: usize, seed: u64) -> (CorpusManifest, Vec<AudioBuffer>) {
    let buffers = corpus_buffers(files, notes_per_file, seed);
    let entries = buffers
        .iter()
        .enumerate()
        .map(|(i, b)| ManifestEntry {
            path: PathBuf::from(format!("mem/take_{i:02}.wav")),
            artist: format!("take_{i:02}"),
            song: format!("take_{i:02}"),
            duration_seconds: b.duration_seconds(),
        })
        .collect();
    (CorpusManifest::from_entries(PathBuf::from("mem"), entries), buffers)
}

/// Writes a synthetic corpus as `take_NN.wav` files into `dir`.
pub fn write_corpus(dir: &Path, files: usize, notes_per_file: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    corpus_buffers(files, notes_per_file, seed)
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let path = dir.join(format!("take_{i:02}.wav"));
            render_wav(b, &path)?;
            Ok(path)
        })
        .collect()
}
