//! Minimal RIFF/WAVE codec: 16-bit PCM and 32-bit float in, 16-bit PCM out.

use std::fs;
use std::path::Path;

use crate::corpus::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub format_tag: u16,
    pub channels: u16,
    pub sample_rate: u32,
    pub bits_per_sample: u16,
    /// Frames (samples per channel) in the data chunk.
    pub frames: usize,
}

impl WavInfo {
    pub fn duration_seconds(&self) -> f64 {
        self.frames as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Convert non-44.1 kHz files instead of rejecting them.
    pub resample: bool,
}

struct Parsed<'a> {
    info: WavInfo,
    data: &'a [u8],
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse(bytes: &[u8]) -> Result<Parsed<'_>> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedWav("missing RIFF/WAVE header".into()));
    }
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        // tolerate a data chunk whose declared size overruns the file (streamed writers)
        let body_end = (body_start + size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::MalformedWav("fmt chunk truncated".into()));
                }
                let mut tag = read_u16(body, 0);
                let channels = read_u16(body, 2);
                let rate = read_u32(body, 4);
                let bits = read_u16(body, 14);
                if tag == FORMAT_EXTENSIBLE && body.len() >= 26 {
                    tag = read_u16(body, 24);
                }
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }
    let (format_tag, channels, sample_rate, bits) =
        fmt.ok_or_else(|| Error::MalformedWav("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedWav("no data chunk".into()))?;
    let supported = matches!((format_tag, bits), (FORMAT_PCM, 16) | (FORMAT_IEEE_FLOAT, 32));
    if !supported {
        return Err(Error::UnsupportedCodec {
            format_tag,
            bits,
        });
    }
    if channels == 0 || sample_rate == 0 {
        return Err(Error::MalformedWav("zero channels or sample rate".into()));
    }
    let frame_bytes = channels as usize * bits as usize / 8;
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(Error::EmptyAudio);
    }
    Ok(Parsed {
        info: WavInfo {
            format_tag,
            channels,
            sample_rate,
            bits_per_sample: bits,
            frames,
        },
        data: &data[..frames * frame_bytes],
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::AudioNotFound(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

/// Reads only the header; used for manifest durations.
pub fn probe_wav(path: &Path) -> Result<WavInfo> {
    let bytes = read_file(path)?;
    Ok(parse(&bytes)?.info)
}

/// Decodes a WAV byte image into a mono buffer.
pub fn decode_wav(bytes: &[u8], options: LoadOptions) -> Result<AudioBuffer> {
    let Parsed { info, data } = parse(bytes)?;
    let channels = info.channels as usize;
    let mut mono = Vec::with_capacity(info.frames);
    match info.bits_per_sample {
        16 => {
            for frame in data.chunks_exact(2 * channels) {
                let sum: f64 = frame
                    .chunks_exact(2)
                    .map(|s| i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0)
                    .sum();
                mono.push((sum / channels as f64) as f32);
            }
        }
        _ => {
            for frame in data.chunks_exact(4 * channels) {
                let sum: f64 = frame
                    .chunks_exact(4)
                    .map(|s| f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64)
                    .sum();
                mono.push((sum / channels as f64).clamp(-1.0, 1.0) as f32);
            }
        }
    }
    if mono.iter().any(|s| !s.is_finite()) {
        return Err(Error::MalformedWav("non-finite sample".into()));
    }
    let buffer = AudioBuffer {
        samples: mono,
        sample_rate: info.sample_rate,
        source_channels: info.channels,
    };
    if info.sample_rate == SAMPLE_RATE {
        Ok(buffer)
    } else if options.resample {
        Ok(buffer.resampled_to(SAMPLE_RATE))
    } else {
        Err(Error::NonStandardSampleRate(info.sample_rate))
    }
}

pub fn load_wav(path: &Path, options: LoadOptions) -> Result<AudioBuffer> {
    let bytes = read_file(path)?;
    decode_wav(&bytes, options)
}

/// Encodes 16-bit mono PCM. Samples are clamped to [-1, 1] and rounded to the
/// nearest step of 1/32768.
pub fn encode_wav(buffer: &AudioBuffer) -> Result<Vec<u8>> {
    if buffer.samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if buffer.samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("samples", "non-finite sample in render buffer"));
    }
    let resampled;
    let buffer = if buffer.sample_rate == SAMPLE_RATE {
        buffer
    } else {
        resampled = buffer.resampled_to(SAMPLE_RATE);
        &resampled
    };
    let data_len = buffer.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &buffer.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    Ok(out)
}

pub fn quantize(sample: f32) -> i16 {
    let scaled = (sample.clamp(-1.0, 1.0) as f64 * 32768.0).round();
    scaled.clamp(-32768.0, 32767.0) as i16
}

pub fn render_wav(buffer: &AudioBuffer, path: &Path) -> Result<()> {
    let bytes = encode_wav(buffer)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
