//! Concatenative playback: segment transforms, envelopes, trigger gates and
//! the block-based voice mixer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AudioBuffer, AudioLibrary, TrainedModel, SAMPLE_RATE};
use crate::dsp;
use crate::error::{Error, Result};

/// Samples per render block. Control changes land on block boundaries.
pub const BLOCK_SIZE: usize = 512;
pub const GRAIN_SECONDS: f64 = 0.046;
pub const GRAIN_HOP_SECONDS: f64 = 0.0115;
pub const ONE_SHOT_RELEASE_MS: f64 = 5.0;

/// Permitted range per numeric playback parameter, as shown to clients.
pub const PARAM_RANGES: &[(&str, &str)] = &[
    ("tempo", "(0, 1000]"),
    ("p_forward", "[0, 1]"),
    ("attack_ms", "[0, 10000]"),
    ("release_ms", "[0, 10000]"),
    ("resample_ratio", "(0, 8]"),
    ("pitch_shift_cents", "[-4800, 4800]"),
];

pub fn param_range(field: &str) -> Option<&'static str> {
    PARAM_RANGES.iter().find(|(f, _)| *f == field).map(|(_, r)| *r)
}

/// Checks one numeric parameter against its range.
pub fn check_param(field: &'static str, value: f64) -> Result<()> {
    let bad = |msg: String| Err(Error::invalid(field, msg));
    if !value.is_finite() {
        return bad(format!("{field} must be a finite number"));
    }
    match field {
        "tempo" if value <= 0.0 => bad("tempo must be > 0".into()),
        "tempo" if value > 1000.0 => bad("tempo must be <= 1000".into()),
        "p_forward" if !(0.0..=1.0).contains(&value) => bad("p_forward must be in [0, 1]".into()),
        "attack_ms" | "release_ms" if !(0.0..=10_000.0).contains(&value) => {
            bad(format!("{field} must be in [0, 10000]"))
        }
        "resample_ratio" if value <= 0.0 => bad("resample_ratio must be > 0".into()),
        "resample_ratio" if value > 8.0 => bad("resample_ratio must be <= 8".into()),
        "pitch_shift_cents" if !(-4800.0..=4800.0).contains(&value) => {
            bad("pitch_shift_cents must be in [-4800, 4800]".into())
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaybackParams {
    /// Node trigger rate in BPM.
    pub tempo: f64,
    /// Forward-transition probability of the oracle walk (congruence).
    pub p_forward: f64,
    pub attack_ms: f64,
    pub release_ms: f64,
    pub reverse: bool,
    pub resample_ratio: f64,
    pub pitch_shift_cents: f64,
    pub one_shot: bool,
    pub tempo_lock: bool,
}

impl Default for PlaybackParams {
    fn default() -> Self {
        PlaybackParams {
            tempo: 120.0,
            p_forward: 0.8,
            attack_ms: 10.0,
            release_ms: 50.0,
            reverse: false,
            resample_ratio: 1.0,
            pitch_shift_cents: 0.0,
            one_shot: false,
            tempo_lock: false,
        }
    }
}

impl PlaybackParams {
    pub fn validate(&self) -> Result<()> {
        check_param("tempo", self.tempo)?;
        check_param("p_forward", self.p_forward)?;
        check_param("attack_ms", self.attack_ms)?;
        check_param("release_ms", self.release_ms)?;
        check_param("resample_ratio", self.resample_ratio)?;
        check_param("pitch_shift_cents", self.pitch_shift_cents)
    }

    /// Seconds between node triggers.
    pub fn interval(&self) -> f64 {
        adjusted_tempo(self.tempo, self.resample_ratio, self.tempo_lock)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackEvent {
    pub onset_seconds: f64,
    pub segment: usize,
    pub params: PlaybackParams,
    pub rendered_seconds: f64,
}

pub fn reverse(samples: &[f32]) -> Vec<f32> {
    samples.iter().rev().copied().collect()
}

/// Changes speed and pitch together: length becomes `round(len / ratio)`.
pub fn resample(samples: &[f32], ratio: f64) -> Result<Vec<f32>> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::invalid("resample_ratio", "resample_ratio must be > 0"));
    }
    if ratio == 1.0 {
        return Ok(samples.to_vec());
    }
    Ok(dsp::resample_linear(samples, ratio))
}

fn read_linear(samples: &[f32], pos: f64) -> f64 {
    let n = samples.len();
    if pos < 0.0 || pos > (n - 1) as f64 {
        return 0.0;
    }
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    let a = samples[i] as f64;
    let b = if i + 1 < n { samples[i + 1] as f64 } else { a };
    a + (b - a) * frac
}

fn read_int(samples: &[f32], pos: i64) -> f64 {
    if pos < 0 || pos >= samples.len() as i64 {
        0.0
    } else {
        samples[pos as usize] as f64
    }
}

/// Granular time stretch by `factor` (output length `round(len * factor)`).
///
/// Hann grains are laid out at a fixed output hop; each grain's read position
/// is nudged within half a hop to best continue the previous grain
/// (waveform-similarity overlap-add), which keeps partials phase-coherent.
pub fn time_stretch(samples: &[f32], factor: f64, sample_rate: u32) -> Vec<f32> {
    let n = samples.len();
    let out_len = ((n as f64 * factor).round() as usize).max(1);
    let hop = ((GRAIN_HOP_SECONDS * sample_rate as f64).round() as usize).max(1);
    let grain = hop * 4;
    let half = (grain / 2) as i64;
    let tolerance = (hop / 2) as i64;
    let window = dsp::hann(grain);
    let mut out = vec![0.0f64; out_len];
    let mut norm = vec![0.0f64; out_len];
    let mut prev_centre: Option<i64> = None;
    let mut k = 0usize;
    loop {
        let out_centre = (k * hop) as i64;
        if out_centre - half >= out_len as i64 {
            break;
        }
        let nominal = (out_centre as f64 / factor).round() as i64;
        let centre = match prev_centre {
            None => nominal,
            Some(prev) => {
                let natural = prev + hop as i64;
                let mut best = (f64::NEG_INFINITY, nominal);
                for delta in -tolerance..=tolerance {
                    let cand = nominal + delta;
                    let mut score = 0.0;
                    for j in (0..grain as i64).step_by(2) {
                        score += read_int(samples, natural - half + j)
                            * read_int(samples, cand - half + j);
                    }
                    if score > best.0 {
                        best = (score, cand);
                    }
                }
                best.1
            }
        };
        for (j, w) in window.iter().enumerate() {
            let t = out_centre - half + j as i64;
            if t < 0 || t >= out_len as i64 {
                continue;
            }
            out[t as usize] += w * read_int(samples, centre - half + j as i64);
            norm[t as usize] += w;
        }
        prev_centre = Some(centre);
        k += 1;
    }
    out.iter()
        .zip(&norm)
        .map(|(o, w)| if *w > 1e-9 { (o / w) as f32 } else { 0.0 })
        .collect()
}

/// Pitch shift by `cents` at constant length: stretch by the frequency
/// factor, then read the result back at that factor.
pub fn pitch_shift(samples: &[f32], cents: f64, sample_rate: u32) -> Vec<f32> {
    if cents == 0.0 || samples.is_empty() {
        return samples.to_vec();
    }
    let factor = (cents / 1200.0).exp2();
    let stretched = time_stretch(samples, factor, sample_rate);
    (0..samples.len())
        .map(|i| read_linear(&stretched, i as f64 * factor) as f32)
        .collect()
}

/// Reverse, then resample, then pitch shift.
pub fn transform(audio: &AudioBuffer, params: &PlaybackParams) -> Result<AudioBuffer> {
    let mut samples = if params.reverse {
        reverse(&audio.samples)
    } else {
        audio.samples.clone()
    };
    samples = resample(&samples, params.resample_ratio)?;
    samples = pitch_shift(&samples, params.pitch_shift_cents, audio.sample_rate);
    Ok(AudioBuffer::mono(samples, audio.sample_rate))
}

/// Linear fade-in and fade-out in place. Fades longer than the buffer are
/// shortened proportionally.
pub fn apply_envelope(samples: &mut [f32], sample_rate: u32, attack_ms: f64, release_ms: f64) {
    let n = samples.len();
    let mut a = (attack_ms.max(0.0) * sample_rate as f64 / 1000.0).round();
    let mut r = (release_ms.max(0.0) * sample_rate as f64 / 1000.0).round();
    if a + r > n as f64 {
        let scale = n as f64 / (a + r);
        a = (a * scale).floor();
        r = (r * scale).floor();
    }
    let (a, r) = (a as usize, r as usize);
    for (i, s) in samples.iter_mut().enumerate() {
        let mut g = 1.0f64;
        if i < a {
            g *= i as f64 / a as f64;
        }
        if r > 0 && i + r >= n {
            g *= (n - 1 - i) as f64 / r as f64;
        }
        if g < 1.0 {
            *s = (*s as f64 * g) as f32;
        }
    }
}

pub fn envelope(buffer: &AudioBuffer, attack_ms: f64, release_ms: f64) -> AudioBuffer {
    let mut out = buffer.clone();
    apply_envelope(&mut out.samples, out.sample_rate, attack_ms, release_ms);
    out
}

/// Seconds between node triggers. Unless locked, faster playback
/// (ratio > 1) shortens the interval by the same factor.
pub fn adjusted_tempo(tempo: f64, resample_ratio: f64, tempo_lock: bool) -> f64 {
    let base = 60.0 / tempo;
    if tempo_lock || resample_ratio <= 0.0 {
        base
    } else {
        base / resample_ratio
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerMode {
    Beat,
    Loop,
    Cont,
    Bow,
    Fence,
}

impl TriggerMode {
    pub const ALL: [TriggerMode; 5] = [
        TriggerMode::Beat,
        TriggerMode::Loop,
        TriggerMode::Cont,
        TriggerMode::Bow,
        TriggerMode::Fence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TriggerMode::Beat => "beat",
            TriggerMode::Loop => "loop",
            TriggerMode::Cont => "cont",
            TriggerMode::Bow => "bow",
            TriggerMode::Fence => "fence",
        }
    }
}

impl fmt::Display for TriggerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TriggerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beat" => Ok(TriggerMode::Beat),
            "loop" => Ok(TriggerMode::Loop),
            "cont" => Ok(TriggerMode::Cont),
            "bow" => Ok(TriggerMode::Bow),
            "fence" => Ok(TriggerMode::Fence),
            "beatmove" | "loopmove" => Err(Error::UnsupportedTriggerMode(format!(
                "{s} is a reserved name without defined behaviour"
            ))),
            other => Err(Error::UnsupportedTriggerMode(format!("unknown trigger mode {other}"))),
        }
    }
}

/// Target movement below this Euclidean distance counts as still.
pub const BOW_EPSILON: f64 = 1e-6;

/// What the gate sees for one analysis frame.
#[derive(Debug, Clone, Copy)]
pub struct GateInput<'a> {
    pub now: f64,
    /// Length of the frame in seconds; ticks inside `[now, now + span)` fire.
    pub span: f64,
    pub interval: f64,
    pub target: &'a [f64],
    pub nearest: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerGate {
    mode: TriggerMode,
    next_tick: Option<f64>,
    busy_until: f64,
    last_target: Option<Vec<f64>>,
    last_nearest: Option<usize>,
}

impl TriggerGate {
    pub fn new(mode: TriggerMode) -> Self {
        TriggerGate {
            mode,
            next_tick: None,
            busy_until: f64::NEG_INFINITY,
            last_target: None,
            last_nearest: None,
        }
    }

    pub fn mode(&self) -> TriggerMode {
        self.mode
    }

    /// The playback started at `onset` lasts `seconds`.
    pub fn note_playback(&mut self, onset: f64, seconds: f64) {
        self.busy_until = onset + seconds;
    }

    /// Whether the current selection should be kept (loop mode only).
    pub fn repeats_selection(&self) -> bool {
        self.mode == TriggerMode::Loop
    }

    /// Returns the onset time when the gate opens for this frame.
    pub fn poll(&mut self, input: &GateInput<'_>) -> Option<f64> {
        let moved = match &self.last_target {
            None => true,
            Some(prev) => {
                let d2: f64 = prev
                    .iter()
                    .zip(input.target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2.sqrt() > BOW_EPSILON
            }
        };
        let changed = self.last_nearest != Some(input.nearest);
        self.last_target = Some(input.target.to_vec());
        self.last_nearest = Some(input.nearest);

        match self.mode {
            TriggerMode::Beat => {
                let tick = *self.next_tick.get_or_insert(input.now);
                if tick < input.now + input.span - 1e-12 {
                    let mut next = tick + input.interval.max(1e-3);
                    while next < input.now {
                        next += input.interval.max(1e-3);
                    }
                    self.next_tick = Some(next);
                    Some(tick.max(input.now))
                } else {
                    None
                }
            }
            TriggerMode::Loop | TriggerMode::Cont => {
                (input.now >= self.busy_until).then_some(input.now)
            }
            TriggerMode::Bow => moved.then_some(input.now),
            TriggerMode::Fence => changed.then_some(input.now),
        }
    }
}

/// Audio for a segment id.
pub trait SegmentSource {
    fn segment_audio(&self, segment: usize) -> Result<AudioBuffer>;
}

/// Segments cut from the model's corpus files.
pub struct CorpusAudio<'a> {
    pub model: &'a TrainedModel,
    pub library: &'a AudioLibrary,
}

impl SegmentSource for CorpusAudio<'_> {
    fn segment_audio(&self, segment: usize) -> Result<AudioBuffer> {
        let seg = self
            .model
            .segments
            .get(segment)
            .ok_or_else(|| Error::invalid("segment", format!("no segment {segment}")))?;
        let source = self.library.source(seg.source_index)?;
        Ok(source.slice(seg.start_sample, seg.length_samples))
    }
}

/// Transformed, enveloped audio ready to mix.
pub fn prepare(audio: &AudioBuffer, params: &PlaybackParams) -> Result<Vec<f32>> {
    let mut out = transform(audio, params)?;
    apply_envelope(&mut out.samples, out.sample_rate, params.attack_ms, params.release_ms);
    Ok(out.samples)
}

#[derive(Debug, Clone)]
struct Cut {
    delay: usize,
    len: usize,
    done: usize,
}

#[derive(Debug, Clone)]
struct Voice {
    samples: Vec<f32>,
    pos: usize,
    delay: usize,
    cut: Option<Cut>,
}

impl Voice {
    fn finished(&self) -> bool {
        self.pos >= self.samples.len() || self.cut.as_ref().is_some_and(|c| c.done >= c.len)
    }
}

/// Sums playing segments block by block.
#[derive(Debug, Clone)]
pub struct Mixer {
    voices: Vec<Voice>,
    release_samples: usize,
}

impl Mixer {
    pub fn new(sample_rate: u32) -> Self {
        Mixer {
            voices: Vec::new(),
            release_samples: ((ONE_SHOT_RELEASE_MS * sample_rate as f64 / 1000.0).round() as usize)
                .max(1),
        }
    }

    pub fn active_voices(&self) -> usize {
        self.voices.len()
    }

    /// Starts `samples` at `offset` samples into the next rendered block.
    /// With `one_shot`, sounding voices fade out over 5 ms from that point.
    pub fn start(&mut self, samples: Vec<f32>, offset: usize, one_shot: bool) {
        if one_shot {
            for v in &mut self.voices {
                if v.cut.is_none() {
                    v.cut = Some(Cut {
                        delay: offset,
                        len: self.release_samples,
                        done: 0,
                    });
                }
            }
        }
        if !samples.is_empty() {
            self.voices.push(Voice {
                samples,
                pos: 0,
                delay: offset,
                cut: None,
            });
        }
    }

    pub fn clear(&mut self) {
        self.voices.clear();
    }

    /// Overwrites `out` with the next block of the mix.
    pub fn render(&mut self, out: &mut [f32]) {
        out.fill(0.0);
        let n = out.len();
        for v in &mut self.voices {
            for (i, o) in out.iter_mut().enumerate().skip(v.delay) {
                if v.pos >= v.samples.len() {
                    break;
                }
                let mut g = 1.0f32;
                if let Some(c) = &mut v.cut {
                    if i >= c.delay {
                        if c.done >= c.len {
                            break;
                        }
                        c.done += 1;
                        g = 1.0 - c.done as f32 / c.len as f32;
                    }
                }
                *o += v.samples[v.pos] * g;
                v.pos += 1;
            }
            v.delay = v.delay.saturating_sub(n);
            if let Some(c) = &mut v.cut {
                c.delay = c.delay.saturating_sub(n);
            }
        }
        self.voices.retain(|v| !v.finished());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderLog {
    pub peak: f64,
    /// Gain applied to avoid clipping, if any was needed.
    pub normalization_gain: Option<f64>,
}

/// Scales the buffer down to full scale if any sample would clip.
pub fn normalize_if_clipping(samples: &mut [f32]) -> RenderLog {
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs() as f64));
    if peak > 1.0 {
        let gain = 1.0 / peak;
        for s in samples.iter_mut() {
            *s = (*s as f64 * gain) as f32;
        }
        log::info!("render peak {peak:.3} exceeds full scale; normalized by {gain:.4}");
        RenderLog {
            peak,
            normalization_gain: Some(gain),
        }
    } else {
        RenderLog {
            peak,
            normalization_gain: None,
        }
    }
}

/// Offline mix of a fixed event list.
pub fn render_plan(
    events: &[PlaybackEvent],
    source: &dyn SegmentSource,
    duration_seconds: f64,
) -> Result<(AudioBuffer, RenderLog)> {
    if !(duration_seconds > 0.0 && duration_seconds.is_finite()) {
        return Err(Error::invalid("duration", "duration must be > 0"));
    }
    let total = (duration_seconds * SAMPLE_RATE as f64).round() as usize;
    let mut order: Vec<&PlaybackEvent> = events.iter().collect();
    order.sort_by(|a, b| a.onset_seconds.total_cmp(&b.onset_seconds));
    let mut prepared = Vec::with_capacity(order.len());
    for e in &order {
        if e.onset_seconds < 0.0 {
            return Err(Error::invalid("onset_seconds", "onset must be >= 0"));
        }
        e.params.validate()?;
        let audio = prepare(&source.segment_audio(e.segment)?, &e.params)?;
        let onset = (e.onset_seconds * SAMPLE_RATE as f64).round() as usize;
        prepared.push((onset, audio, e.params.one_shot));
    }

    let mut mixer = Mixer::new(SAMPLE_RATE);
    let mut out = vec![0.0f32; total];
    let mut next = 0;
    for block_start in (0..total).step_by(BLOCK_SIZE) {
        let block_end = (block_start + BLOCK_SIZE).min(total);
        while next < prepared.len() && prepared[next].0 < block_end {
            let (onset, audio, one_shot) = std::mem::take(&mut prepared[next]);
            mixer.start(audio, onset.saturating_sub(block_start), one_shot);
            next += 1;
        }
        mixer.render(&mut out[block_start..block_end]);
    }
    let log = normalize_if_clipping(&mut out);
    Ok((AudioBuffer::mono(out, SAMPLE_RATE), log))
}
