//! Framewise machine listening.
//!
//! Every frame is a 1024-sample window advanced by 512 samples at 44.1 kHz.
//! Per frame we extract 13 MFCCs (coefficients 1..=13, the energy term is
//! dropped), A-weighted loudness in dBFS, spectral flatness in four octave
//! bands, spectral decrease, harmonic tristimulus, centroid, periodicity and
//! f0. [`RunningStats`] accumulates them over a segment (or over the agent's
//! own output between two triggers) and [`SegmentStats`] carries the final
//! means, population standard deviations and the two affect estimates.
//!
//! The 31-value segment vector ([`Vector31`]) is laid out as:
//!
//! | index  | content                                                        |
//! |--------|----------------------------------------------------------------|
//! | 0..13  | MFCC 1..13 means                                                |
//! | 13     | loudness mean                                                  |
//! | 14..18 | flatness means, bands 250-500, 500-1000, 1000-2000, 2000-4000 Hz |
//! | 18     | spectral decrease mean                                         |
//! | 19..22 | tristimulus 1..3 means                                         |
//! | 22..29 | stds of loudness, MFCC 1, 3, 5, 11, decrease, tristimulus 2     |
//! | 29, 30 | valence, arousal                                               |

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::corpus::{AudioBuffer, SAMPLE_RATE};
use crate::dsp;
use crate::error::{Error, Result};

pub const WINDOW_SIZE: usize = 1024;
pub const HOP_SIZE: usize = 512;
pub const NUM_BINS: usize = WINDOW_SIZE / 2 + 1;
pub const NUM_MFCC: usize = 13;
pub const NUM_MEL_BANDS: usize = 40;
pub const LOUDNESS_FLOOR_DB: f64 = -96.0;
pub const FLATNESS_BANDS: [(f64, f64); 4] =
    [(250.0, 500.0), (500.0, 1000.0), (1000.0, 2000.0), (2000.0, 4000.0)];
pub const F0_MIN_HZ: f64 = 50.0;
pub const F0_MAX_HZ: f64 = 2000.0;
pub const VOICING_THRESHOLD: f64 = 0.3;
/// Zwicker critical-band edges in Hz; the last band runs to Nyquist.
pub const BARK_EDGES: [f64; 25] = [
    0.0, 100.0, 200.0, 300.0, 400.0, 510.0, 630.0, 770.0, 920.0, 1080.0, 1270.0, 1480.0, 1720.0,
    2000.0, 2320.0, 2700.0, 3150.0, 3700.0, 4400.0, 5300.0, 6400.0, 7700.0, 9500.0, 12000.0,
    15500.0,
];
pub const NUM_BARK_BANDS: usize = BARK_EDGES.len();

const MEL_LOG_FLOOR: f64 = 1e-10;
const POWER_FLOOR: f64 = 1e-20;

/// Number of scalar descriptors per frame.
pub const FRAME_DIMS: usize = 25;

/// Index of each scalar descriptor inside a flattened frame.
pub mod dim {
    pub const MFCC: usize = 0;
    pub const LOUDNESS: usize = 13;
    pub const FLATNESS: usize = 14;
    pub const DECREASE: usize = 18;
    pub const TRISTIMULUS: usize = 19;
    pub const CENTROID: usize = 22;
    pub const PERIODICITY: usize = 23;
    pub const F0: usize = 24;

    /// MFCC coefficient `n` (1-based, as printed in descriptor names).
    pub const fn mfcc(n: usize) -> usize {
        MFCC + n - 1
    }
}

pub const FRAME_DIM_NAMES: [&str; FRAME_DIMS] = [
    "mfcc_1", "mfcc_2", "mfcc_3", "mfcc_4", "mfcc_5", "mfcc_6", "mfcc_7", "mfcc_8", "mfcc_9",
    "mfcc_10", "mfcc_11", "mfcc_12", "mfcc_13", "loudness", "flatness_1", "flatness_2",
    "flatness_3", "flatness_4", "decrease", "tristimulus_1", "tristimulus_2", "tristimulus_3",
    "centroid", "periodicity", "f0",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub mfcc: [f64; NUM_MFCC],
    pub loudness: f64,
    pub flatness: [f64; 4],
    pub spectral_decrease: f64,
    pub tristimulus: [f64; 3],
    pub centroid: f64,
    pub periodicity: f64,
    pub f0: f64,
}

impl FrameFeatures {
    pub fn to_array(&self) -> [f64; FRAME_DIMS] {
        let mut out = [0.0; FRAME_DIMS];
        out[dim::MFCC..dim::MFCC + NUM_MFCC].copy_from_slice(&self.mfcc);
        out[dim::LOUDNESS] = self.loudness;
        out[dim::FLATNESS..dim::FLATNESS + 4].copy_from_slice(&self.flatness);
        out[dim::DECREASE] = self.spectral_decrease;
        out[dim::TRISTIMULUS..dim::TRISTIMULUS + 3].copy_from_slice(&self.tristimulus);
        out[dim::CENTROID] = self.centroid;
        out[dim::PERIODICITY] = self.periodicity;
        out[dim::F0] = self.f0;
        out
    }

    pub fn from_array(a: &[f64; FRAME_DIMS]) -> Self {
        let mut f = FrameFeatures {
            mfcc: [0.0; NUM_MFCC],
            loudness: a[dim::LOUDNESS],
            flatness: [0.0; 4],
            spectral_decrease: a[dim::DECREASE],
            tristimulus: [0.0; 3],
            centroid: a[dim::CENTROID],
            periodicity: a[dim::PERIODICITY],
            f0: a[dim::F0],
        };
        f.mfcc.copy_from_slice(&a[dim::MFCC..dim::MFCC + NUM_MFCC]);
        f.flatness.copy_from_slice(&a[dim::FLATNESS..dim::FLATNESS + 4]);
        f.tristimulus
            .copy_from_slice(&a[dim::TRISTIMULUS..dim::TRISTIMULUS + 3]);
        f
    }
}

/// One analysis frame: the raw samples and their windowed magnitude spectrum.
#[derive(Debug, Clone)]
pub struct Frame {
    pub samples: Vec<f64>,
    pub magnitude: Vec<f64>,
}

/// Precomputed tables for frame analysis. Cheap to share; see [`Analyzer::shared`].
pub struct Analyzer {
    fft: Arc<dyn Fft<f64>>,
    autocorr_fft: Arc<dyn Fft<f64>>,
    autocorr_ifft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    window_power: f64,
    /// Sparse triangular filters: (first bin, weights).
    mel_filters: Vec<(usize, Vec<f64>)>,
    dct: Vec<[f64; NUM_MEL_BANDS]>,
    a_weight_power: Vec<f64>,
}

pub fn bin_frequency(bin: usize) -> f64 {
    bin as f64 * SAMPLE_RATE as f64 / WINDOW_SIZE as f64
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// A-weighting as a linear power gain (IEC 61672, normalized to 0 dB at 1 kHz).
fn a_weighting_power(f: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let f2 = f * f;
    let ra = 12194.0f64.powi(2) * f2 * f2
        / ((f2 + 20.6f64.powi(2))
            * ((f2 + 107.7f64.powi(2)) * (f2 + 737.9f64.powi(2))).sqrt()
            * (f2 + 12194.0f64.powi(2)));
    let gain = ra * 10f64.powf(2.0 / 20.0);
    gain * gain
}

impl Analyzer {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(WINDOW_SIZE);
        let autocorr_fft = planner.plan_fft_forward(2 * WINDOW_SIZE);
        let autocorr_ifft = planner.plan_fft_inverse(2 * WINDOW_SIZE);
        let window = dsp::hann(WINDOW_SIZE);
        let window_power = window.iter().map(|w| w * w).sum();

        let nyquist = SAMPLE_RATE as f64 / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..NUM_MEL_BANDS + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (NUM_MEL_BANDS + 1) as f64))
            .collect();
        let mel_filters = (0..NUM_MEL_BANDS)
            .map(|b| {
                let (lo, center, hi) = (edges[b], edges[b + 1], edges[b + 2]);
                let weights: Vec<(usize, f64)> = (0..NUM_BINS)
                    .filter_map(|k| {
                        let f = bin_frequency(k);
                        let w = if f > lo && f <= center {
                            (f - lo) / (center - lo)
                        } else if f > center && f < hi {
                            (hi - f) / (hi - center)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect();
                let first = weights.first().map_or(0, |w| w.0);
                (first, weights.into_iter().map(|w| w.1).collect())
            })
            .collect();

        let scale = (2.0 / NUM_MEL_BANDS as f64).sqrt();
        let dct = (1..=NUM_MFCC)
            .map(|k| {
                let mut row = [0.0; NUM_MEL_BANDS];
                for (n, v) in row.iter_mut().enumerate() {
                    *v = scale * (PI * k as f64 * (n as f64 + 0.5) / NUM_MEL_BANDS as f64).cos();
                }
                row
            })
            .collect();

        let a_weight_power = (0..NUM_BINS).map(|k| a_weighting_power(bin_frequency(k))).collect();

        Analyzer {
            fft,
            autocorr_fft,
            autocorr_ifft,
            window,
            window_power,
            mel_filters,
            dct,
            a_weight_power,
        }
    }

    /// Process-wide analyzer with tables built on first use.
    pub fn shared() -> &'static Analyzer {
        static SHARED: OnceLock<Analyzer> = OnceLock::new();
        SHARED.get_or_init(Analyzer::new)
    }

    /// Hann-windowed magnitude spectrum of one 1024-sample frame.
    pub fn spectrum(&self, samples: &[f64]) -> Vec<f64> {
        debug_assert_eq!(samples.len(), WINDOW_SIZE);
        let mut buf: Vec<Complex<f64>> = samples
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        buf[..NUM_BINS].iter().map(|c| c.norm()).collect()
    }

    pub fn frame(&self, samples: Vec<f64>) -> Frame {
        let magnitude = self.spectrum(&samples);
        Frame { samples, magnitude }
    }

    pub fn mfcc(&self, power: &[f64]) -> [f64; NUM_MFCC] {
        let log_mel: Vec<f64> = self
            .mel_filters
            .iter()
            .map(|(first, w)| {
                let e: f64 = w.iter().zip(&power[*first..]).map(|(w, p)| w * p).sum();
                e.max(MEL_LOG_FLOOR).ln()
            })
            .collect();
        let mut out = [0.0; NUM_MFCC];
        for (c, row) in out.iter_mut().zip(&self.dct) {
            *c = row.iter().zip(&log_mel).map(|(a, b)| a * b).sum();
        }
        out
    }

    /// A-weighted mean-square level in dBFS (a full-scale sine reads about -3 dB).
    pub fn loudness(&self, power: &[f64]) -> f64 {
        let last = NUM_BINS - 1;
        let weighted: f64 = power
            .iter()
            .zip(&self.a_weight_power)
            .enumerate()
            .map(|(k, (p, a))| if k == 0 || k == last { p * a } else { 2.0 * p * a })
            .sum();
        let mean_square = weighted / (WINDOW_SIZE as f64 * self.window_power);
        if mean_square <= 0.0 {
            return LOUDNESS_FLOOR_DB;
        }
        (10.0 * mean_square.log10()).max(LOUDNESS_FLOOR_DB)
    }

    /// Normalized autocorrelation peak: returns (periodicity, f0 in Hz).
    pub fn periodicity(&self, samples: &[f64]) -> (f64, f64) {
        let n = samples.len();
        let energy: f64 = samples.iter().map(|x| x * x).sum();
        if energy < 1e-12 {
            return (0.0, 0.0);
        }
        let mut buf: Vec<Complex<f64>> = samples
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(2 * WINDOW_SIZE)
            .collect();
        self.autocorr_fft.process(&mut buf);
        for c in buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.autocorr_ifft.process(&mut buf);
        let scale = 1.0 / (2 * WINDOW_SIZE) as f64;

        // prefix[i] = sum of x^2 over [0, i)
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        for x in samples {
            prefix.push(prefix.last().unwrap() + x * x);
        }
        let sr = SAMPLE_RATE as f64;
        let lag_min = (sr / F0_MAX_HZ).ceil() as usize;
        let lag_max = ((sr / F0_MIN_HZ).floor() as usize).min(n - 2);
        let nccf = |lag: usize| -> f64 {
            let head = prefix[n - lag];
            let tail = prefix[n] - prefix[lag];
            let denom = (head * tail).sqrt();
            if denom < 1e-12 {
                0.0
            } else {
                buf[lag].re * scale / denom
            }
        };
        let r: Vec<f64> = (lag_min - 1..=lag_max + 1).map(nccf).collect();
        let at = |lag: usize| r[lag + 1 - lag_min];

        let peaks: Vec<usize> = (lag_min..=lag_max)
            .filter(|&l| at(l) > 0.0 && at(l) >= at(l - 1) && at(l) >= at(l + 1))
            .collect();
        let Some(best) = peaks.iter().map(|&l| at(l)).reduce(f64::max) else {
            return (0.0, 0.0);
        };
        // shortest lag close to the best peak avoids octave-down errors
        let lag = peaks.into_iter().find(|&l| at(l) >= 0.9 * best).unwrap();
        let periodicity = at(lag).clamp(0.0, 1.0);
        if periodicity < VOICING_THRESHOLD {
            return (periodicity, 0.0);
        }
        let (a, b, c) = (at(lag - 1), at(lag), at(lag + 1));
        let curvature = a - 2.0 * b + c;
        let offset = if curvature.abs() > 1e-12 {
            (0.5 * (a - c) / curvature).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        (periodicity, sr / (lag as f64 + offset))
    }

    /// All descriptors of one frame.
    pub fn describe(&self, magnitude: &[f64], samples: &[f64]) -> FrameFeatures {
        let power: Vec<f64> = magnitude.iter().map(|m| m * m).collect();
        let (periodicity, f0) = self.periodicity(samples);
        FrameFeatures {
            mfcc: self.mfcc(&power),
            loudness: self.loudness(&power),
            flatness: band_flatness(&power),
            spectral_decrease: spectral_decrease(magnitude),
            tristimulus: tristimulus(&power, f0),
            centroid: spectral_centroid(magnitude),
            periodicity,
            f0,
        }
    }
}

impl Default for Analyzer {
    fn default() -> Self {
        Analyzer::new()
    }
}

pub fn frame_count(len: usize) -> usize {
    if len < WINDOW_SIZE {
        0
    } else {
        (len - WINDOW_SIZE) / HOP_SIZE + 1
    }
}

/// Splits a 44.1 kHz buffer into hop-spaced frames with their spectra.
pub fn stft_frames(buffer: &AudioBuffer) -> Result<Vec<Frame>> {
    if buffer.sample_rate != SAMPLE_RATE {
        return Err(Error::NonStandardSampleRate(buffer.sample_rate));
    }
    if buffer.len() < WINDOW_SIZE {
        return Err(Error::BufferTooShort {
            len: buffer.len(),
            window: WINDOW_SIZE,
        });
    }
    let analyzer = Analyzer::shared();
    Ok((0..frame_count(buffer.len()))
        .map(|i| {
            let start = i * HOP_SIZE;
            let samples = buffer.samples[start..start + WINDOW_SIZE]
                .iter()
                .map(|&s| s as f64)
                .collect();
            analyzer.frame(samples)
        })
        .collect())
}

pub fn frame_descriptors(magnitude: &[f64], samples: &[f64]) -> FrameFeatures {
    Analyzer::shared().describe(magnitude, samples)
}

/// Frame descriptors for a whole buffer. Buffers shorter than one window are
/// zero-padded into a single frame.
pub fn analyze_buffer(buffer: &AudioBuffer) -> Result<Vec<FrameFeatures>> {
    let padded;
    let buffer = if buffer.len() < WINDOW_SIZE {
        let mut samples = buffer.samples.clone();
        samples.resize(WINDOW_SIZE, 0.0);
        padded = AudioBuffer::mono(samples, buffer.sample_rate);
        &padded
    } else {
        buffer
    };
    Ok(stft_frames(buffer)?
        .iter()
        .map(|f| frame_descriptors(&f.magnitude, &f.samples))
        .collect())
}

fn flatness(power: &[f64]) -> f64 {
    if power.is_empty() {
        return 1.0;
    }
    let arith = dsp::mean(power);
    if arith <= POWER_FLOOR {
        return 1.0;
    }
    let log_mean = power.iter().map(|p| p.max(POWER_FLOOR).ln()).sum::<f64>() / power.len() as f64;
    (log_mean.exp() / arith).clamp(0.0, 1.0)
}

/// Bins whose center frequency lies in `[lo, hi)`.
pub fn band_bins(lo: f64, hi: f64) -> std::ops::Range<usize> {
    let first = (0..NUM_BINS).find(|&k| bin_frequency(k) >= lo).unwrap_or(NUM_BINS);
    let end = (first..NUM_BINS).find(|&k| bin_frequency(k) >= hi).unwrap_or(NUM_BINS);
    first..end
}

pub fn band_flatness(power: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (o, (lo, hi)) in out.iter_mut().zip(FLATNESS_BANDS) {
        *o = flatness(&power[band_bins(lo, hi)]);
    }
    out
}

pub fn spectral_decrease(magnitude: &[f64]) -> f64 {
    let first = magnitude[0];
    let (num, den) = magnitude
        .iter()
        .enumerate()
        .skip(1)
        .fold((0.0, 0.0), |(num, den), (i, &a)| (num + (a - first) / i as f64, den + a));
    if den <= 1e-12 {
        0.0
    } else {
        num / den
    }
}

pub fn spectral_centroid(magnitude: &[f64]) -> f64 {
    let total: f64 = magnitude.iter().sum();
    if total <= 1e-12 {
        return 0.0;
    }
    magnitude
        .iter()
        .enumerate()
        .map(|(k, a)| bin_frequency(k) * a)
        .sum::<f64>()
        / total
}

/// Energy shares of the fundamental, partials 2-4, and the remaining partials.
/// Each partial owns the band `[(h - 0.5) f0, (h + 0.5) f0)`.
pub fn tristimulus(power: &[f64], f0: f64) -> [f64; 3] {
    if f0 <= 0.0 {
        return [0.0; 3];
    }
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let mut shares = [0.0; 3];
    let mut h = 1;
    while (h as f64 - 0.5) * f0 < nyquist {
        let lo = (h as f64 - 0.5) * f0;
        let hi = ((h as f64 + 0.5) * f0).min(nyquist + 1.0);
        let e: f64 = power[band_bins(lo, hi)].iter().sum();
        let slot = match h {
            1 => 0,
            2..=4 => 1,
            _ => 2,
        };
        shares[slot] += e;
        h += 1;
    }
    let total: f64 = shares.iter().sum();
    if total <= 1e-20 {
        return [0.0; 3];
    }
    shares.map(|s| s / total)
}

/// Energy per Zwicker critical band (25 bands, last one capped at Nyquist).
pub fn bark_bands(magnitude: &[f64]) -> [f64; NUM_BARK_BANDS] {
    let mut out = [0.0; NUM_BARK_BANDS];
    let mut band = 0;
    for (k, m) in magnitude.iter().enumerate() {
        let f = bin_frequency(k);
        while band + 1 < NUM_BARK_BANDS && f >= BARK_EDGES[band + 1] {
            band += 1;
        }
        out[band] += m * m;
    }
    out
}

/// Online mean/variance (Welford) per frame descriptor.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningStats {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    resets: u64,
}

impl RunningStats {
    pub fn new() -> Self {
        RunningStats {
            count: 0,
            mean: vec![0.0; FRAME_DIMS],
            m2: vec![0.0; FRAME_DIMS],
            resets: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// How many times [`reset`](Self::reset) has been called.
    pub fn resets(&self) -> u64 {
        self.resets
    }

    pub fn update(&mut self, frame: &FrameFeatures) {
        if self.mean.len() != FRAME_DIMS {
            self.mean = vec![0.0; FRAME_DIMS];
            self.m2 = vec![0.0; FRAME_DIMS];
        }
        self.count += 1;
        let n = self.count as f64;
        for (i, x) in frame.to_array().into_iter().enumerate() {
            let delta = x - self.mean[i];
            self.mean[i] += delta / n;
            self.m2[i] += delta * (x - self.mean[i]);
        }
    }

    pub fn reset(&mut self) {
        self.count = 0;
        self.mean = vec![0.0; FRAME_DIMS];
        self.m2 = vec![0.0; FRAME_DIMS];
        self.resets += 1;
    }

    pub fn finalize(&self) -> Result<SegmentStats> {
        if self.count == 0 {
            return Err(Error::NotEnoughData { needed: 1, got: 0 });
        }
        let mut mean = [0.0; FRAME_DIMS];
        let mut std = [0.0; FRAME_DIMS];
        for i in 0..FRAME_DIMS {
            mean[i] = self.mean[i];
            std[i] = (self.m2[i].max(0.0) / self.count as f64).sqrt();
        }
        Ok(SegmentStats::new(mean, std))
    }
}

/// Per-descriptor mean and population std over a segment, plus affect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub mean: [f64; FRAME_DIMS],
    pub std: [f64; FRAME_DIMS],
    pub valence: f64,
    pub arousal: f64,
}

impl SegmentStats {
    pub fn new(mean: [f64; FRAME_DIMS], std: [f64; FRAME_DIMS]) -> Self {
        let mut stats = SegmentStats {
            mean,
            std,
            valence: 0.0,
            arousal: 0.0,
        };
        let a = affect(&stats);
        stats.valence = a.valence;
        stats.arousal = a.arousal;
        stats
    }

    pub fn zeroed() -> Self {
        SegmentStats::new([0.0; FRAME_DIMS], [0.0; FRAME_DIMS])
    }

    pub fn from_frames(frames: &[FrameFeatures]) -> Result<Self> {
        let mut rs = RunningStats::new();
        frames.iter().for_each(|f| rs.update(f));
        rs.finalize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affect {
    pub valence: f64,
    pub arousal: f64,
}

/// Linear valence/arousal regressions over segment statistics.
pub fn affect(s: &SegmentStats) -> Affect {
    let valence = -0.169
        + 0.061 * s.mean[dim::LOUDNESS]
        + 0.588 * s.mean[dim::FLATNESS]
        + 0.302 * s.std[dim::mfcc(1)]
        + 0.361 * s.std[dim::mfcc(5)]
        - 0.229 * s.std[dim::DECREASE];
    let arousal = -1.551
        + 0.060 * s.mean[dim::LOUDNESS]
        + 0.087 * s.std[dim::LOUDNESS]
        + 1.905 * s.std[dim::TRISTIMULUS + 1]
        + 0.698 * s.mean[dim::TRISTIMULUS + 2]
        + 0.560 * s.std[dim::mfcc(3)]
        - 0.421 * s.std[dim::mfcc(5)]
        + 1.164 * s.std[dim::mfcc(11)];
    Affect { valence, arousal }
}

pub const VECTOR_DIMS: usize = 31;
pub const VECTOR_MEAN_DIMS: usize = 22;
/// Frame descriptors whose std enters the segment vector, in slot order 22..29.
pub const VECTOR_STD_SOURCES: [usize; 7] = [
    dim::LOUDNESS,
    dim::mfcc(1),
    dim::mfcc(3),
    dim::mfcc(5),
    dim::mfcc(11),
    dim::DECREASE,
    dim::TRISTIMULUS + 1,
];
pub const VALENCE_SLOT: usize = 29;
pub const AROUSAL_SLOT: usize = 30;

pub const VECTOR_NAMES: [&str; VECTOR_DIMS] = [
    "mfcc_1_mean", "mfcc_2_mean", "mfcc_3_mean", "mfcc_4_mean", "mfcc_5_mean", "mfcc_6_mean",
    "mfcc_7_mean", "mfcc_8_mean", "mfcc_9_mean", "mfcc_10_mean", "mfcc_11_mean", "mfcc_12_mean",
    "mfcc_13_mean", "loudness_mean", "flatness_1_mean", "flatness_2_mean", "flatness_3_mean",
    "flatness_4_mean", "decrease_mean", "tristimulus_1_mean", "tristimulus_2_mean",
    "tristimulus_3_mean", "loudness_std", "mfcc_1_std", "mfcc_3_std", "mfcc_5_std",
    "mfcc_11_std", "decrease_std", "tristimulus_2_std", "valence", "arousal",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vector31(#[serde(with = "vector_serde")] pub [f64; VECTOR_DIMS]);

mod vector_serde {
    use super::VECTOR_DIMS;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; VECTOR_DIMS], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; VECTOR_DIMS], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|v: Vec<f64>| serde::de::Error::invalid_length(v.len(), &"31 values"))
    }
}

impl Vector31 {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn segment_vector(s: &SegmentStats) -> Vector31 {
    let mut v = [0.0; VECTOR_DIMS];
    v[..VECTOR_MEAN_DIMS].copy_from_slice(&s.mean[..VECTOR_MEAN_DIMS]);
    for (slot, &src) in VECTOR_STD_SOURCES.iter().enumerate() {
        v[VECTOR_MEAN_DIMS + slot] = s.std[src];
    }
    v[VALENCE_SLOT] = s.valence;
    v[AROUSAL_SLOT] = s.arousal;
    Vector31(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sine(freq: f64, amp: f64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / SAMPLE_RATE as f64).sin())
            .collect()
    }

    fn noise(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn frame_count_formula() {
        let buf = AudioBuffer::mono(vec![0.0; 44100], SAMPLE_RATE);
        assert_eq!(stft_frames(&buf).unwrap().len(), 85);
        assert_eq!(frame_count(44100), (44100 - 1024) / 512 + 1);
        let short = AudioBuffer::mono(vec![0.0; 1023], SAMPLE_RATE);
        assert_eq!(stft_frames(&short).unwrap_err().code(), "buffer_too_short");
    }

    #[test]
    fn sine_peak_bin() {
        let a = Analyzer::shared();
        let mag = a.spectrum(&sine(1000.0, 1.0, WINDOW_SIZE));
        let peak = (0..NUM_BINS).max_by(|&i, &j| mag[i].total_cmp(&mag[j])).unwrap();
        assert_eq!(peak, (1000.0f64 * 1024.0 / 44100.0).round() as usize);
        assert_eq!(peak, 23);
    }

    #[test]
    fn silence_defaults() {
        let zeros = vec![0.0; WINDOW_SIZE];
        let a = Analyzer::shared();
        let mag = a.spectrum(&zeros);
        assert!(mag.iter().all(|&m| m == 0.0));
        let f = a.describe(&mag, &zeros);
        assert_eq!(f.loudness, LOUDNESS_FLOOR_DB);
        assert_eq!(f.f0, 0.0);
        assert_eq!(f.flatness, [1.0; 4]);
        assert_eq!(f.tristimulus, [0.0; 3]);
        assert_eq!(bark_bands(&mag), [0.0; NUM_BARK_BANDS]);
    }

    #[test]
    fn white_noise_is_flat_in_every_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Analyzer::shared();
        let mut mean = [0.0; 4];
        for _ in 0..100 {
            let x = noise(&mut rng, WINDOW_SIZE);
            let f = a.describe(&a.spectrum(&x), &x);
            for b in 0..4 {
                assert!(f.flatness[b] > 0.0 && f.flatness[b] <= 1.0);
                mean[b] += f.flatness[b] / 100.0;
            }
        }
        // exponential power bins have geometric/arithmetic ratio e^-gamma ~ 0.56
        for m in mean {
            assert!(m > 0.5, "mean noise flatness {m}");
        }
    }

    #[test]
    fn sine_440_descriptors() {
        let a = Analyzer::shared();
        let x = sine(440.0, 0.8, WINDOW_SIZE);
        let f = a.describe(&a.spectrum(&x), &x);
        assert!((f.centroid - 440.0).abs() <= 43.07, "centroid {}", f.centroid);
        assert!(f.periodicity > 0.9, "periodicity {}", f.periodicity);
        assert!((f.f0 - 440.0).abs() <= 5.0, "f0 {}", f.f0);
        let sum: f64 = f.tristimulus.iter().sum();
        assert!(sum <= 1.0 + 1e-9);
        assert!(f.tristimulus[0] > 0.9);
    }

    #[test]
    fn full_scale_sine_loudness() {
        let a = Analyzer::shared();
        let x = sine(1000.0, 1.0, WINDOW_SIZE);
        let mag = a.spectrum(&x);
        let power: Vec<f64> = mag.iter().map(|m| m * m).collect();
        let l = a.loudness(&power);
        assert!((l + 3.0).abs() < 0.5, "loudness {l}");
    }

    #[test]
    fn flatness_extremes() {
        let mut one_bin = vec![0.0; 10];
        one_bin[3] = 5.0;
        assert!(flatness(&one_bin) < 1e-6);
        assert!((flatness(&[2.0; 10]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flatness_band_edges() {
        // first bin at or above 250 Hz is 6 (258.4 Hz); 500 Hz band ends before bin 12 (516.8 Hz)
        assert_eq!(band_bins(250.0, 500.0), 6..12);
        assert_eq!(band_bins(500.0, 1000.0), 12..24);
        assert_eq!(band_bins(1000.0, 2000.0), 24..47);
        assert_eq!(band_bins(2000.0, 4000.0), 47..93);
    }

    #[test]
    fn mfcc_gain_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = Analyzer::shared();
        let x = noise(&mut rng, WINDOW_SIZE);
        let base = a.describe(&a.spectrum(&x), &x).mfcc;
        for g in [0.1, 0.5, 3.0] {
            let y: Vec<f64> = x.iter().map(|v| v * g).collect();
            let scaled = a.describe(&a.spectrum(&y), &y).mfcc;
            for (p, q) in base.iter().zip(&scaled) {
                assert!((p - q).abs() < 1e-6, "gain {g}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn bark_energy_conserved_and_low_sine_in_first_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Analyzer::shared();
        let mag = a.spectrum(&noise(&mut rng, WINDOW_SIZE));
        let total: f64 = mag.iter().map(|m| m * m).sum();
        let bands: f64 = bark_bands(&mag).iter().sum();
        assert!(((total - bands) / total).abs() < 1e-6);

        let mag = a.spectrum(&sine(100.0, 1.0, WINDOW_SIZE));
        let bands = bark_bands(&mag);
        let total: f64 = bands.iter().sum();
        let argmax = (0..NUM_BARK_BANDS).max_by(|&i, &j| bands[i].total_cmp(&bands[j])).unwrap();
        assert_eq!(argmax, 0);
        assert!(bands[0] / total > 0.5);
    }

    fn random_frame(rng: &mut ChaCha8Rng) -> FrameFeatures {
        let mut a = [0.0; FRAME_DIMS];
        for v in a.iter_mut() {
            *v = rng.random_range(-50.0..50.0);
        }
        FrameFeatures::from_array(&a)
    }

    #[test]
    fn running_stats_hand_cases() {
        let mut f = FrameFeatures::from_array(&[0.0; FRAME_DIMS]);
        let mut rs = RunningStats::new();
        rs.update(&f);
        f.loudness = 2.0;
        rs.update(&f);
        let s = rs.finalize().unwrap();
        assert_eq!(s.mean[dim::LOUDNESS], 1.0);
        assert_eq!(s.std[dim::LOUDNESS], 1.0);

        let x = FrameFeatures::from_array(&[3.5; FRAME_DIMS]);
        let s = SegmentStats::from_frames(&[x, x]).unwrap();
        assert!(s.mean.iter().all(|&m| m == 3.5));
        assert!(s.std.iter().all(|&d| d == 0.0));

        rs.reset();
        assert_eq!(rs.count(), 0);
        assert_eq!(rs.resets(), 1);
        assert_eq!(rs.finalize().unwrap_err().code(), "not_enough_data");
    }

    #[test]
    fn running_stats_match_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frames: Vec<_> = (0..1000).map(|_| random_frame(&mut rng)).collect();
        let s = SegmentStats::from_frames(&frames).unwrap();
        for d in 0..FRAME_DIMS {
            let xs: Vec<f64> = frames.iter().map(|f| f.to_array()[d]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            assert!((s.mean[d] - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            assert!((s.std[d] - var.sqrt()).abs() <= 1e-9 * var.sqrt());
        }
    }

    #[test]
    fn affect_intercepts_and_single_terms() {
        let zero = SegmentStats::zeroed();
        assert_eq!(zero.valence, -0.169);
        assert_eq!(zero.arousal, -1.551);

        let mut mean = [0.0; FRAME_DIMS];
        mean[dim::LOUDNESS] = 1.0;
        let s = SegmentStats::new(mean, [0.0; FRAME_DIMS]);
        assert!((s.valence - -0.108).abs() < 1e-12);
        assert!((s.arousal - -1.491).abs() < 1e-12);

        let mut std = [0.0; FRAME_DIMS];
        std[dim::mfcc(5)] = 1.0;
        let s = SegmentStats::new([0.0; FRAME_DIMS], std);
        assert!((s.valence - 0.192).abs() < 1e-12);
        assert!((s.arousal - -1.972).abs() < 1e-12);
    }

    #[test]
    fn zero_stats_vector() {
        let v = segment_vector(&SegmentStats::zeroed());
        assert!(v.0[..29].iter().all(|&x| x == 0.0));
        assert_eq!(v.0[29], -0.169);
        assert_eq!(v.0[30], -1.551);
    }

    #[test]
    fn mfcc3_std_moves_slot_24_and_arousal() {
        let base = SegmentStats::zeroed();
        let mut std = [0.0; FRAME_DIMS];
        std[dim::mfcc(3)] = 0.7;
        let moved = SegmentStats::new([0.0; FRAME_DIMS], std);
        let (a, b) = (segment_vector(&base), segment_vector(&moved));
        let changed: Vec<usize> = (0..VECTOR_DIMS).filter(|&i| a.0[i] != b.0[i]).collect();
        assert_eq!(changed, vec![24, AROUSAL_SLOT]);
    }
}
