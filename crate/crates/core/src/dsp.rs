//! Small signal-processing helpers shared by analysis and playback.

use std::f64::consts::PI;

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Linear-interpolation resampler. Reads the input at positions `i * step`,
/// producing `round(len / step)` samples.
pub fn resample_linear(input: &[f32], step: f64) -> Vec<f32> {
    if input.is_empty() {
        return Vec::new();
    }
    let out_len = ((input.len() as f64 / step).round() as usize).max(1);
    let last = input.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let idx = pos.floor() as usize;
            if idx >= last {
                return input[last];
            }
            let frac = pos - idx as f64;
            (input[idx] as f64 * (1.0 - frac) + input[idx + 1] as f64 * frac) as f32
        })
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_length_contract() {
        let input = vec![0.0f32; 1001];
        for step in [0.5, 0.75, 1.0, 1.5, 2.0, 3.3] {
            let out = resample_linear(&input, step);
            assert_eq!(out.len(), (1001.0 / step).round() as usize);
        }
    }

    #[test]
    fn resample_identity_at_unit_step() {
        let input: Vec<f32> = (0..64).map(|i| (i as f32 * 0.1).sin()).collect();
        assert_eq!(resample_linear(&input, 1.0), input);
    }

    #[test]
    fn hann_endpoints() {
        let w = hann(1024);
        assert_eq!(w[0], 0.0);
        assert!((w[512] - 1.0).abs() < 1e-12);
    }
}
