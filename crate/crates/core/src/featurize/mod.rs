//! Built-in log-mel front-end. It plays the role of the frozen convolutional
//! encoder: no trainable parameters, 50 frames per second at 16 kHz.

pub mod fft;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{FrameFeatures, Waveform};

pub use fft::{dft_real, power_spectrum, Complex};

const LOG_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturizerConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            n_fft: 400,
            hop: 320,
            n_mels: 40,
            fmin: 0.0,
            fmax: 8000.0,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::Config(format!(
                "featurizer: need 0 < hop ≤ n_fft, got hop={} n_fft={}",
                self.hop, self.n_fft
            )));
        }
        if self.n_mels < 2 {
            return Err(Error::Config("featurizer: n_mels must be ≥ 2".into()));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax) || self.fmax > sample_rate as f64 / 2.0 {
            return Err(Error::Config(format!(
                "featurizer: need 0 ≤ fmin < fmax ≤ {} Hz, got [{}, {}]",
                sample_rate as f64 / 2.0,
                self.fmin,
                self.fmax
            )));
        }
        Ok(())
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        if num_samples < self.n_fft {
            0
        } else {
            1 + (num_samples - self.n_fft) / self.hop
        }
    }
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on HTK-mel-spaced centers, `n_mels × (fft_size/2 + 1)`.
pub fn mel_filterbank(cfg: &FeaturizerConfig, sample_rate: u32, fft_size: usize) -> Array2<f64> {
    let n_bins = fft_size / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((cfg.n_mels, n_bins));
    for m in 0..cfg.n_mels {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / fft_size as f64;
            let w = ((f - l) / (c - l)).min((r - f) / (r - c));
            if w > 0.0 {
                fb[[m, k]] = w;
            }
        }
    }
    fb
}

/// Center frequencies (Hz) of the mel filters.
pub fn mel_centers(cfg: &FeaturizerConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    (1..=cfg.n_mels)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Log-mel spectrogram: `T = 1 + ⌊(len − n_fft)/hop⌋` frames of `n_mels` values.
pub fn log_mel(w: &Waveform, cfg: &FeaturizerConfig) -> Result<FrameFeatures> {
    cfg.validate(w.sample_rate)?;
    let t = cfg.num_frames(w.len());
    if t == 0 {
        return Err(Error::invalid(format!(
            "input too short: {} samples < n_fft {}",
            w.len(),
            cfg.n_fft
        )));
    }
    let fft_size = cfg.n_fft.next_power_of_two();
    let fb = mel_filterbank(cfg, w.sample_rate, fft_size);
    let window = hann(cfg.n_fft);
    let mut out = Array2::<f32>::zeros((t, cfg.n_mels));
    let mut frame = vec![0.0f64; cfg.n_fft];
    for i in 0..t {
        let start = i * cfg.hop;
        for (j, f) in frame.iter_mut().enumerate() {
            *f = w.samples[start + j] as f64 * window[j];
        }
        let p = power_spectrum(&frame);
        for m in 0..cfg.n_mels {
            let e: f64 = fb.row(m).iter().zip(&p).map(|(a, b)| a * b).sum();
            out[[i, m]] = (e + LOG_FLOOR).ln() as f32;
        }
    }
    FrameFeatures::new(out, w.sample_rate as f64 / cfg.hop as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, secs: f64, sr: u32) -> Waveform {
        let n = (secs * sr as f64) as usize;
        Waveform::new(
            (0..n)
                .map(|i| (0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin()) as f32)
                .collect(),
            sr,
        )
        .unwrap()
    }

    #[test]
    fn frame_count_formula() {
        let f = log_mel(&sine(300.0, 1.0, 16000), &FeaturizerConfig::default()).unwrap();
        assert_eq!(f.num_frames(), 49);
        assert_eq!(f.dim(), 40);
        assert_eq!(f.frame_rate, 50.0);
    }

    #[test]
    fn silence_hits_log_floor() {
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        let f = log_mel(&w, &FeaturizerConfig::default()).unwrap();
        let floor = (1e-6f64).ln() as f32;
        assert!(f.data.iter().all(|&v| v == floor));
    }

    #[test]
    fn too_short_input() {
        let w = Waveform::new(vec![0.0; 399], 16000).unwrap();
        assert!(log_mel(&w, &FeaturizerConfig::default()).is_err());
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = FeaturizerConfig {
            fmax: 9000.0,
            ..Default::default()
        };
        assert!(cfg.validate(16000).is_err());
        let cfg = FeaturizerConfig {
            hop: 500,
            ..Default::default()
        };
        assert!(cfg.validate(16000).is_err());
    }

    /// Independent route: naive DFT at the padded length and triangle weights
    /// evaluated directly from the mel formula.
    #[test]
    fn sine_argmax_matches_naive_oracle() {
        let cfg = FeaturizerConfig::default();
        let w = sine(1000.0, 0.5, 16000);
        let f = log_mel(&w, &cfg).unwrap();

        let m = 512usize;
        let n_mels = cfg.n_mels;
        let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
        let inv = |mm: f64| 700.0 * (10f64.powf(mm / 2595.0) - 1.0);
        let pts: Vec<f64> = (0..n_mels + 2)
            .map(|i| inv(mel(8000.0) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let start = 5 * cfg.hop;
        let frame: Vec<f64> = (0..cfg.n_fft)
            .map(|j| w.samples[start + j] as f64 * (0.5 - 0.5 * (2.0 * PI * j as f64 / 400.0).cos()))
            .collect();
        let mut energies = vec![0.0; n_mels];
        for k in 0..=m / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in frame.iter().enumerate() {
                let a = -2.0 * PI * (k * n) as f64 / m as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            let hz = k as f64 * 16000.0 / m as f64;
            for b in 0..n_mels {
                let (l, c, r) = (pts[b], pts[b + 1], pts[b + 2]);
                let wgt = if hz > l && hz <= c {
                    (hz - l) / (c - l)
                } else if hz > c && hz < r {
                    (r - hz) / (r - c)
                } else {
                    0.0
                };
                energies[b] += wgt * (re * re + im * im);
            }
        }
        let oracle_argmax = (0..n_mels)
            .max_by(|&a, &b| energies[a].total_cmp(&energies[b]))
            .unwrap();
        let row = f.data.row(5);
        let got = (0..n_mels).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(got, oracle_argmax);
        for b in 0..n_mels {
            assert!(((energies[b] + 1e-6).ln() - row[b] as f64).abs() < 1e-3);
        }
        // The winning filter is the one whose passband contains 1 kHz.
        assert!(pts[got] < 1000.0 && 1000.0 < pts[got + 2]);
    }

    #[test]
    fn shift_by_one_hop_shifts_rows() {
        let cfg = FeaturizerConfig::default();
        let mut rng_state = 12345u64;
        let samples: Vec<f32> = (0..16000)
            .map(|_| {
                rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
                ((rng_state >> 33) as f64 / (1u64 << 31) as f64 - 0.5) as f32
            })
            .collect();
        let a = log_mel(&Waveform::new(samples.clone(), 16000).unwrap(), &cfg).unwrap();
        let b = log_mel(&Waveform::new(samples[cfg.hop..].to_vec(), 16000).unwrap(), &cfg).unwrap();
        for i in 0..b.num_frames() {
            for j in 0..cfg.n_mels {
                assert!((a.data[[i + 1, j]] - b.data[[i, j]]).abs() < 1e-5);
            }
        }
    }
}
