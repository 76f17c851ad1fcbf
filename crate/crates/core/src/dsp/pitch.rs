//! YIN-style f0 tracking.

use crate::error::{Error, Result};
use crate::io::Waveform;

use super::PitchTrack;

#[derive(Debug, Clone, PartialEq)]
pub struct PitchConfig {
    /// Seconds between frames.
    pub hop: f64,
    pub fmin: f64,
    pub fmax: f64,
    /// Cumulative-mean-normalized difference threshold for voicing.
    pub threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            hop: 0.01,
            fmin: 50.0,
            fmax: 600.0,
            threshold: 0.15,
        }
    }
}

pub fn estimate_pitch(w: &Waveform) -> PitchTrack {
    estimate_pitch_with(w, &PitchConfig::default())
}

/// Frame `i` is centered on sample `i · hop`; frames outside the signal read zeros.
pub fn estimate_pitch_with(w: &Waveform, cfg: &PitchConfig) -> PitchTrack {
    let sr = w.sample_rate as f64;
    let hop = ((cfg.hop * sr).round() as usize).max(1);
    let tau_min = ((sr / cfg.fmax).floor() as usize).max(2);
    let tau_max = (sr / cfg.fmin).ceil() as usize;
    let win = tau_max;
    let span = win + tau_max;
    let n_frames = w.len().div_ceil(hop).max(1);
    let x = &w.samples;
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= x.len() {
            0.0
        } else {
            x[i as usize] as f64
        }
    };

    let mut frame_rms = Vec::with_capacity(n_frames);
    let mut buf = vec![0.0f64; span];
    let mut frames = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let start = (i * hop) as isize - (span / 2) as isize;
        for (j, b) in buf.iter_mut().enumerate() {
            *b = at(start + j as isize);
        }
        let e: f64 = buf.iter().map(|v| v * v).sum::<f64>() / span as f64;
        frame_rms.push(e.sqrt());
        frames.push(buf.clone());
    }
    let loudest = frame_rms.iter().cloned().fold(0.0, f64::max);
    let floor = (loudest * 0.01).max(1e-4);

    let mut diff = vec![0.0f64; tau_max + 1];
    let values = frames
        .iter()
        .zip(&frame_rms)
        .map(|(frame, &rms)| {
            if rms < floor {
                return 0.0;
            }
            for (tau, d) in diff.iter_mut().enumerate().skip(1) {
                let mut acc = 0.0;
                for j in 0..win {
                    let v = frame[j] - frame[j + tau];
                    acc += v * v;
                }
                *d = acc;
            }
            yin_period(&diff, tau_min, tau_max, cfg.threshold)
                .map(|tau| sr / tau)
                .filter(|f| (cfg.fmin..=cfg.fmax).contains(f))
                .unwrap_or(0.0)
        })
        .collect();
    PitchTrack {
        values,
        hop: hop as f64 / sr,
    }
}

/// Period in samples (sub-sample refined), or `None` when no dip of the
/// normalized difference falls below `threshold`.
fn yin_period(diff: &[f64], tau_min: usize, tau_max: usize, threshold: f64) -> Option<f64> {
    let mut cmnd = vec![1.0f64; tau_max + 1];
    let mut running = 0.0;
    for tau in 1..=tau_max {
        running += diff[tau];
        cmnd[tau] = if running > 0.0 {
            diff[tau] * tau as f64 / running
        } else {
            1.0
        };
    }
    let mut tau = tau_min;
    while tau <= tau_max {
        if cmnd[tau] < threshold {
            while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            let mut refined = tau as f64;
            if tau > 1 && tau < tau_max {
                let (a, b, c) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
                let denom = a - 2.0 * b + c;
                if denom.abs() > 1e-12 {
                    refined += (0.5 * (a - c) / denom).clamp(-1.0, 1.0);
                }
            }
            return Some(refined);
        }
        tau += 1;
    }
    None
}

/// Median over voiced frames; an even count averages the two middle values.
pub fn median_voiced_pitch(pt: &PitchTrack) -> Result<f64> {
    let mut v: Vec<f64> = pt.values.iter().copied().filter(|&f| f > 0.0).collect();
    if v.is_empty() {
        return Err(Error::Unvoiced);
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn mean_voiced_pitch(pt: &PitchTrack) -> Result<f64> {
    let v: Vec<f64> = pt.values.iter().copied().filter(|&f| f > 0.0).collect();
    if v.is_empty() {
        return Err(Error::Unvoiced);
    }
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}
