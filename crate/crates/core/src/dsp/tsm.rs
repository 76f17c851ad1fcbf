//! WSOLA time-scale modification.

use crate::error::{Error, Result};
use crate::io::Waveform;

/// Analysis frame length in seconds; two periods of a 50 Hz voice.
const FRAME_SECONDS: f64 = 0.04;

/// Stretches `w` by `factor` (output duration = factor × input duration)
/// while keeping local pitch. Output length is `round(len · factor)`.
pub fn time_scale(w: &Waveform, factor: f64) -> Result<Waveform> {
    if !(0.5..=2.0).contains(&factor) {
        return Err(Error::invalid(format!(
            "factor out of range: {factor} not in [0.5, 2.0]"
        )));
    }
    Ok(Waveform {
        samples: wsola(&w.samples, factor, w.sample_rate),
        sample_rate: w.sample_rate,
    })
}

pub(crate) fn wsola(x: &[f32], factor: f64, sample_rate: u32) -> Vec<f32> {
    let out_len = (x.len() as f64 * factor).round() as usize;
    if factor == 1.0 {
        return x.to_vec();
    }
    let half = ((FRAME_SECONDS * sample_rate as f64 / 2.0).round() as usize).max(2);
    let n = 2 * half;
    let hop = half;
    let tolerance = (hop / 2) as isize;
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= x.len() {
            0.0
        } else {
            x[i as usize] as f64
        }
    };

    let mut out = vec![0.0f64; out_len + n];
    let n_frames = out_len / hop + 2;
    // Input center of the previously chosen frame.
    let mut prev_center: isize = 0;
    let mut template = vec![0.0f64; n];
    for k in 0..n_frames {
        let ideal = (k as f64 * hop as f64 / factor).round() as isize;
        let center = if k == 0 {
            0
        } else {
            let natural = prev_center + hop as isize;
            for (j, t) in template.iter_mut().enumerate() {
                *t = at(natural - half as isize + j as isize);
            }
            best_offset(&template, ideal, half, tolerance, &at)
        };
        let out_start = (k * hop) as isize - half as isize;
        for j in 0..n {
            let o = out_start + j as isize;
            if o >= 0 && (o as usize) < out.len() {
                out[o as usize] += window[j] * at(center - half as isize + j as isize);
            }
        }
        prev_center = center;
    }
    out.truncate(out_len);
    out.into_iter().map(|v| v as f32).collect()
}

/// Frame center within `ideal ± tolerance` most similar (normalized
/// cross-correlation) to `template`; smaller offsets win ties.
fn best_offset(template: &[f64], ideal: isize, half: usize, tolerance: isize, at: &dyn Fn(isize) -> f64) -> isize {
    let n = template.len();
    let lo = ideal - tolerance - half as isize;
    let span: Vec<f64> = (0..n + 2 * tolerance as usize + 1)
        .map(|i| at(lo + i as isize))
        .collect();
    let mut best = ideal;
    let mut best_score = f64::NEG_INFINITY;
    for step in 0..=(2 * tolerance) {
        // 0, -1, +1, -2, +2, ...
        let delta = if step % 2 == 0 { step / 2 } else { -(step + 1) / 2 };
        let off = (delta + tolerance) as usize;
        let cand = &span[off..off + n];
        let mut dot = 0.0;
        let mut energy = 0.0;
        for (a, b) in template.iter().zip(cand) {
            dot += a * b;
            energy += b * b;
        }
        let score = if energy > 0.0 { dot / energy.sqrt() } else { 0.0 };
        if score > best_score + 1e-12 {
            best_score = score;
            best = ideal + delta;
        }
    }
    best
}
