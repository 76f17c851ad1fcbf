//! Formant and pitch modification.
//!
//! Stage one scales every frequency by the formant ratio ρ: resample by 1/ρ,
//! then WSOLA-stretch by ρ to restore the duration. Stage two re-spaces
//! pitch-synchronous grains (TD-PSOLA) so the f0 contour follows
//! `target · (f0 / (ρ · measured))^range`, which leaves the shifted spectral
//! envelope in place.

use crate::error::{Error, Result};
use crate::io::Waveform;

use super::pitch::estimate_pitch;
use super::resample::resample_by;
use super::tsm::wsola;
use super::{PerturbParams, PitchTrack};

/// Grain spacing in unvoiced regions.
const UNVOICED_PERIOD_SECONDS: f64 = 0.005;

pub fn shift_pitch_and_formants(w: &Waveform, p: &PerturbParams, measured_median: f64) -> Result<Waveform> {
    if !(measured_median > 0.0) {
        return Err(Error::invalid("measured_median must be > 0"));
    }
    p.validate()?;
    let len = w.len();
    let stage1 = if p.formant_shift_ratio == 1.0 {
        w.samples.clone()
    } else {
        let squeezed = resample_by(&w.samples, 1.0 / p.formant_shift_ratio);
        fit_length(wsola(&squeezed, p.formant_shift_ratio, w.sample_rate), len)
    };
    let stage1 = Waveform {
        samples: stage1,
        sample_rate: w.sample_rate,
    };
    let track = estimate_pitch(&stage1);
    if track.values.iter().all(|&f| f <= 0.0) {
        return Err(Error::Unvoiced);
    }
    let reference = p.formant_shift_ratio * measured_median;
    let samples = psola(&stage1, &track, |f0| {
        p.target_pitch_median * (f0 / reference).powf(p.pitch_range_factor)
    });
    Ok(Waveform {
        samples: fit_length(samples, len),
        sample_rate: w.sample_rate,
    })
}

pub(crate) fn fit_length(mut x: Vec<f32>, len: usize) -> Vec<f32> {
    x.resize(len, 0.0);
    x
}

/// Local period in samples at sample position `t`, `None` when unvoiced.
fn period_at(track: &PitchTrack, sample_rate: f64, t: f64) -> Option<f64> {
    if track.values.is_empty() {
        return None;
    }
    let idx = ((t / sample_rate) / track.hop).round() as usize;
    let f0 = track.values[idx.min(track.values.len() - 1)];
    (f0 > 0.0).then(|| sample_rate / f0)
}

/// Time-domain pitch-synchronous overlap-add with a per-grain f0 map.
fn psola(w: &Waveform, track: &PitchTrack, new_f0: impl Fn(f64) -> f64) -> Vec<f32> {
    let sr = w.sample_rate as f64;
    let x = &w.samples;
    let len = x.len();
    let unvoiced = UNVOICED_PERIOD_SECONDS * sr;

    // Analysis marks spaced one local period apart.
    let mut marks: Vec<(f64, f64)> = Vec::new();
    let mut t = 0.0;
    while t < len as f64 {
        let p = period_at(track, sr, t).unwrap_or(unvoiced);
        marks.push((t, p));
        t += p;
    }

    let mut out = vec![0.0f64; len];
    let mut ts = 0.0;
    while ts < len as f64 {
        let step = match period_at(track, sr, ts) {
            Some(p_in) => sr / new_f0(sr / p_in),
            None => unvoiced,
        };
        let i = nearest_mark(&marks, ts);
        let (ta, pa) = marks[i];
        let half = pa.round().max(1.0) as isize;
        let scale = (step / pa).min(1.0);
        let (ca, cs) = (ta.round() as isize, ts.round() as isize);
        let n2 = 2 * half;
        for j in -half..half {
            let src = ca + j;
            let dst = cs + j;
            if src < 0 || src as usize >= len || dst < 0 || dst as usize >= len {
                continue;
            }
            let wgt = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (j + half) as f64 / n2 as f64).cos();
            out[dst as usize] += x[src as usize] as f64 * wgt * scale;
        }
        ts += step.max(1.0);
    }
    out.into_iter().map(|v| v as f32).collect()
}

fn nearest_mark(marks: &[(f64, f64)], t: f64) -> usize {
    let i = marks.partition_point(|m| m.0 < t);
    if i == 0 {
        0
    } else if i >= marks.len() {
        marks.len() - 1
    } else if (marks[i].0 - t) < (t - marks[i - 1].0) {
        i
    } else {
        i - 1
    }
}
