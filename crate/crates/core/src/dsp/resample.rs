//! Band-limited resampling with a tabulated Kaiser-windowed sinc kernel.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::io::Waveform;

/// Zero crossings on each side of the kernel.
const ZERO_CROSSINGS: usize = 16;
/// Table entries per unit of the (cutoff-scaled) kernel argument.
const PHASES: usize = 512;
const KAISER_BETA: f64 = 8.0;
/// Cutoff relative to the lower Nyquist frequency when the rate changes.
const ROLLOFF: f64 = 0.97;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kernel_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let n = ZERO_CROSSINGS * PHASES + 2;
        let norm = bessel_i0(KAISER_BETA);
        (0..n)
            .map(|i| {
                let u = i as f64 / PHASES as f64;
                if u >= ZERO_CROSSINGS as f64 {
                    return 0.0;
                }
                let sinc = if u == 0.0 { 1.0 } else { (PI * u).sin() / (PI * u) };
                let r = u / ZERO_CROSSINGS as f64;
                sinc * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
            })
            .collect()
    })
}

#[inline]
fn kernel(u: f64) -> f64 {
    let u = u.abs() * PHASES as f64;
    let i = u as usize;
    let table = kernel_table();
    if i + 1 >= table.len() {
        return 0.0;
    }
    let frac = u - i as f64;
    table[i] * (1.0 - frac) + table[i + 1] * frac
}

/// Resamples `x` so that output sample `n` sits at input position `n / ratio`.
/// Output length is `round(len · ratio)`.
pub fn resample_by(x: &[f32], ratio: f64) -> Vec<f32> {
    assert!(ratio > 0.0 && ratio.is_finite(), "resample ratio must be > 0");
    let out_len = (x.len() as f64 * ratio).round() as usize;
    if ratio == 1.0 {
        return x.to_vec();
    }
    let cutoff = ratio.min(1.0) * ROLLOFF;
    let half = ZERO_CROSSINGS as f64 / cutoff;
    (0..out_len)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = ((t - half).ceil().max(0.0)) as usize;
            let hi = ((t + half).floor() as isize).min(x.len() as isize - 1);
            let mut acc = 0.0;
            if hi >= lo as isize {
                for (k, &v) in x.iter().enumerate().take(hi as usize + 1).skip(lo) {
                    acc += v as f64 * kernel((t - k as f64) * cutoff);
                }
            }
            (acc * cutoff) as f32
        })
        .collect()
}

/// Converts `w` to `new_rate` Hz.
pub fn resample(w: &Waveform, new_rate: u32) -> Waveform {
    assert!(new_rate > 0, "new_rate must be > 0");
    let samples = resample_by(&w.samples, new_rate as f64 / w.sample_rate as f64);
    Waveform {
        samples,
        sample_rate: new_rate,
    }
}
