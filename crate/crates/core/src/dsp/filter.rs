//! Parametric biquads and random frequency shaping.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::io::Waveform;

/// Normalized second-order section (`a0 = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    fn normalized(b: [f64; 3], a: [f64; 3]) -> Self {
        Self {
            b0: b[0] / a[0],
            b1: b[1] / a[0],
            b2: b[2] / a[0],
            a1: a[1] / a[0],
            a2: a[2] / a[0],
        }
    }

    pub fn peaking(sample_rate: f64, center: f64, q: f64, gain_db: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w0 = 2.0 * PI * center / sample_rate;
        let alpha = w0.sin() / (2.0 * q);
        let c = w0.cos();
        Self::normalized(
            [1.0 + alpha * a, -2.0 * c, 1.0 - alpha * a],
            [1.0 + alpha / a, -2.0 * c, 1.0 - alpha / a],
        )
    }

    /// Shelf with slope S = 1.
    pub fn low_shelf(sample_rate: f64, corner: f64, gain_db: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w0 = 2.0 * PI * corner / sample_rate;
        let (s, c) = w0.sin_cos();
        let alpha = s / 2.0 * 2f64.sqrt();
        let sa = 2.0 * a.sqrt() * alpha;
        Self::normalized(
            [
                a * ((a + 1.0) - (a - 1.0) * c + sa),
                2.0 * a * ((a - 1.0) - (a + 1.0) * c),
                a * ((a + 1.0) - (a - 1.0) * c - sa),
            ],
            [
                (a + 1.0) + (a - 1.0) * c + sa,
                -2.0 * ((a - 1.0) + (a + 1.0) * c),
                (a + 1.0) + (a - 1.0) * c - sa,
            ],
        )
    }

    pub fn high_shelf(sample_rate: f64, corner: f64, gain_db: f64) -> Self {
        let a = 10f64.powf(gain_db / 40.0);
        let w0 = 2.0 * PI * corner / sample_rate;
        let (s, c) = w0.sin_cos();
        let alpha = s / 2.0 * 2f64.sqrt();
        let sa = 2.0 * a.sqrt() * alpha;
        Self::normalized(
            [
                a * ((a + 1.0) + (a - 1.0) * c + sa),
                -2.0 * a * ((a - 1.0) + (a + 1.0) * c),
                a * ((a + 1.0) + (a - 1.0) * c - sa),
            ],
            [
                (a + 1.0) - (a - 1.0) * c + sa,
                2.0 * ((a - 1.0) - (a + 1.0) * c),
                (a + 1.0) - (a - 1.0) * c - sa,
            ],
        )
    }

    /// `|H(e^{jω})|` at `freq` Hz.
    pub fn magnitude(&self, sample_rate: f64, freq: f64) -> f64 {
        let w = 2.0 * PI * freq / sample_rate;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (self.b0 + self.b1 * c1 + self.b2 * c2, self.b1 * s1 + self.b2 * s2);
        let den = (1.0 + self.a1 * c1 + self.a2 * c2, self.a1 * s1 + self.a2 * s2);
        ((num.0 * num.0 + num.1 * num.1) / (den.0 * den.0 + den.1 * den.1)).sqrt()
    }

    pub fn process(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b0 * x0 + self.b1 * x1 + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
                x2 = x1;
                x1 = x0;
                y2 = y1;
                y1 = y0;
                y0
            })
            .collect()
    }
}

pub fn apply_filters(w: &Waveform, filters: &[Biquad]) -> Waveform {
    let mut buf: Vec<f64> = w.samples.iter().map(|&s| s as f64).collect();
    for f in filters {
        buf = f.process(&buf);
    }
    Waveform {
        samples: buf.into_iter().map(|v| v as f32).collect(),
        sample_rate: w.sample_rate,
    }
}

/// Filter cascade drawn for one shaping call: low shelf at 250 Hz, high shelf
/// at 4 kHz and two Q=1 peaking filters with log-uniform centers in
/// [200, 6000] Hz, every gain uniform in `±gain_db`.
pub fn draw_shaping_filters(sample_rate: u32, gain_db: f64, seed: u64) -> Vec<Biquad> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = sample_rate as f64;
    let nyq_guard = 0.45 * sr;
    let gain = |rng: &mut ChaCha8Rng| {
        if gain_db > 0.0 {
            rng.random_range(-gain_db..=gain_db)
        } else {
            0.0
        }
    };
    let mut filters = vec![
        Biquad::low_shelf(sr, 250.0f64.min(nyq_guard), gain(&mut rng)),
        Biquad::high_shelf(sr, 4000.0f64.min(nyq_guard), gain(&mut rng)),
    ];
    for _ in 0..2 {
        let center = (rng.random_range(200f64.ln()..6000f64.ln())).exp().min(nyq_guard);
        let g = gain(&mut rng);
        filters.push(Biquad::peaking(sr, center, 1.0, g));
    }
    filters
}

/// Random spectral tilt/coloring. The overall RMS change is kept within
/// `±gain_db` of the input level.
pub fn random_frequency_shaping_with(w: &Waveform, gain_db: f64, seed: u64) -> Waveform {
    let filters = draw_shaping_filters(w.sample_rate, gain_db, seed);
    let mut out = apply_filters(w, &filters);
    let (rin, rout) = (w.rms(), out.rms());
    if rin > 0.0 && rout > 0.0 {
        let bound = 10f64.powf(gain_db.abs() / 20.0);
        let ratio = rout / rin;
        let clamped = ratio.clamp(1.0 / bound, bound);
        if clamped != ratio {
            let scale = (clamped / ratio) as f32;
            out.samples.iter_mut().for_each(|s| *s *= scale);
        }
    }
    out
}

pub fn random_frequency_shaping(w: &Waveform, seed: u64) -> Waveform {
    random_frequency_shaping_with(w, super::DEFAULT_SHAPING_GAIN_DB, seed)
}
