//! Radix-2 FFT for real frames.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

/// In-place iterative Cooley-Tukey transform. `re.len()` must be a power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let ang = -2.0 * PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (s, c) = (ang * k as f64).sin_cos();
                let a = start + k;
                let b = a + half;
                let tr = re[b] * c - im[b] * s;
                let ti = re[b] * s + im[b] * c;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// Spectrum of a real frame zero-padded to the next power of two `M`.
///
/// Returns bins `0..=M/2` with `X[k] = Σ x[n]·exp(−2πikn/M)`.
pub fn dft_real(frame: &[f64]) -> Vec<Complex> {
    let m = frame.len().max(1).next_power_of_two();
    let mut re = vec![0.0; m];
    re[..frame.len()].copy_from_slice(frame);
    let mut im = vec![0.0; m];
    fft_in_place(&mut re, &mut im);
    (0..=m / 2).map(|k| Complex::new(re[k], im[k])).collect()
}

/// Power spectrum `|X[k]|²` for `k in 0..=M/2`.
pub fn power_spectrum(frame: &[f64]) -> Vec<f64> {
    dft_real(frame).into_iter().map(Complex::norm_sqr).collect()
}

/// Frequency (Hz) of the strongest bin of a whole signal, refined by
/// parabolic interpolation on log magnitude. Used as a spectral-peak probe.
pub fn peak_frequency(signal: &[f32], sample_rate: u32) -> f64 {
    let n = signal.len();
    let win: Vec<f64> = signal
        .iter()
        .enumerate()
        .map(|(i, &s)| s as f64 * (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()))
        .collect();
    // Extra padding for finer bin spacing.
    let mut padded = win;
    padded.resize((n * 4).next_power_of_two(), 0.0);
    let m = padded.len();
    let p = power_spectrum(&padded);
    let (k, _) = p
        .iter()
        .enumerate()
        .skip(1)
        .fold((1, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut delta = 0.0;
    if k + 1 < p.len() {
        let (a, b, c) = (
            p[k - 1].max(1e-300).ln(),
            p[k].max(1e-300).ln(),
            p[k + 1].max(1e-300).ln(),
        );
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-12 {
            delta = 0.5 * (a - c) / denom;
        }
    }
    (k as f64 + delta) * sample_rate as f64 / m as f64
}
