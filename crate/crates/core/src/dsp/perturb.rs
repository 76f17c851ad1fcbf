//! Gender-routed speaker perturbation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::Waveform;

use super::filter::random_frequency_shaping_with;
use super::pitch::{estimate_pitch, mean_voiced_pitch, median_voiced_pitch};
use super::shift::shift_pitch_and_formants;
use super::{PerturbParams, DEFAULT_SHAPING_GAIN_DB, DEFAULT_THRESHOLD_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PitchStatistic {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbConfig {
    pub threshold_hz: f64,
    pub m2f: PerturbParams,
    pub f2m: PerturbParams,
    pub shaping_gain_db: f64,
    pub pitch_statistic: PitchStatistic,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            threshold_hz: DEFAULT_THRESHOLD_HZ,
            m2f: PerturbParams::male_to_female(),
            f2m: PerturbParams::female_to_male(),
            shaping_gain_db: DEFAULT_SHAPING_GAIN_DB,
            pitch_statistic: PitchStatistic::Median,
            seed: 0,
        }
    }
}

impl PerturbConfig {
    /// Strictly above the threshold is treated as a female voice.
    pub fn decide(&self, pitch_stat: f64) -> PerturbParams {
        if pitch_stat > self.threshold_hz {
            self.f2m
        } else {
            self.m2f
        }
    }
}

/// Default conversion triples routed by `threshold` Hz.
pub fn decide_conversion(pitch_stat: f64, threshold: f64) -> PerturbParams {
    PerturbConfig {
        threshold_hz: threshold,
        ..Default::default()
    }
    .decide(pitch_stat)
}

pub fn perturb_speaker(w: &Waveform, threshold: f64, seed: u64) -> Result<Waveform> {
    let cfg = PerturbConfig {
        threshold_hz: threshold,
        ..Default::default()
    };
    perturb_speaker_with(w, &cfg, seed)
}

/// Pitch statistic → conversion choice → pitch/formant shift → random
/// shaping. Unvoiced input skips straight to shaping. Output length always
/// equals input length.
pub fn perturb_speaker_with(w: &Waveform, cfg: &PerturbConfig, seed: u64) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::invalid("cannot perturb an empty waveform"));
    }
    let track = estimate_pitch(w);
    let stat = match cfg.pitch_statistic {
        PitchStatistic::Median => median_voiced_pitch(&track),
        PitchStatistic::Mean => mean_voiced_pitch(&track),
    };
    let shifted = match stat {
        Ok(f0) => match shift_pitch_and_formants(w, &cfg.decide(f0), f0) {
            Ok(y) => y,
            Err(Error::Unvoiced) => w.clone(),
            Err(e) => return Err(e),
        },
        Err(Error::Unvoiced) => w.clone(),
        Err(e) => return Err(e),
    };
    Ok(random_frequency_shaping_with(&shifted, cfg.shaping_gain_db, seed))
}
