//! Speaker perturbation and the signal primitives behind it.

pub mod filter;
pub mod perturb;
pub mod pitch;
pub mod resample;
pub mod shift;
pub mod tsm;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filter::{random_frequency_shaping, random_frequency_shaping_with, Biquad};
pub use perturb::{decide_conversion, perturb_speaker, perturb_speaker_with, PerturbConfig, PitchStatistic};
pub use pitch::{estimate_pitch, mean_voiced_pitch, median_voiced_pitch};
pub use resample::resample;
pub use shift::shift_pitch_and_formants;
pub use tsm::time_scale;

pub const DEFAULT_THRESHOLD_HZ: f64 = 155.0;
pub const DEFAULT_SHAPING_GAIN_DB: f64 = 6.0;

/// (formant shift ratio, new pitch median, pitch range factor).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct PerturbParams {
    pub formant_shift_ratio: f64,
    pub target_pitch_median: f64,
    pub pitch_range_factor: f64,
}

impl PerturbParams {
    pub fn new(formant_shift_ratio: f64, target_pitch_median: f64, pitch_range_factor: f64) -> Result<Self> {
        let p = Self {
            formant_shift_ratio,
            target_pitch_median,
            pitch_range_factor,
        };
        p.validate()?;
        Ok(p)
    }

    /// Male-to-female conversion.
    pub fn male_to_female() -> Self {
        Self {
            formant_shift_ratio: 1.1,
            target_pitch_median: 300.0,
            pitch_range_factor: 1.2,
        }
    }

    /// Female-to-male conversion.
    pub fn female_to_male() -> Self {
        Self {
            formant_shift_ratio: 1.0 / 1.1,
            target_pitch_median: 100.0,
            pitch_range_factor: 1.0 / 1.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.formant_shift_ratio > 0.0
            && self.target_pitch_median > 0.0
            && self.pitch_range_factor > 0.0
            && (0.5..=2.0).contains(&self.formant_shift_ratio);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "perturbation params must be positive with formant ratio in [0.5, 2]: {self:?}"
            )))
        }
    }
}

impl TryFrom<[f64; 3]> for PerturbParams {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<PerturbParams> for [f64; 3] {
    fn from(p: PerturbParams) -> Self {
        [p.formant_shift_ratio, p.target_pitch_median, p.pitch_range_factor]
    }
}

/// Per-frame f0 in Hz (0 = unvoiced) every `hop` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub values: Vec<f64>,
    pub hop: f64,
}
