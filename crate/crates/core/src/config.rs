//! The single JSON configuration shared by every subcommand.
//!
//! Sections mirror the modules. Unknown keys are rejected at every level.
//! Scalars can be overridden with `section.key=value` assignments, where the
//! value is parsed as JSON and falls back to a bare string.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clusterer::ClustererConfig;
use crate::dsp::perturb::PerturbConfig;
use crate::error::{Error, Result};
use crate::evaluator::EvalConfig;
use crate::featurize::FeaturizerConfig;
use crate::neural::{EncoderConfig, MlpHeadConfig, ModelConfig};
use crate::segmenter::SegmenterConfig;
use crate::trainer::ByolConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub manifest: Option<PathBuf>,
    /// Student checkpoint directory (`checkpoints/epoch_NNN`).
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            checkpoint: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub dsp: PerturbConfig,
    pub featurizer: FeaturizerConfig,
    pub encoder: EncoderConfig,
    pub projector: MlpHeadConfig,
    pub predictor: MlpHeadConfig,
    pub byol: ByolConfig,
    pub segmenter: SegmenterConfig,
    pub clusterer: ClustererConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for Config {
    /// Full-scale defaults: a 12-layer, 768-wide encoder with 2048/256 heads.
    fn default() -> Self {
        Self {
            dsp: PerturbConfig::default(),
            featurizer: FeaturizerConfig::default(),
            encoder: EncoderConfig {
                input_dim: 40,
                n_layers: 12,
                d_model: 768,
                n_heads: 12,
                d_ff: 3072,
                reinit_last_n: 3,
            },
            projector: MlpHeadConfig::default(),
            predictor: MlpHeadConfig::default(),
            byol: ByolConfig::default(),
            segmenter: SegmenterConfig::default(),
            clusterer: ClustererConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

/// Keys whose defaults are published reference values, with a short note.
pub const REFERENCE_DEFAULTS: &[(&str, &str)] = &[
    ("dsp.threshold_hz", "f0 split between conversion branches"),
    ("dsp.m2f", "male-to-female (formant ratio, pitch median, range factor)"),
    ("dsp.f2m", "female-to-male (formant ratio, pitch median, range factor)"),
    ("encoder.reinit_last_n", "top blocks re-initialized before fine-tuning"),
    ("projector.hidden", "projector hidden width"),
    ("projector.out", "projector output width"),
    ("predictor.hidden", "predictor hidden width"),
    ("predictor.out", "predictor output width"),
    ("byol.momentum", "teacher EMA momentum"),
    ("byol.epochs", "fine-tuning epochs"),
    ("byol.batch_seconds", "six minutes of audio per batch"),
    ("byol.lr_min", "learning rate at start and end"),
    ("byol.lr_max", "peak learning rate"),
    ("byol.warmup_frac", "share of steps spent warming up"),
    ("byol.hold_frac", "share of steps held at the peak"),
    ("segmenter.second_per_syllable", "expected syllable duration"),
    ("segmenter.merge_threshold", "cosine threshold for merging neighbours"),
    ("clusterer.k1", "first-stage k-means clusters"),
    ("clusterer.k2", "agglomerative units"),
    ("eval.layer", "encoder layer used for segmentation"),
    ("eval.tolerance", "boundary hit tolerance in seconds"),
];

impl Config {
    /// Laptop-sized run: 256/64 clusters and a 4-layer, 256-wide encoder.
    pub fn desk_scale() -> Self {
        let mut c = Self {
            encoder: EncoderConfig {
                input_dim: 40,
                n_layers: 4,
                d_model: 256,
                n_heads: 4,
                d_ff: 1024,
                reinit_last_n: 1,
            },
            projector: MlpHeadConfig { hidden: 512, out: 128 },
            predictor: MlpHeadConfig { hidden: 512, out: 128 },
            ..Self::default()
        };
        c.byol.batch_seconds = 60.0;
        c.clusterer.k1 = 256;
        c.clusterer.k2 = 64;
        c.eval.layer = 3;
        c
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_over(&Self::default(), text)
    }

    /// Parses `text` with every missing key taken from `base`.
    pub fn from_json_over(base: &Config, text: &str) -> Result<Self> {
        let patch: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut tree = serde_json::to_value(base)?;
        merge(&mut tree, patch);
        let cfg: Config = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::load_over(&Self::default(), path)
    }

    pub fn load_over(base: &Config, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_over(base, &text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.featurizer.validate(16_000)?;
        self.model().validate()?;
        self.byol.validate()?;
        self.segmenter.validate()?;
        self.clusterer.validate()?;
        self.dsp.m2f.validate()?;
        self.dsp.f2m.validate()?;
        if self.encoder.input_dim != self.featurizer.n_mels {
            log::debug!(
                "encoder.input_dim {} differs from featurizer.n_mels {}; only external features fit",
                self.encoder.input_dim,
                self.featurizer.n_mels
            );
        }
        if !(self.eval.tolerance >= 0.0) {
            return Err(Error::Config("eval.tolerance must be ≥ 0".into()));
        }
        if !(0.0..1.0).contains(&self.eval.probe_test_frac) {
            return Err(Error::Config("eval.probe_test_frac must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            encoder: self.encoder.clone(),
            projector: self.projector.clone(),
            predictor: self.predictor.clone(),
        }
    }

    /// Applies one `path.to.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        self.apply_overrides(&[assignment])
    }

    fn set_unchecked(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let key = key.trim();
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut tree = serde_json::to_value(&*self)?;
        let mut node = &mut tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::Config(format!("{key}: {} is not a section", parts[..i].join("."))))?;
            if !obj.contains_key(*part) {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
            node = obj.get_mut(*part).unwrap();
        }
        if node.is_object() {
            return Err(Error::Config(format!("{key} is a section, not a value")));
        }
        *node = value;
        *self = serde_json::from_value(tree).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    /// Applies every override, then validates once, so related keys can be
    /// changed together. On error `self` is left untouched.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        let mut next = self.clone();
        for o in overrides {
            next.set_unchecked(o.as_ref())?;
        }
        next.validate()?;
        *self = next;
        Ok(())
    }
}

/// Objects merge key by key; anything else replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Every leaf key with its default, annotated when the default is a
/// published reference value.
pub fn describe_keys() -> Vec<String> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(m) => {
                for (k, v) in m {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, v, out);
                }
            }
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut keys = Vec::new();
    walk(
        "",
        &serde_json::to_value(Config::default()).expect("config serializes"),
        &mut keys,
    );
    keys.into_iter()
        .map(|(k, v)| match REFERENCE_DEFAULTS.iter().find(|(r, _)| *r == k) {
            Some((_, note)) => format!("{k} = {v}  [reference: {note}]"),
            None => format!("{k} = {v}"),
        })
        .collect()
}
