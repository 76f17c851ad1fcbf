use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::REINIT_STD;
use super::layers::{gelu_backward, gelu_forward, BatchNorm, BatchNormCache, Init, Linear};
use super::params::{Grads, ParamFlags, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpHeadConfig {
    pub hidden: usize,
    pub out: usize,
}

impl Default for MlpHeadConfig {
    fn default() -> Self {
        Self { hidden: 2048, out: 256 }
    }
}

impl MlpHeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.out == 0 {
            return Err(Error::Config("head hidden and out must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// `Linear(hidden) → BatchNorm → GELU → Linear(out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    pub fc1: Linear,
    pub bn: BatchNorm,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct MlpHeadCache {
    x: Array2<f64>,
    pub bn: BatchNormCache,
    normed: Array2<f64>,
    act: Array2<f64>,
}

impl MlpHead {
    pub fn new(name: &str, in_dim: usize, cfg: &MlpHeadConfig) -> Self {
        Self {
            fc1: Linear::new(format!("{name}.fc1"), in_dim, cfg.hidden),
            bn: BatchNorm::new(format!("{name}.bn"), cfg.hidden),
            fc2: Linear::new(format!("{name}.fc2"), cfg.hidden, cfg.out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.fc1.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.fc2.out_dim
    }

    /// Heads are always freshly initialized, N(0, 0.02).
    pub fn init(&self, ps: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        let g = Init::Normal(REINIT_STD);
        self.fc1.init(ps, g, ParamFlags::REINIT, rng)?;
        self.bn.init(ps, ParamFlags::REINIT)?;
        self.fc2.init(ps, g, ParamFlags::REINIT, rng)
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>, training: bool) -> Result<(Array2<f64>, MlpHeadCache)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "{}: expected {}-dim input, got {}",
                self.fc1.name,
                self.in_dim(),
                x.ncols()
            )));
        }
        let h = self.fc1.forward(ps, &x.view());
        let (normed, bn) = self.bn.forward(ps, &h, training)?;
        let act = gelu_forward(&normed);
        let y = self.fc2.forward(ps, &act.view());
        Ok((
            y,
            MlpHeadCache {
                x: x.clone(),
                bn,
                normed,
                act,
            },
        ))
    }

    pub fn update_running(&self, ps: &mut ParamStore, c: &MlpHeadCache) -> Result<()> {
        self.bn.update_running(ps, &c.bn)
    }

    pub fn backward(&self, ps: &ParamStore, c: &MlpHeadCache, dy: &Array2<f64>, grads: &mut Grads) -> Array2<f64> {
        let dact = self.fc2.backward(ps, &c.act.view(), dy, grads);
        let dnormed = gelu_backward(&c.normed, &dact);
        let dh = self.bn.backward(ps, &c.bn, &dnormed, grads);
        self.fc1.backward(ps, &c.x.view(), &dh, grads)
    }
}
