use std::collections::BTreeMap;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    m: ArrayD<f64>,
    v: ArrayD<f64>,
    t: u32,
}

/// AdamW with bias correction and decoupled weight decay. Moment estimates
/// and step counts are kept per tensor, so tensors that sit out some steps
/// (frozen during warm-up) start their own count when first updated.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    state: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig) -> Self {
        Self {
            cfg,
            state: BTreeMap::new(),
        }
    }

    /// Updates every tensor for which `update(name)` is true and a gradient
    /// exists. All gradients are checked for finiteness first, so a failing
    /// step leaves the parameters untouched.
    pub fn step(&mut self, ps: &mut ParamStore, grads: &Grads, lr: f64, update: impl Fn(&str) -> bool) -> Result<()> {
        for (name, g) in grads.iter() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        for (name, g) in grads.iter() {
            if !update(name) {
                continue;
            }
            let theta = ps
                .value_mut(name)
                .ok_or_else(|| Error::invalid(format!("gradient for unknown parameter {name:?}")))?;
            if theta.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "{name}: parameter {:?} vs gradient {:?}",
                    theta.shape(),
                    g.shape()
                )));
            }
            let st = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m: ArrayD::zeros(g.raw_dim()),
                v: ArrayD::zeros(g.raw_dim()),
                t: 0,
            });
            st.t += 1;
            let bc1 = 1.0 - beta1.powi(st.t as i32);
            let bc2 = 1.0 - beta2.powi(st.t as i32);
            ndarray::Zip::from(theta)
                .and(&mut st.m)
                .and(&mut st.v)
                .and(g)
                .for_each(|p, m, v, &gi| {
                    *m = beta1 * *m + (1.0 - beta1) * gi;
                    *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * (mhat / (vhat.sqrt() + eps) + weight_decay * *p);
                });
        }
        Ok(())
    }
}

/// Linear warm-up from `lr_min` to `lr_max`, a hold at `lr_max`, then linear
/// decay back to `lr_min` at `total_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_min: f64,
    pub lr_max: f64,
    pub warmup_frac: f64,
    pub hold_frac: f64,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn new(total_steps: usize) -> Self {
        Self {
            lr_min: 1e-5,
            lr_max: 1e-4,
            warmup_frac: 0.03,
            hold_frac: 0.47,
            total_steps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.warmup_frac)
            || !(0.0..=1.0).contains(&self.hold_frac)
            || self.warmup_frac + self.hold_frac > 1.0
        {
            return Err(Error::Config(format!(
                "warmup_frac {} + hold_frac {} must lie in [0, 1]",
                self.warmup_frac, self.hold_frac
            )));
        }
        if !(self.lr_min <= self.lr_max) || self.lr_min < 0.0 {
            return Err(Error::Config(format!(
                "need 0 ≤ lr_min ≤ lr_max, got {} and {}",
                self.lr_min, self.lr_max
            )));
        }
        Ok(())
    }

    /// Number of warm-up steps; at least one whenever warm-up is enabled so
    /// that step 0 always starts at `lr_min`.
    pub fn warmup_steps(&self) -> usize {
        if self.warmup_frac <= 0.0 || self.total_steps == 0 {
            return 0;
        }
        ((self.warmup_frac * self.total_steps as f64).round() as usize).max(1)
    }

    pub fn hold_end(&self) -> usize {
        (self.warmup_steps() + (self.hold_frac * self.total_steps as f64).round() as usize).min(self.total_steps)
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::invalid(format!(
                "step {step} beyond schedule length {}",
                self.total_steps
            )));
        }
        let w = self.warmup_steps();
        let h = self.hold_end();
        let span = self.lr_max - self.lr_min;
        Ok(if step < w {
            self.lr_min + span * step as f64 / w as f64
        } else if step <= h {
            self.lr_max
        } else {
            let decay = (self.total_steps - h) as f64;
            self.lr_max - span * (step - h) as f64 / decay
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::params::ParamFlags;
    use ndarray::arr1;
    use proptest::prelude::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut ps = ParamStore::new();
        ps.insert("theta", arr1(&[v]).into_dyn(), ParamFlags::TRAINABLE)
            .unwrap();
        ps
    }

    fn grad(v: f64) -> Grads {
        let mut g = Grads::new();
        g.add("theta", arr1(&[v]));
        g
    }

    #[test]
    fn first_step_is_minus_lr_sign() {
        let mut ps = scalar_store(0.0);
        let mut opt = AdamW::new(AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        opt.step(&mut ps, &grad(1.0), 0.1, |_| true).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((ps.vec("theta")[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn pure_decay() {
        let mut ps = scalar_store(1.0);
        let mut opt = AdamW::new(AdamWConfig::default());
        opt.step(&mut ps, &grad(0.0), 0.1, |_| true).unwrap();
        assert!((ps.vec("theta")[0] - (1.0 - 0.1 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn descends_on_square() {
        let mut ps = scalar_store(1.0);
        let mut opt = AdamW::new(AdamWConfig::default());
        let mut prev = 1.0f64;
        for _ in 0..10 {
            let th = ps.vec("theta")[0];
            opt.step(&mut ps, &grad(2.0 * th), 0.05, |_| true).unwrap();
            let now = ps.vec("theta")[0].abs();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut ps = scalar_store(1.0);
        let mut opt = AdamW::new(AdamWConfig::default());
        let err = opt.step(&mut ps, &grad(f64::NAN), 0.1, |_| true).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(ps.vec("theta")[0], 1.0);
    }

    #[test]
    fn masked_tensor_untouched() {
        let mut ps = scalar_store(1.0);
        let mut opt = AdamW::new(AdamWConfig::default());
        opt.step(&mut ps, &grad(1.0), 0.1, |_| false).unwrap();
        assert_eq!(ps.vec("theta")[0], 1.0);
    }

    #[test]
    fn schedule_anchor_points() {
        let s = LrSchedule::new(1000);
        assert_eq!(s.lr_at(0).unwrap(), 1e-5);
        assert_eq!(s.lr_at(250).unwrap(), 1e-4);
        assert!((s.lr_at(1000).unwrap() - 1e-5).abs() < 1e-18);
        assert_eq!(s.lr_at(30).unwrap(), 1e-4);
        assert!((s.lr_at(15).unwrap() - 5.5e-5).abs() < 1e-18);
        assert!(s.lr_at(1001).is_err());
    }

    proptest! {
        #[test]
        fn schedule_is_continuous(total in 1usize..5000) {
            let s = LrSchedule::new(total);
            let w = s.warmup_steps().max(1) as f64;
            let bound = (s.lr_max - s.lr_min) / w + 1e-15;
            for k in 0..total {
                let d = (s.lr_at(k + 1).unwrap() - s.lr_at(k).unwrap()).abs();
                prop_assert!(d <= bound, "step {k}: {d} > {bound}");
            }
        }
    }
}
