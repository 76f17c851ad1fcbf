//! Student-teacher fine-tuning with a bootstrap-your-own-latent objective.
//!
//! The student (encoder, projector, predictor) sees speaker-perturbed input;
//! the teacher (encoder, projector) sees the clean input and tracks the
//! student by an exponential moving average.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dsp::{perturb_speaker_with, PerturbConfig};
use crate::error::{Error, Result};
use crate::featurize::{log_mel, FeaturizerConfig};
use crate::io::{read_tensor, read_wav, UtteranceRecord, Waveform};
use crate::neural::head::MlpHeadCache;
use crate::neural::{AdamW, AdamWConfig, Grads, LrSchedule, Model, ModelConfig, ParamStore, PREDICTOR_PREFIX};

/// Guard against division by zero when normalizing output rows.
pub const NORM_GUARD: f64 = 1e-12;

/// Which teacher output the student regresses onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetLayer {
    /// Projection of the last encoder layer.
    #[default]
    Projector,
    /// Raw hidden state of encoder layer `k` (0 is the input projection).
    Layer(usize),
}

impl fmt::Display for TargetLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TargetLayer::Projector => write!(f, "projector"),
            TargetLayer::Layer(k) => write!(f, "{k}"),
        }
    }
}

impl std::str::FromStr for TargetLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "projector" {
            return Ok(TargetLayer::Projector);
        }
        s.parse().map(TargetLayer::Layer).map_err(|_| {
            Error::Config(format!(
                "target_layer must be \"projector\" or a layer index, got {s:?}"
            ))
        })
    }
}

impl Serialize for TargetLayer {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TargetLayer::Projector => ser.serialize_str("projector"),
            TargetLayer::Layer(k) => ser.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for TargetLayer {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Index(usize),
            Name(String),
        }
        match Raw::deserialize(de)? {
            Raw::Index(k) => Ok(TargetLayer::Layer(k)),
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ByolConfig {
    pub momentum: f64,
    pub epochs: usize,
    /// Clean audio packed into one batch.
    pub batch_seconds: f64,
    pub target_layer: TargetLayer,
    pub seed: u64,
    pub lr_min: f64,
    pub lr_max: f64,
    pub warmup_frac: f64,
    pub hold_frac: f64,
    pub weight_decay: f64,
    /// Diagnostic switch; when false the step also reports the gradient that
    /// would reach the teacher. The teacher is never updated by gradients.
    pub stop_gradient: bool,
}

impl Default for ByolConfig {
    fn default() -> Self {
        Self {
            momentum: 0.999,
            epochs: 15,
            batch_seconds: 360.0,
            target_layer: TargetLayer::Projector,
            seed: 0,
            lr_min: 1e-5,
            lr_max: 1e-4,
            warmup_frac: 0.03,
            hold_frac: 0.47,
            weight_decay: 0.01,
            stop_gradient: true,
        }
    }
}

impl ByolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} outside [0, 1]", self.momentum)));
        }
        if !(self.batch_seconds > 0.0) {
            return Err(Error::Config("batch_seconds must be > 0".into()));
        }
        self.schedule(1).validate()
    }

    pub fn schedule(&self, total_steps: usize) -> LrSchedule {
        LrSchedule {
            lr_min: self.lr_min,
            lr_max: self.lr_max,
            warmup_frac: self.warmup_frac,
            hold_frac: self.hold_frac,
            total_steps,
        }
    }
}

// ---------------------------------------------------------------------------
// Loss

fn normalize_rows(x: &ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r).sqrt().max(NORM_GUARD)).collect();
    let mut out = x.to_owned();
    for (mut row, &n) in out.rows_mut().into_iter().zip(&norms) {
        row /= n;
    }
    (out, norms)
}

fn check_pair_shapes(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("student {:?} vs teacher {:?}", a.dim(), b.dim())));
    }
    if a.nrows() == 0 {
        return Err(Error::Shape("loss over zero frames".into()));
    }
    Ok(())
}

/// `‖ĥ_t − ĝ_t‖²` for every frame, with rows ℓ2-normalized.
pub fn frame_losses(student: &Array2<f64>, teacher: &Array2<f64>) -> Result<Vec<f64>> {
    check_pair_shapes(student, teacher)?;
    let (h, _) = normalize_rows(&student.view());
    let (g, _) = normalize_rows(&teacher.view());
    Ok((&h - &g).rows().into_iter().map(|r| r.dot(&r)).collect())
}

/// Mean over frames of the squared distance between normalized rows,
/// `(1/T)·Σ (2 − 2·cos_t)`.
pub fn byol_loss(student: &Array2<f64>, teacher: &Array2<f64>) -> Result<f64> {
    let f = frame_losses(student, teacher)?;
    Ok(f.iter().sum::<f64>() / f.len() as f64)
}

/// Loss with its gradients with respect to both (unnormalized) inputs.
pub fn byol_loss_grad(student: &Array2<f64>, teacher: &Array2<f64>) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    check_pair_shapes(student, teacher)?;
    let n = student.nrows() as f64;
    let (h, hn) = normalize_rows(&student.view());
    let (g, gn) = normalize_rows(&teacher.view());
    let diff = &h - &g;
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
    let dh = &diff * (2.0 / n);
    let back = |u: &Array2<f64>, norms: &[f64], du: &Array2<f64>| {
        let mut out = du.clone();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let ui = u.row(i);
            let proj = ui.dot(&row);
            row.scaled_add(-proj, &ui);
            row /= norms[i];
        }
        out
    };
    let ds = back(&h, &hn, &dh);
    let dt = back(&g, &gn, &(-&dh));
    Ok((loss, ds, dt))
}

// ---------------------------------------------------------------------------
// EMA

/// `ξ ← m·ξ + (1 − m)·θ` over every tensor of the teacher.
pub fn ema_update(teacher: &mut ParamStore, student: &ParamStore, m: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::invalid(format!("momentum {m} outside [0, 1]")));
    }
    for (name, xi) in teacher.iter_mut_values() {
        let theta = student
            .get(name)
            .map_err(|_| Error::invalid(format!("teacher tensor {name:?} has no student counterpart")))?;
        if theta.value.shape() != xi.shape() {
            return Err(Error::Shape(format!(
                "{name}: teacher {:?} vs student {:?}",
                xi.shape(),
                theta.value.shape()
            )));
        }
        if m == 1.0 {
            continue;
        }
        ndarray::Zip::from(xi)
            .and(&theta.value)
            .for_each(|x, &t| *x = m * *x + (1.0 - m) * t);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training state

/// One `(clean, perturbed)` pair of frame-feature matrices of equal length.
pub type Pair = (Array2<f64>, Array2<f64>);

#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    pub cfg: ByolConfig,
    pub student: ParamStore,
    pub teacher: ParamStore,
    pub optimizer: AdamW,
    pub schedule: LrSchedule,
    pub step: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub student_grads: Grads,
    /// Zero unless stop-gradient is disabled.
    pub teacher_grads: Grads,
}

struct Forward {
    out: Array2<f64>,
    enc_caches: Vec<crate::neural::encoder::EncoderCache>,
    proj: Option<MlpHeadCache>,
    pred: Option<MlpHeadCache>,
    lens: Vec<usize>,
}

impl TrainState {
    /// Student initialized from `init` (or randomly from the seed), teacher a
    /// frozen copy of the student without the predictor.
    pub fn new(
        model_cfg: &ModelConfig,
        cfg: &ByolConfig,
        total_steps: usize,
        init: Option<ParamStore>,
    ) -> Result<Self> {
        cfg.validate()?;
        let model = Model::new(model_cfg)?;
        if let TargetLayer::Layer(k) = cfg.target_layer {
            model.encoder.check_layer(k)?;
            if model.predictor.out_dim() != model_cfg.encoder.d_model {
                return Err(Error::Config(format!(
                    "target_layer {k} needs predictor.out = d_model ({}), got {}",
                    model_cfg.encoder.d_model,
                    model.predictor.out_dim()
                )));
            }
        }
        let student = match init {
            Some(ps) => ps,
            None => model.init(cfg.seed)?,
        };
        let teacher = student.frozen_copy_without(PREDICTOR_PREFIX);
        let schedule = cfg.schedule(total_steps);
        schedule.validate()?;
        Ok(Self {
            model,
            cfg: cfg.clone(),
            student,
            teacher,
            optimizer: AdamW::new(AdamWConfig {
                weight_decay: cfg.weight_decay,
                ..Default::default()
            }),
            schedule,
            step: 0,
        })
    }

    pub fn in_warmup(&self) -> bool {
        self.step < self.schedule.warmup_steps()
    }

    fn student_forward(&self, inputs: &[&Array2<f64>]) -> Result<Forward> {
        let enc = &self.model.encoder;
        let top = enc.n_layers();
        let mut hs = Vec::with_capacity(inputs.len());
        let mut caches = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (mut h, c) = enc.forward(&self.student, x, top)?;
            hs.push(h.pop().unwrap());
            caches.push(c);
        }
        let lens = hs.iter().map(|h| h.nrows()).collect();
        let cat = stack_rows(&hs)?;
        let (p1, proj) = self.model.projector.forward(&self.student, &cat, true)?;
        let (out, pred) = self.model.predictor.forward(&self.student, &p1, true)?;
        Ok(Forward {
            out,
            enc_caches: caches,
            proj: Some(proj),
            pred: Some(pred),
            lens,
        })
    }

    fn teacher_forward(&self, inputs: &[&Array2<f64>]) -> Result<Forward> {
        let enc = &self.model.encoder;
        let upto = match self.cfg.target_layer {
            TargetLayer::Projector => enc.n_layers(),
            TargetLayer::Layer(k) => k,
        };
        let mut hs = Vec::with_capacity(inputs.len());
        let mut caches = Vec::with_capacity(inputs.len());
        for x in inputs {
            let (mut h, c) = enc.forward(&self.teacher, x, upto)?;
            hs.push(h.pop().unwrap());
            caches.push(c);
        }
        let lens = hs.iter().map(|h| h.nrows()).collect();
        let cat = stack_rows(&hs)?;
        let (out, proj) = match self.cfg.target_layer {
            TargetLayer::Projector => {
                let (y, c) = self.model.projector.forward(&self.teacher, &cat, true)?;
                (y, Some(c))
            }
            TargetLayer::Layer(_) => (cat, None),
        };
        Ok(Forward {
            out,
            enc_caches: caches,
            proj,
            pred: None,
            lens,
        })
    }

    /// Teacher targets for one clean utterance.
    pub fn teacher_targets(&self, clean: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.teacher_forward(&[clean])?.out)
    }

    /// Student predictions for one perturbed utterance.
    pub fn student_predictions(&self, perturbed: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.student_forward(&[perturbed])?.out)
    }

    /// Loss of the current parameters on a batch, without any update.
    pub fn evaluate(&self, batch: &[Pair]) -> Result<f64> {
        check_batch(batch)?;
        let clean: Vec<&Array2<f64>> = batch.iter().map(|p| &p.0).collect();
        let pert: Vec<&Array2<f64>> = batch.iter().map(|p| &p.1).collect();
        let s = self.student_forward(&pert)?;
        let t = self.teacher_forward(&clean)?;
        byol_loss(&s.out, &t.out)
    }

    /// Forward, backward, AdamW update of the student, EMA update of the
    /// teacher.
    pub fn train_step(&mut self, batch: &[Pair]) -> Result<StepOutput> {
        check_batch(batch)?;
        let step = self.step;
        let lr = self.schedule.lr_at(step.min(self.schedule.total_steps))?;
        let clean: Vec<&Array2<f64>> = batch.iter().map(|p| &p.0).collect();
        let pert: Vec<&Array2<f64>> = batch.iter().map(|p| &p.1).collect();
        let s = self.student_forward(&pert)?;
        let t = self.teacher_forward(&clean)?;
        let (loss, d_student, d_teacher) = byol_loss_grad(&s.out, &t.out)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!(
                    "student output finite: {}, teacher output finite: {}",
                    s.out.iter().all(|v| v.is_finite()),
                    t.out.iter().all(|v| v.is_finite())
                ),
            });
        }

        let student_grads = self.backward_student(&s, &d_student)?;
        let teacher_grads = if self.cfg.stop_gradient {
            let mut g = Grads::new();
            for (name, p) in self.teacher.iter() {
                g.add(name, ndarray::ArrayD::<f64>::zeros(p.value.raw_dim()));
            }
            g
        } else {
            self.backward_teacher(&t, &d_teacher)?
        };

        let model = self.model.clone();
        model
            .projector
            .update_running(&mut self.student, s.proj.as_ref().unwrap())?;
        model
            .predictor
            .update_running(&mut self.student, s.pred.as_ref().unwrap())?;

        let warm = self.in_warmup();
        let flags: std::collections::HashMap<String, (bool, bool)> = self
            .student
            .iter()
            .map(|(k, p)| (k.clone(), (p.flags.trainable, p.flags.reinitialized)))
            .collect();
        self.optimizer.step(&mut self.student, &student_grads, lr, |name| {
            flags
                .get(name)
                .is_some_and(|&(trainable, reinit)| trainable && (!warm || reinit))
        })?;
        ema_update(&mut self.teacher, &self.student, self.cfg.momentum)?;
        self.step += 1;
        Ok(StepOutput {
            step,
            lr,
            loss,
            student_grads,
            teacher_grads,
        })
    }

    fn backward_student(&self, f: &Forward, d_out: &Array2<f64>) -> Result<Grads> {
        let mut g = Grads::new();
        let ps = &self.student;
        let d1 = self
            .model
            .predictor
            .backward(ps, f.pred.as_ref().unwrap(), d_out, &mut g);
        let dh = self.model.projector.backward(ps, f.proj.as_ref().unwrap(), &d1, &mut g);
        self.backward_encoder(ps, f, &dh, &mut g);
        Ok(g)
    }

    fn backward_teacher(&self, f: &Forward, d_out: &Array2<f64>) -> Result<Grads> {
        let mut g = Grads::new();
        let ps = &self.teacher;
        let dh = match &f.proj {
            Some(c) => self.model.projector.backward(ps, c, d_out, &mut g),
            None => d_out.clone(),
        };
        self.backward_encoder(ps, f, &dh, &mut g);
        Ok(g)
    }

    fn backward_encoder(&self, ps: &ParamStore, f: &Forward, dh: &Array2<f64>, g: &mut Grads) {
        let mut start = 0;
        for (c, &len) in f.enc_caches.iter().zip(&f.lens) {
            let d = dh.slice(s![start..start + len, ..]).to_owned();
            self.model.encoder.backward(ps, c, &d, g);
            start += len;
        }
    }
}

fn stack_rows(parts: &[Array2<f64>]) -> Result<Array2<f64>> {
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
}

fn check_batch(batch: &[Pair]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    for (i, (c, p)) in batch.iter().enumerate() {
        if c.dim() != p.dim() {
            return Err(Error::Shape(format!(
                "pair {i}: clean {:?} vs perturbed {:?}",
                c.dim(),
                p.dim()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Data

/// Source of training pairs. `pair(i, epoch)` must be deterministic.
pub trait PairSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Clean audio duration in seconds, used for batch packing.
    fn duration(&self, i: usize) -> f64;
    fn pair(&self, i: usize, epoch: usize) -> Result<Pair>;
}

/// Fixed pairs held in memory.
#[derive(Debug, Clone)]
pub struct MemoryPairs {
    pub pairs: Vec<Pair>,
    pub frame_rate: f64,
}

impl PairSource for MemoryPairs {
    fn len(&self) -> usize {
        self.pairs.len()
    }
    fn duration(&self, i: usize) -> f64 {
        self.pairs[i].0.nrows() as f64 / self.frame_rate
    }
    fn pair(&self, i: usize, _epoch: usize) -> Result<Pair> {
        Ok(self.pairs[i].clone())
    }
}

/// Waveforms perturbed afresh every epoch; clean features are computed once.
pub struct AudioPairs {
    waves: Vec<Waveform>,
    clean: Vec<Array2<f64>>,
    featurizer: FeaturizerConfig,
    perturb: PerturbConfig,
}

impl AudioPairs {
    pub fn new(waves: Vec<Waveform>, featurizer: FeaturizerConfig, perturb: PerturbConfig) -> Result<Self> {
        let clean = waves
            .par_iter()
            .map(|w| log_mel(w, &featurizer).map(|f| f.to_f64()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            waves,
            clean,
            featurizer,
            perturb,
        })
    }

    fn seed(&self, i: usize, epoch: usize) -> u64 {
        self.perturb
            .seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(((epoch as u64) << 32) ^ i as u64)
    }
}

impl PairSource for AudioPairs {
    fn len(&self) -> usize {
        self.waves.len()
    }
    fn duration(&self, i: usize) -> f64 {
        self.waves[i].duration()
    }
    fn pair(&self, i: usize, epoch: usize) -> Result<Pair> {
        let p = perturb_speaker_with(&self.waves[i], &self.perturb, self.seed(i, epoch))?;
        let pf = log_mel(&p, &self.featurizer)?.to_f64();
        Ok((self.clean[i].clone(), pf))
    }
}

/// Builds a pair source from manifest records: audio records are perturbed,
/// feature-only records train on identical clean and "perturbed" inputs.
pub fn pair_source_from_records(
    records: &[UtteranceRecord],
    featurizer: &FeaturizerConfig,
    perturb: &PerturbConfig,
    input_layer: Option<usize>,
) -> Result<Box<dyn PairSource>> {
    if records.is_empty() {
        return Err(Error::invalid("empty manifest"));
    }
    if records.iter().all(|r| r.audio.is_some()) {
        let waves = records
            .par_iter()
            .map(|r| read_wav(r.audio.as_ref().unwrap()))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Box::new(AudioPairs::new(waves, featurizer.clone(), perturb.clone())?));
    }
    let pairs = records
        .iter()
        .map(|r| {
            let path = r
                .feature_path(input_layer)
                .ok_or_else(|| Error::invalid(format!("{}: neither audio nor features", r.utterance_id)))?;
            let f = read_tensor(&path)?.to_f64();
            Ok((f.clone(), f))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Box::new(MemoryPairs {
        pairs,
        frame_rate: crate::io::DEFAULT_FRAME_RATE,
    }))
}

/// Per-epoch batches: a seeded shuffle of utterance indices packed greedily
/// up to `batch_seconds` of clean audio (always at least one utterance).
pub fn plan_batches(durations: &[f64], batch_seconds: f64, epochs: usize, seed: u64) -> Vec<Vec<Vec<usize>>> {
    (0..epochs)
        .map(|e| {
            let mut order: Vec<usize> = (0..durations.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(e as u64)));
            let mut batches = Vec::new();
            let mut cur = Vec::new();
            let mut secs = 0.0;
            for i in order {
                if !cur.is_empty() && secs + durations[i] > batch_seconds {
                    batches.push(std::mem::take(&mut cur));
                    secs = 0.0;
                }
                cur.push(i);
                secs += durations[i];
            }
            if !cur.is_empty() {
                batches.push(cur);
            }
            batches
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingReport {
    pub losses: Vec<LossRecord>,
    pub checkpoints: Vec<PathBuf>,
    pub state: TrainState,
}

/// Trains for `cfg.epochs` epochs. With `out_dir`, writes `loss.csv` and
/// `checkpoints/epoch_NNN/{student,teacher}` after every epoch.
pub fn run_training(
    source: &dyn PairSource,
    model_cfg: &ModelConfig,
    cfg: &ByolConfig,
    init: Option<ParamStore>,
    out_dir: Option<&Path>,
) -> Result<TrainingReport> {
    if source.is_empty() {
        return Err(Error::invalid("empty manifest"));
    }
    let durations: Vec<f64> = (0..source.len()).map(|i| source.duration(i)).collect();
    let plan = plan_batches(&durations, cfg.batch_seconds, cfg.epochs, cfg.seed);
    let total: usize = plan.iter().map(|e| e.len()).sum();
    let mut state = TrainState::new(model_cfg, cfg, total, init)?;

    let mut log = match out_dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            let path = d.join("loss.csv");
            let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
            writeln!(w, "step,lr,loss").map_err(|e| Error::io(&path, e))?;
            Some((w, path))
        }
        None => None,
    };

    let mut losses = Vec::with_capacity(total);
    let mut checkpoints = Vec::new();
    for (epoch, batches) in plan.iter().enumerate() {
        let mut epoch_loss = 0.0;
        for idx in batches {
            let pairs = idx
                .par_iter()
                .map(|&i| source.pair(i, epoch))
                .collect::<Result<Vec<_>>>()?;
            let out = state.train_step(&pairs)?;
            epoch_loss += out.loss;
            if let Some((w, path)) = log.as_mut() {
                writeln!(w, "{},{:e},{}", out.step, out.lr, out.loss).map_err(|e| Error::io(&*path, e))?;
            }
            losses.push(LossRecord {
                step: out.step,
                lr: out.lr,
                loss: out.loss,
            });
        }
        log::info!(
            "epoch {}/{}: mean loss {:.5} over {} steps",
            epoch + 1,
            cfg.epochs,
            epoch_loss / batches.len().max(1) as f64,
            batches.len()
        );
        if let Some(d) = out_dir {
            if let Some((w, path)) = log.as_mut() {
                w.flush().map_err(|e| Error::io(&*path, e))?;
            }
            let dir = d.join("checkpoints").join(format!("epoch_{:03}", epoch + 1));
            state.student.save(dir.join("student"), state.step)?;
            state.teacher.save(dir.join("teacher"), state.step)?;
            let cfg_path = dir.join("model.json");
            fs::write(&cfg_path, serde_json::to_vec_pretty(model_cfg)?).map_err(|e| Error::io(&cfg_path, e))?;
            checkpoints.push(dir);
        }
    }
    Ok(TrainingReport {
        losses,
        checkpoints,
        state,
    })
}

/// Loads a student checkpoint directory written by [`run_training`].
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(Model, ParamStore)> {
    let dir = dir.as_ref();
    let cfg_path = dir.join("model.json");
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let cfg: ModelConfig = serde_json::from_str(&text)?;
    let (ps, _) = ParamStore::load(dir.join("student"))?;
    Ok((Model::new(&cfg)?, ps))
}
