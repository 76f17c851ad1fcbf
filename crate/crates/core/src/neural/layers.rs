//! Layers with explicit forward caches and backward passes.
//!
//! Activations are `N × D` row-major matrices. Each `backward` accumulates
//! parameter gradients into a [`Grads`] and returns the input gradient.

use libm::erf;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::params::{Grads, ParamFlags, ParamStore};
use crate::error::{Error, Result};

pub const NORM_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    XavierUniform,
    Normal(f64),
    Zeros,
}

fn init_matrix(rows: usize, cols: usize, init: Init, rng: &mut impl Rng) -> Array2<f64> {
    match init {
        Init::XavierUniform => {
            let a = (6.0 / (rows + cols) as f64).sqrt();
            let u = Uniform::new_inclusive(-a, a).unwrap();
            Array2::from_shape_fn((rows, cols), |_| u.sample(rng))
        }
        Init::Normal(std) => {
            let n = Normal::new(0.0, std).unwrap();
            Array2::from_shape_fn((rows, cols), |_| n.sample(rng))
        }
        Init::Zeros => Array2::zeros((rows, cols)),
    }
}

// ---------------------------------------------------------------------------

/// `y = x·W + b` with `W` of shape `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub name: String,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, in_dim: usize, out_dim: usize) -> Self {
        Self {
            name: name.into(),
            in_dim,
            out_dim,
        }
    }

    pub fn w(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn b(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn init(&self, ps: &mut ParamStore, init: Init, flags: ParamFlags, rng: &mut impl Rng) -> Result<()> {
        ps.insert(
            self.w(),
            init_matrix(self.in_dim, self.out_dim, init, rng).into_dyn(),
            flags,
        )?;
        ps.insert(self.b(), Array1::<f64>::zeros(self.out_dim).into_dyn(), flags)
    }

    pub fn forward(&self, ps: &ParamStore, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&ps.mat(&self.w())) + ps.vec(&self.b())
    }

    pub fn backward(&self, ps: &ParamStore, x: &ArrayView2<f64>, dy: &Array2<f64>, grads: &mut Grads) -> Array2<f64> {
        grads.add(&self.w(), x.t().dot(dy));
        grads.add(&self.b(), dy.sum_axis(Axis(0)));
        dy.dot(&ps.mat(&self.w()).t())
    }
}

// ---------------------------------------------------------------------------

pub fn gelu(x: f64) -> f64 {
    x * std_normal_cdf(x)
}

pub fn gelu_grad(x: f64) -> f64 {
    std_normal_cdf(x) + x * (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

pub fn gelu_forward(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(gelu)
}

pub fn gelu_backward(x: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = x.mapv(gelu_grad);
    dx *= dy;
    dx
}

// ---------------------------------------------------------------------------

/// Row-wise layer normalization with affine `gamma`, `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self { name: name.into(), dim }
    }

    pub fn gamma(&self) -> String {
        format!("{}.gamma", self.name)
    }

    pub fn beta(&self) -> String {
        format!("{}.beta", self.name)
    }

    pub fn init(&self, ps: &mut ParamStore, flags: ParamFlags) -> Result<()> {
        ps.insert(self.gamma(), Array1::<f64>::ones(self.dim).into_dyn(), flags)?;
        ps.insert(self.beta(), Array1::<f64>::zeros(self.dim).into_dyn(), flags)
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, NormCache) {
        let d = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / d;
        let centered = x - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
        let xhat = centered * inv_std.view().insert_axis(Axis(1));
        let y = &xhat * &ps.vec(&self.gamma()) + ps.vec(&self.beta());
        (y, NormCache { xhat, inv_std })
    }

    pub fn backward(&self, ps: &ParamStore, c: &NormCache, dy: &Array2<f64>, grads: &mut Grads) -> Array2<f64> {
        grads.add(&self.gamma(), (dy * &c.xhat).sum_axis(Axis(0)));
        grads.add(&self.beta(), dy.sum_axis(Axis(0)));
        let dxhat = dy * &ps.vec(&self.gamma());
        let d = dy.ncols() as f64;
        let m1 = dxhat.sum_axis(Axis(1)) / d;
        let m2 = (&dxhat * &c.xhat).sum_axis(Axis(1)) / d;
        let mut dx = dxhat - m1.view().insert_axis(Axis(1)) - &c.xhat * &m2.view().insert_axis(Axis(1));
        dx *= &c.inv_std.view().insert_axis(Axis(1));
        dx
    }
}

// ---------------------------------------------------------------------------

/// Batch normalization over rows (frames), per feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub name: String,
    pub dim: usize,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    norm: NormCache,
    pub batch_mean: Array1<f64>,
    /// Unbiased batch variance, used for the running estimate.
    pub batch_var: Array1<f64>,
    training: bool,
}

impl BatchNorm {
    pub fn new(name: impl Into<String>, dim: usize) -> Self {
        Self { name: name.into(), dim }
    }

    pub fn gamma(&self) -> String {
        format!("{}.gamma", self.name)
    }

    pub fn beta(&self) -> String {
        format!("{}.beta", self.name)
    }

    pub fn running_mean(&self) -> String {
        format!("{}.running_mean", self.name)
    }

    pub fn running_var(&self) -> String {
        format!("{}.running_var", self.name)
    }

    pub fn init(&self, ps: &mut ParamStore, flags: ParamFlags) -> Result<()> {
        ps.insert(self.gamma(), Array1::<f64>::ones(self.dim).into_dyn(), flags)?;
        ps.insert(self.beta(), Array1::<f64>::zeros(self.dim).into_dyn(), flags)?;
        ps.insert(
            self.running_mean(),
            Array1::<f64>::zeros(self.dim).into_dyn(),
            ParamFlags::BUFFER,
        )?;
        ps.insert(
            self.running_var(),
            Array1::<f64>::ones(self.dim).into_dyn(),
            ParamFlags::BUFFER,
        )
    }

    /// Training mode normalizes with batch statistics and needs at least two
    /// rows; eval mode uses the running statistics.
    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>, training: bool) -> Result<(Array2<f64>, BatchNormCache)> {
        let n = x.nrows();
        let (mean, var, batch_var) = if training {
            if n < 2 {
                return Err(Error::Shape(format!(
                    "{}: batch normalization needs at least 2 frames in training mode, got {n}",
                    self.name
                )));
            }
            let mean = x.sum_axis(Axis(0)) / n as f64;
            let ss = (x - &mean).mapv(|v| v * v).sum_axis(Axis(0));
            let var = &ss / n as f64;
            let unbiased = ss / (n - 1) as f64;
            (mean, var, unbiased)
        } else {
            let m = ps.vec(&self.running_mean()).to_owned();
            let v = ps.vec(&self.running_var()).to_owned();
            (m, v.clone(), v)
        };
        let inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
        let xhat = (x - &mean) * &inv_std;
        let y = &xhat * &ps.vec(&self.gamma()) + ps.vec(&self.beta());
        Ok((
            y,
            BatchNormCache {
                norm: NormCache { xhat, inv_std },
                batch_mean: mean,
                batch_var,
                training,
            },
        ))
    }

    /// Folds the batch statistics of a training-mode forward pass into the
    /// running buffers.
    pub fn update_running(&self, ps: &mut ParamStore, c: &BatchNormCache) -> Result<()> {
        if !c.training {
            return Ok(());
        }
        let rm = &ps.vec(&self.running_mean()) * (1.0 - BN_MOMENTUM) + &c.batch_mean * BN_MOMENTUM;
        let rv = &ps.vec(&self.running_var()) * (1.0 - BN_MOMENTUM) + &c.batch_var * BN_MOMENTUM;
        ps.set(&self.running_mean(), rm.into_dyn())?;
        ps.set(&self.running_var(), rv.into_dyn())
    }

    pub fn backward(&self, ps: &ParamStore, c: &BatchNormCache, dy: &Array2<f64>, grads: &mut Grads) -> Array2<f64> {
        let xhat = &c.norm.xhat;
        grads.add(&self.gamma(), (dy * xhat).sum_axis(Axis(0)));
        grads.add(&self.beta(), dy.sum_axis(Axis(0)));
        let dxhat = dy * &ps.vec(&self.gamma());
        if !c.training {
            return dxhat * &c.norm.inv_std;
        }
        let n = dy.nrows() as f64;
        let m1 = dxhat.sum_axis(Axis(0)) / n;
        let m2 = (&dxhat * xhat).sum_axis(Axis(0)) / n;
        (dxhat - &m1 - xhat * &m2) * &c.norm.inv_std
    }
}

// ---------------------------------------------------------------------------

/// Multi-head scaled dot-product self-attention.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub name: String,
    pub d_model: usize,
    pub n_heads: usize,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// One `T × T` row-stochastic matrix per head.
    pub probs: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new(name: impl Into<String>, d_model: usize, n_heads: usize) -> Self {
        let name = name.into();
        let lin = |s: &str| Linear::new(format!("{name}.{s}"), d_model, d_model);
        Self {
            q: lin("q"),
            k: lin("k"),
            v: lin("v"),
            o: lin("o"),
            name,
            d_model,
            n_heads,
        }
    }

    pub fn init(
        &self,
        ps: &mut ParamStore,
        init: Init,
        out_init: Init,
        flags: ParamFlags,
        rng: &mut impl Rng,
    ) -> Result<()> {
        self.q.init(ps, init, flags, rng)?;
        self.k.init(ps, init, flags, rng)?;
        self.v.init(ps, init, flags, rng)?;
        self.o.init(ps, out_init, flags, rng)
    }

    fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, AttentionCache) {
        let xv = x.view();
        let q = self.q.forward(ps, &xv);
        let k = self.k.forward(ps, &xv);
        let v = self.v.forward(ps, &xv);
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let mut concat = Array2::<f64>::zeros(x.raw_dim());
        let mut probs = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let p = softmax_rows(scores);
            concat.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let y = self.o.forward(ps, &concat.view());
        (
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                concat,
            },
        )
    }

    pub fn backward(&self, ps: &ParamStore, c: &AttentionCache, dy: &Array2<f64>, grads: &mut Grads) -> Array2<f64> {
        let dconcat = self.o.backward(ps, &c.concat.view(), dy, grads);
        let dk_ = self.head_dim();
        let scale = 1.0 / (dk_ as f64).sqrt();
        let mut dq = Array2::<f64>::zeros(c.q.raw_dim());
        let mut dk = Array2::<f64>::zeros(c.k.raw_dim());
        let mut dv = Array2::<f64>::zeros(c.v.raw_dim());
        for (h, p) in c.probs.iter().enumerate() {
            let cols = s![.., h * dk_..(h + 1) * dk_];
            let doh = dconcat.slice(cols);
            let dp = doh.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&p.t().dot(&doh));
            let row_dot = (&dp * p).sum_axis(Axis(1));
            let ds = (dp - row_dot.view().insert_axis(Axis(1))) * p * scale;
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        let xv = c.x.view();
        let mut dx = self.q.backward(ps, &xv, &dq, grads);
        dx += &self.k.backward(ps, &xv, &dk, grads);
        dx += &self.v.backward(ps, &xv, &dv, grads);
        dx
    }
}

pub fn softmax_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.rows_mut() {
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let z = row.sum();
        row /= z;
    }
    m
}

// ---------------------------------------------------------------------------

/// Position-wise `Linear → GELU → Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl FeedForward {
    pub fn new(name: &str, d_model: usize, d_ff: usize) -> Self {
        Self {
            fc1: Linear::new(format!("{name}.fc1"), d_model, d_ff),
            fc2: Linear::new(format!("{name}.fc2"), d_ff, d_model),
        }
    }

    pub fn init(
        &self,
        ps: &mut ParamStore,
        init: Init,
        out_init: Init,
        flags: ParamFlags,
        rng: &mut impl Rng,
    ) -> Result<()> {
        self.fc1.init(ps, init, flags, rng)?;
        self.fc2.init(ps, out_init, flags, rng)
    }

    pub fn forward(&self, ps: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, FeedForwardCache) {
        let pre = self.fc1.forward(ps, &x.view());
        let act = gelu_forward(&pre);
        let y = self.fc2.forward(ps, &act.view());
        (y, FeedForwardCache { x: x.clone(), pre, act })
    }

    pub fn backward(&self, ps: &ParamStore, c: &FeedForwardCache, dy: &Array2<f64>, grads: &mut Grads) -> Array2<f64> {
        let dact = self.fc2.backward(ps, &c.act.view(), dy, grads);
        let dpre = gelu_backward(&c.pre, &dact);
        self.fc1.backward(ps, &c.x.view(), &dpre, grads)
    }
}
