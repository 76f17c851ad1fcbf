//! Central finite-difference gradient checks.
//!
//! The error of one tensor is `max|a − n| / max(max|a|, max|n|, floor)`: the
//! largest deviation relative to the tensor's gradient scale. The floor is
//! 1e-3 of the largest gradient entry over all checked tensors (at least
//! 1e-6), which keeps tensors whose true gradient vanishes (attention key
//! biases, for one) from reporting finite-difference noise as error.

use ndarray::{Array2, ArrayD};

use super::params::{Grads, ParamStore};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const SCALE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>) -> f64 {
    relative_error_with_floor(analytic, numeric, SCALE_FLOOR)
}

pub fn relative_error_with_floor(analytic: &ArrayD<f64>, numeric: &ArrayD<f64>, floor: f64) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric.iter())
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    let scale = analytic
        .iter()
        .chain(numeric.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    diff / scale.max(floor)
}

/// Numerical gradient of `f` with respect to every non-buffer tensor.
pub fn numerical_param_grads(ps: &ParamStore, f: impl Fn(&ParamStore) -> f64, h: f64) -> Grads {
    let mut out = Grads::new();
    let mut work = ps.clone();
    let names: Vec<String> = ps
        .iter()
        .filter(|(_, p)| !p.flags.buffer)
        .map(|(k, _)| k.clone())
        .collect();
    for name in names {
        let n = ps.value(&name).len();
        let mut g = ArrayD::zeros(ps.value(&name).raw_dim());
        for i in 0..n {
            let orig = ps.value(&name).as_slice().expect("standard layout")[i];
            let slot = |w: &mut ParamStore, v: f64| {
                w.value_mut(&name).unwrap().as_slice_mut().unwrap()[i] = v;
            };
            slot(&mut work, orig + h);
            let up = f(&work);
            slot(&mut work, orig - h);
            let down = f(&work);
            slot(&mut work, orig);
            g.as_slice_mut().unwrap()[i] = (up - down) / (2.0 * h);
        }
        out.add(&name, g);
    }
    out
}

pub fn numerical_input_grad(x: &Array2<f64>, f: impl Fn(&Array2<f64>) -> f64, h: f64) -> Array2<f64> {
    let mut work = x.clone();
    let mut g = Array2::zeros(x.raw_dim());
    for idx in 0..x.len() {
        let (r, c) = (idx / x.ncols(), idx % x.ncols());
        let orig = x[[r, c]];
        work[[r, c]] = orig + h;
        let up = f(&work);
        work[[r, c]] = orig - h;
        let down = f(&work);
        work[[r, c]] = orig;
        g[[r, c]] = (up - down) / (2.0 * h);
    }
    g
}

/// Largest relative error over all tensors in `numeric`, with the name of the
/// worst tensor. Missing analytic gradients count as zero.
pub fn max_param_error(analytic: &Grads, numeric: &Grads) -> (f64, String) {
    let global = numeric
        .iter()
        .flat_map(|(_, g)| g.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-3 * global).max(SCALE_FLOOR);
    let mut worst = (0.0, String::new());
    for (name, n) in numeric.iter() {
        let zero = ArrayD::zeros(n.raw_dim());
        let a = analytic.get(name).unwrap_or(&zero);
        let e = relative_error_with_floor(a, n, floor);
        if e > worst.0 || worst.1.is_empty() {
            worst = (e, name.clone());
        }
    }
    worst
}
