//! Scalar energy-shaping terms with value/gradient/Hessian callbacks.
//!
//! The built-ins cover the quadratic and coupling-matched shapes used by the
//! case studies; arbitrary user shapes are accepted if they pass
//! [`consistency_check`].

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Which coordinate the shape acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapingArity {
    /// A function of the electrical state `x_e`.
    ElectricalState,
    /// A function of the mapped coordinate `z`.
    MappedCoordinate,
}

type ValueFn = Box<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
type HessFn = Box<dyn Fn(&[f64], f64) -> Matrix + Send + Sync>;

pub struct ShapingFn {
    pub name: String,
    pub arity: ShapingArity,
    pub time_varying: bool,
    value: ValueFn,
    grad: GradFn,
    hess: HessFn,
}

impl ShapingFn {
    pub fn new(
        name: &str,
        arity: ShapingArity,
        time_varying: bool,
        value: ValueFn,
        grad: GradFn,
        hess: HessFn,
    ) -> Self {
        ShapingFn { name: name.into(), arity, time_varying, value, grad, hess }
    }

    pub fn value(&self, v: &[f64], t: f64) -> f64 {
        (self.value)(v, t)
    }

    pub fn grad(&self, v: &[f64], t: f64) -> Vec<f64> {
        (self.grad)(v, t)
    }

    pub fn hess(&self, v: &[f64], t: f64) -> Matrix {
        (self.hess)(v, t)
    }
}

/// `gain/2 · ‖v - center(t)‖²` with a shared center callback.
pub fn quadratic_shaping(
    name: &str,
    arity: ShapingArity,
    gain: f64,
    time_varying: bool,
    center: alloc::sync::Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
) -> ShapingFn {
    let cv = center.clone();
    let cg = center.clone();
    let ch = center;
    ShapingFn::new(
        name,
        arity,
        time_varying,
        Box::new(move |v, t| {
            let c = cv(t);
            0.5 * gain * v.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }),
        Box::new(move |v, t| {
            let c = cg(t);
            v.iter().zip(&c).map(|(a, b)| gain * (a - b)).collect()
        }),
        Box::new(move |v, t| {
            let _ = ch(t);
            Matrix::identity(v.len()).scale(gain)
        }),
    )
}

/// `gain/2 · (‖v - center(t)‖² - ‖ref(t) - center(t)‖²)`, evaluated stably as
/// `gain · (v - ref)'(½(v + ref) - center)`.
///
/// Same gradient and Hessian as [`quadratic_shaping`], but the value is
/// measured against the reference motion: the case-study offsets put the
/// center many orders of magnitude away from the electrical state, and the
/// plain quadratic would lose all state dependence to cancellation.
pub fn quadratic_shaping_relative(
    name: &str,
    arity: ShapingArity,
    gain: f64,
    time_varying: bool,
    center: alloc::sync::Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
    reference: alloc::sync::Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
) -> ShapingFn {
    let cv = center.clone();
    let cg = center;
    let rv = reference;
    ShapingFn::new(
        name,
        arity,
        time_varying,
        Box::new(move |v, t| {
            let c = cv(t);
            let r = rv(t);
            gain
                * v.iter()
                    .zip(&r)
                    .zip(&c)
                    .map(|((a, b), cc)| (a - b) * (0.5 * (a + b) - cc))
                    .sum::<f64>()
        }),
        Box::new(move |v, t| {
            let c = cg(t);
            v.iter().zip(&c).map(|(a, b)| gain * (a - b)).collect()
        }),
        Box::new(move |v, _| Matrix::identity(v.len()).scale(gain)),
    )
}

/// Scalar cubic `coef · x³/3` whose gradient `coef · x²` matches a coupling
/// energy that is linear in position.
pub fn cubic_shaping(name: &str, coef: f64) -> ShapingFn {
    ShapingFn::new(
        name,
        ShapingArity::ElectricalState,
        false,
        Box::new(move |v, _| coef * v[0] * v[0] * v[0] / 3.0),
        Box::new(move |v, _| alloc::vec![coef * v[0] * v[0]]),
        Box::new(move |v, _| Matrix::scalar(2.0 * coef * v[0])),
    )
}

/// Verify gradient/Hessian consistency against central finite differences at
/// the given probe points; returns the worst relative errors `(grad, hess)`.
pub fn consistency_check(
    f: &ShapingFn,
    probes: &[(Vec<f64>, f64)],
    scale: f64,
) -> Result<(f64, f64)> {
    let mut worst_g = 0.0f64;
    let mut worst_h = 0.0f64;
    for (v, t) in probes {
        let n = v.len();
        let g = f.grad(v, *t);
        let hess = f.hess(v, *t);
        for i in 0..n {
            let h = 1e-6 * (v[i].abs() + scale);
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[i] += h;
            vm[i] -= h;
            let fd = (f.value(&vp, *t) - f.value(&vm, *t)) * 0.5 / h;
            let denom = g[i].abs().max(fd.abs()).max(scale * scale * 1e-12).max(1e-300);
            worst_g = worst_g.max((g[i] - fd).abs() / denom);
            let gp = f.grad(&vp, *t);
            let gm = f.grad(&vm, *t);
            for j in 0..n {
                let fdh = (gp[j] - gm[j]) * 0.5 / h;
                let denom = hess[(j, i)].abs().max(fdh.abs()).max(scale * 1e-12).max(1e-300);
                worst_h = worst_h.max((hess[(j, i)] - fdh).abs() / denom);
            }
        }
    }
    if worst_g > 1e-6 || worst_h > 1e-6 {
        return Err(Error::Config(alloc::format!(
            "shaping '{}' fails gradient/Hessian consistency: grad err {worst_g:.2e}, hess err {worst_h:.2e}",
            f.name
        )));
    }
    Ok((worst_g, worst_h))
}
