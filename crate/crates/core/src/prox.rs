//! Accelerated proximal gradient for `f(x) + λ‖x‖₁` with smooth convex `f`.
//!
//! Backtracking halves the step until the quadratic upper bound holds;
//! momentum is reset whenever the composite objective would increase.

use ndarray::{Array1, ArrayView1, Zip};

use crate::error::{Error, Result};

/// Smallest step the line search will try before giving up.
pub(crate) const MIN_STEP: f64 = 1e-16;

pub(crate) trait Smooth {
    fn value(&self, x: ArrayView1<f64>) -> Result<f64>;
    fn value_grad(&self, x: ArrayView1<f64>) -> Result<(f64, Array1<f64>)>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ProxOptions {
    pub l1: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub step_init: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ProxOutcome {
    pub x: Array1<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

pub(crate) fn soft_threshold_into(z: ArrayView1<f64>, kappa: f64, out: &mut Array1<f64>) {
    Zip::from(out).and(z).for_each(|o, &v| {
        let a = v.abs() - kappa;
        *o = if a > 0.0 { a.copysign(v) } else { 0.0 };
    });
}

fn l1_norm(x: ArrayView1<f64>) -> f64 {
    x.iter().map(|v| v.abs()).sum()
}

/// Largest subgradient-optimality violation of `f + l1‖·‖₁` at `x`, given `∇f(x)`.
pub(crate) fn kkt_residual(x: ArrayView1<f64>, grad: ArrayView1<f64>, l1: f64) -> f64 {
    x.iter()
        .zip(grad.iter())
        .map(|(&xj, &gj)| if xj != 0.0 { (gj + l1 * xj.signum()).abs() } else { (gj.abs() - l1).max(0.0) })
        .fold(0.0, f64::max)
}

pub(crate) fn minimize<S: Smooth>(f: &S, x0: ArrayView1<f64>, opts: &ProxOptions) -> Result<ProxOutcome> {
    let ProxOptions { l1, max_iter, tol, step_init } = *opts;
    let mut x = x0.to_owned();
    let (fx0, gx0) = f.value_grad(x.view())?;
    let mut obj = fx0 + l1 * l1_norm(x.view());
    if !obj.is_finite() {
        return Err(Error::Numerical(format!("initial objective is {obj}")));
    }
    // momentum point and its smooth value/gradient; starts at x
    let mut y = x.clone();
    let (mut fy, mut gy) = (fx0, gx0);
    let mut t = 1.0f64;
    let mut step = step_init;
    let mut z = Array1::zeros(x.len());
    let mut iterations = 0;
    let mut kkt = f64::INFINITY;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let fz = loop {
            let trial = &y - &(step * &gy);
            soft_threshold_into(trial.view(), step * l1, &mut z);
            let fz = f.value(z.view())?;
            let diff = &z - &y;
            let bound = fy + gy.dot(&diff) + diff.dot(&diff) / (2.0 * step);
            if fz <= bound + 1e-12 * fy.abs().max(1.0) {
                break fz;
            }
            step *= 0.5;
            if step < MIN_STEP {
                let (_, gx) = f.value_grad(x.view())?;
                return Ok(ProxOutcome {
                    kkt_residual: kkt_residual(x.view(), gx.view(), l1),
                    x,
                    objective: obj,
                    iterations,
                    converged: false,
                });
            }
        };
        let obj_z = fz + l1 * l1_norm(z.view());
        if !obj_z.is_finite() {
            return Err(Error::Numerical(format!("objective became {obj_z}")));
        }
        if obj_z > obj && t > 1.0 {
            // restart momentum from the last accepted iterate
            t = 1.0;
            y.assign(&x);
            let (v, g) = f.value_grad(y.view())?;
            fy = v;
            gy = g;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let change = (obj - obj_z).abs();
        // y = z + beta (z - x)
        y = &z + &(beta * (&z - &x));
        std::mem::swap(&mut x, &mut z);
        obj = obj_z;
        t = t_next;
        if change <= tol * obj.abs().max(1.0) {
            let (_, gx) = f.value_grad(x.view())?;
            kkt = kkt_residual(x.view(), gx.view(), l1);
            if kkt <= 10.0 * tol {
                converged = true;
                break;
            }
        }
        let (v, g) = f.value_grad(y.view())?;
        fy = v;
        gy = g;
    }
    if !converged {
        let (_, gx) = f.value_grad(x.view())?;
        kkt = kkt_residual(x.view(), gx.view(), l1);
    }
    Ok(ProxOutcome { x, objective: obj, iterations, kkt_residual: kkt, converged })
}
