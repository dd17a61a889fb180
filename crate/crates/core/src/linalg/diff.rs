//! Central-difference derivatives with per-coordinate steps
//! `h_i = step · max(1, |x_i|)`.
//!
//! Stencils only require finite map values; they may poke outside the
//! domain box, which matters for fixed points sitting on its boundary.

use nalgebra::DMatrix;

use crate::dynamics::{delta_v_unchecked, MapSystem, Observable};
use crate::error::{Error, Result};

/// Default relative step for first derivatives.
pub const FIRST_DERIVATIVE_STEP: f64 = 1e-6;
/// Default relative step for the Hessian of `Δv`.
pub const HESSIAN_STEP: f64 = 1e-4;
/// Relative asymmetry above which a Hessian estimate is flagged.
pub const HESSIAN_ASYMMETRY_TOL: f64 = 1e-4;

fn coord_step(step: f64, xi: f64) -> f64 {
    step * xi.abs().max(1.0)
}

fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step must be positive, got {step}")))
    }
}

fn finite_scalar(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteState { step: 1 })
    }
}

/// `Df(x)`: analytic when the map provides it, central differences otherwise.
pub fn jacobian(map: &MapSystem, x: &[f64], step: f64) -> Result<DMatrix<f64>> {
    map.check_dim(x)?;
    match map.analytic_jacobian(x) {
        Some(j) => Ok(j),
        None => numeric_jacobian(map, x, step),
    }
}

/// Central-difference Jacobian, column by column.
pub fn numeric_jacobian(map: &MapSystem, x: &[f64], step: f64) -> Result<DMatrix<f64>> {
    check_step(step)?;
    map.check_dim(x)?;
    let n = map.dim();
    let mut jac = DMatrix::zeros(n, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let h = coord_step(step, x[j]);
        probe[j] = x[j] + h;
        let plus = map.eval_finite(&probe)?;
        probe[j] = x[j] - h;
        let minus = map.eval_finite(&probe)?;
        probe[j] = x[j];
        for i in 0..n {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// `∇v(x)`: analytic when available, central differences otherwise.
pub fn gradient(v: &Observable, x: &[f64], step: f64) -> Result<Vec<f64>> {
    match v.analytic_gradient(x) {
        Some(g) => Ok(g),
        None => numeric_gradient(|p| v.value(p), x, step),
    }
}

/// Central-difference gradient of a scalar function.
pub fn numeric_gradient<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    check_step(step)?;
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = coord_step(step, x[j]);
        probe[j] = x[j] + h;
        let plus = finite_scalar(f(&probe))?;
        probe[j] = x[j] - h;
        let minus = finite_scalar(f(&probe))?;
        probe[j] = x[j];
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Analytic `∇Δv(x) = Df(x)ᵀ ∇v(f(x)) − ∇v(x)`, available when both the
/// map Jacobian and the observable gradient are analytic.
fn analytic_gradient_delta_v(map: &MapSystem, v: &Observable, x: &[f64]) -> Option<Result<Vec<f64>>> {
    let jac = map.analytic_jacobian(x)?;
    let gx = v.analytic_gradient(x)?;
    let fx = match map.eval_finite(x) {
        Ok(fx) => fx,
        Err(e) => return Some(Err(e)),
    };
    let gfx = v.analytic_gradient(&fx)?;
    let n = map.dim();
    let out: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| jac[(i, j)] * gfx[i]).sum::<f64>() - gx[j])
        .collect();
    if out.iter().all(|g| g.is_finite()) {
        Some(Ok(out))
    } else {
        Some(Err(Error::NonFiniteState { step: 1 }))
    }
}

/// `∇Δv(x)`, by the chain rule when possible and central differences of
/// `Δv` otherwise.
pub fn gradient_delta_v(map: &MapSystem, v: &Observable, x: &[f64], step: f64) -> Result<Vec<f64>> {
    map.check_dim(x)?;
    if let Some(g) = analytic_gradient_delta_v(map, v, x) {
        return g;
    }
    numeric_gradient(
        |p| delta_v_unchecked(map, v, p).unwrap_or(f64::NAN),
        x,
        step,
    )
}

/// A symmetrized Hessian estimate with the asymmetry observed before
/// symmetrization.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianEstimate {
    pub matrix: DMatrix<f64>,
    /// `max|H − Hᵀ| / max(1, max|H|)` before symmetrization.
    pub asymmetry: f64,
    /// Set when `asymmetry` exceeds the tolerance; treat the estimate as
    /// degenerate.
    pub asymmetric: bool,
}

/// Hessian of `x ↦ Δv(x)`, symmetrized as `(H + Hᵀ)/2`.
///
/// With an analytic chain-rule gradient of `Δv` the Hessian is the central
/// difference Jacobian of that gradient; otherwise a second-order
/// four-point stencil on `Δv` itself is used.
pub fn hessian_delta_v(map: &MapSystem, v: &Observable, x: &[f64], step: f64) -> Result<HessianEstimate> {
    check_step(step)?;
    map.check_dim(x)?;
    let n = map.dim();
    let mut h = DMatrix::zeros(n, n);
    if analytic_gradient_delta_v(map, v, x).is_some() {
        let mut probe = x.to_vec();
        for j in 0..n {
            let hj = coord_step(step, x[j]);
            probe[j] = x[j] + hj;
            let plus = analytic_gradient_delta_v(map, v, &probe).expect("analytic")?;
            probe[j] = x[j] - hj;
            let minus = analytic_gradient_delta_v(map, v, &probe).expect("analytic")?;
            probe[j] = x[j];
            for i in 0..n {
                h[(i, j)] = (plus[i] - minus[i]) / (2.0 * hj);
            }
        }
    } else {
        let g = |p: &[f64]| delta_v_unchecked(map, v, p);
        let g0 = g(x)?;
        let mut probe = x.to_vec();
        for i in 0..n {
            let hi = coord_step(step, x[i]);
            probe[i] = x[i] + hi;
            let plus = g(&probe)?;
            probe[i] = x[i] - hi;
            let minus = g(&probe)?;
            probe[i] = x[i];
            h[(i, i)] = (plus - 2.0 * g0 + minus) / (hi * hi);
            for j in (i + 1)..n {
                let hj = coord_step(step, x[j]);
                let mut corner = |si: f64, sj: f64| -> Result<f64> {
                    probe[i] = x[i] + si * hi;
                    probe[j] = x[j] + sj * hj;
                    let val = g(&probe);
                    probe[i] = x[i];
                    probe[j] = x[j];
                    val
                };
                let pp = corner(1.0, 1.0)?;
                let pm = corner(1.0, -1.0)?;
                let mp = corner(-1.0, 1.0)?;
                let mm = corner(-1.0, -1.0)?;
                let mixed = (pp - pm - mp + mm) / (4.0 * hi * hj);
                h[(i, j)] = mixed;
                h[(j, i)] = mixed;
            }
        }
    }
    let scale = h.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let asymmetry = (&h - h.transpose()).iter().fold(0.0_f64, |m, v| m.max(v.abs())) / scale;
    let matrix = (&h + h.transpose()) * 0.5;
    Ok(HessianEstimate {
        matrix,
        asymmetry,
        asymmetric: asymmetry > HESSIAN_ASYMMETRY_TOL,
    })
}
