//! Maps, observables and the orbit quantities built on them.
//!
//! A [`MapSystem`] is a deterministic map `f: Rⁿ → Rⁿ` restricted to a
//! domain box. An [`Observable`] is the scalar `v` whose one-step change
//! `Δv(x) = v(f(x)) − v(x)` is tracked along orbits. Transient times count
//! the steps before `|Δv|` first exceeds a threshold `s` (strictly).

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// Half-width of the default domain box `[-1e6, 1e6]ⁿ`.
pub const DEFAULT_DOMAIN_HALF_WIDTH: f64 = 1e6;

/// Absolute tolerance under which `candidate_residual` counts as zero.
pub const XV_TOLERANCE: f64 = 1e-12;

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type JacobianFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
type ScalarFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Axis-aligned box on which a map is declared total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidArgument(
                "domain box needs lower < upper on every axis".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// `[-half, half]ⁿ`.
    pub fn symmetric(dim: usize, half: f64) -> Self {
        Self {
            lower: vec![-half; dim],
            upper: vec![half; dim],
        }
    }

    /// `[0, upper]ⁿ`, for population-type models.
    pub fn nonnegative(dim: usize, upper: f64) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![upper; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    fn check(&self, x: &[f64], step: usize) -> Result<()> {
        for (i, v) in x.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteState { step });
            }
            if *v < self.lower[i] || *v > self.upper[i] {
                return Err(Error::DomainEscape {
                    step,
                    coordinate: i,
                    value: *v,
                });
            }
        }
        Ok(())
    }
}

/// A discrete-time map `x(t+1) = f(x(t))`.
#[derive(Clone)]
pub struct MapSystem {
    name: String,
    dim: usize,
    eval: Arc<EvalFn>,
    jacobian: Option<Arc<JacobianFn>>,
    params: Vec<(String, f64)>,
    domain: DomainBox,
    linear: Option<DMatrix<f64>>,
}

impl fmt::Debug for MapSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapSystem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("params", &self.params)
            .field("domain", &self.domain)
            .field("linear", &self.linear.is_some())
            .finish()
    }
}

impl MapSystem {
    /// Builds a map from an in-place evaluation callback. The callback
    /// receives the current state and writes `f(x)` into the output slice.
    pub fn new<F>(name: impl Into<String>, dim: usize, eval: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        assert!(dim > 0, "map dimension must be positive");
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            jacobian: None,
            params: Vec::new(),
            domain: DomainBox::symmetric(dim, DEFAULT_DOMAIN_HALF_WIDTH),
            linear: None,
        }
    }

    /// The linear map `x ↦ A x`, with its exact Jacobian.
    pub fn linear(name: impl Into<String>, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::InvalidArgument(
                "linear map needs a non-empty square matrix".into(),
            ));
        }
        let n = matrix.nrows();
        let a = matrix.clone();
        let jac = matrix.clone();
        let mut map = Self::new(name, n, move |x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = (0..n).map(|j| a[(i, j)] * x[j]).sum();
            }
        })
        .with_jacobian(move |_| jac.clone());
        map.linear = Some(matrix);
        Ok(map)
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        assert_eq!(domain.dim(), self.dim, "domain box dimension");
        self.domain = domain;
        self
    }

    pub fn with_params(mut self, params: Vec<(String, f64)>) -> Self {
        self.params = params;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    /// The matrix `A` when the map is declared linear.
    pub fn linear_matrix(&self) -> Option<&DMatrix<f64>> {
        self.linear.as_ref()
    }

    pub fn is_linear(&self) -> bool {
        self.linear.is_some()
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn analytic_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(x))
    }

    /// Evaluates `f(x)` with no finiteness or domain checks.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.eval)(x, out)
    }

    /// Evaluates `f(x)` and only requires a finite result. Used by
    /// derivative stencils, which may straddle the domain box.
    pub fn eval_finite(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        (self.eval)(x, &mut out);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFiniteState { step: 1 })
        }
    }

    /// One checked step: `out = f(x)`, where `step` labels the produced
    /// state in any error.
    pub fn step_into(&self, x: &[f64], out: &mut [f64], step: usize) -> Result<()> {
        (self.eval)(x, out);
        self.domain.check(out, step)
    }

    pub fn step(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim];
        self.step_into(x, &mut out, 1)?;
        Ok(out)
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Validates an initial state: right dimension, finite, inside the box.
    pub fn check_state(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        self.domain.check(x, 0)
    }
}

/// Affine form `pᵀx + c` attached to observables known to be linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearForm {
    pub coefficients: Vec<f64>,
    pub offset: f64,
}

/// A scalar observable `v: Rⁿ → R`.
#[derive(Clone)]
pub struct Observable {
    name: String,
    eval: Arc<ScalarFn>,
    gradient: Option<Arc<GradientFn>>,
    linear: Option<LinearForm>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("name", &self.name)
            .field("analytic_gradient", &self.gradient.is_some())
            .field("linear", &self.linear)
            .finish()
    }
}

impl Observable {
    pub fn new<F>(name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            gradient: None,
            linear: None,
        }
    }

    pub fn with_gradient<G>(mut self, gradient: G) -> Self
    where
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(gradient));
        self
    }

    /// `v(x) = pᵀx`.
    pub fn linear(name: impl Into<String>, coefficients: Vec<f64>) -> Self {
        Self::affine_form(
            name,
            LinearForm {
                coefficients,
                offset: 0.0,
            },
        )
    }

    /// `v(x) = x_index` in dimension `dim`.
    pub fn coordinate(name: impl Into<String>, dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let mut p = vec![0.0; dim];
        p[index] = 1.0;
        Self::linear(name, p)
    }

    fn affine_form(name: impl Into<String>, form: LinearForm) -> Self {
        let p = form.coefficients.clone();
        let c = form.offset;
        let g = form.coefficients.clone();
        Self {
            name: name.into(),
            eval: Arc::new(move |x| p.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c),
            gradient: Some(Arc::new(move |_| g.clone())),
            linear: Some(form),
        }
    }

    /// The observable `alpha·v + beta`.
    pub fn affine(&self, alpha: f64, beta: f64) -> Self {
        let name = format!("{}*{}+{}", alpha, self.name, beta);
        if let Some(form) = &self.linear {
            return Self::affine_form(
                name,
                LinearForm {
                    coefficients: form.coefficients.iter().map(|p| alpha * p).collect(),
                    offset: alpha * form.offset + beta,
                },
            );
        }
        let inner = Arc::clone(&self.eval);
        let mut out = Self::new(name, move |x| alpha * inner(x) + beta);
        if let Some(g) = &self.gradient {
            let g = Arc::clone(g);
            out.gradient = Some(Arc::new(move |x| g(x).into_iter().map(|d| alpha * d).collect()));
        }
        out
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn analytic_gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.gradient.as_ref().map(|g| g(x))
    }

    pub fn linear_form(&self) -> Option<&LinearForm> {
        self.linear.as_ref()
    }
}

/// A finite orbit `x₀ … x_T` with the observable and its increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub observable_values: Vec<f64>,
    /// `deltas[t] = observable_values[t+1] − observable_values[t]`; one
    /// shorter than `states`.
    pub deltas: Vec<f64>,
}

impl Trajectory {
    fn start(x0: &[f64], v0: f64) -> Self {
        Self {
            states: vec![x0.to_vec()],
            observable_values: vec![v0],
            deltas: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Writes `t,x1..xn,v,delta_v`, one row per state. The last row has
    /// an empty `delta_v` since its successor was never computed.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x{i}"));
        }
        header.push_str(",v,delta_v");
        writeln!(w, "{header}")?;
        for (t, state) in self.states.iter().enumerate() {
            let mut row = t.to_string();
            for x in state {
                row.push(',');
                row.push_str(&fmt_f64(*x));
            }
            row.push(',');
            row.push_str(&fmt_f64(self.observable_values[t]));
            row.push(',');
            if let Some(d) = self.deltas.get(t) {
                row.push_str(&fmt_f64(*d));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }
}

/// An orbit computation that stopped early. `partial` holds everything
/// computed before `cause`.
#[derive(Debug, Clone)]
pub struct Halted {
    pub cause: Error,
    pub partial: Trajectory,
}

impl fmt::Display for Halted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} states)", self.cause, self.partial.len())
    }
}

impl std::error::Error for Halted {}

impl From<Halted> for Error {
    fn from(h: Halted) -> Self {
        h.cause
    }
}

/// Iterates `steps` times from `xi`, recording `v` and `Δv` along the way.
/// `f` is evaluated exactly `steps` times.
pub fn iterate(
    map: &MapSystem,
    xi: &[f64],
    steps: usize,
    observable: &Observable,
) -> std::result::Result<Trajectory, Halted> {
    let empty = || Trajectory {
        states: Vec::new(),
        observable_values: Vec::new(),
        deltas: Vec::new(),
    };
    if steps == 0 {
        return Err(Halted {
            cause: Error::InvalidArgument("steps must be at least 1".into()),
            partial: empty(),
        });
    }
    if let Err(cause) = map.check_state(xi) {
        return Err(Halted {
            cause,
            partial: empty(),
        });
    }
    let mut traj = Trajectory::start(xi, observable.value(xi));
    traj.states.reserve(steps);
    let mut next = vec![0.0; map.dim()];
    for t in 0..steps {
        let current = &traj.states[t];
        if let Err(cause) = map.step_into(current, &mut next, t + 1) {
            return Err(Halted {
                cause,
                partial: traj,
            });
        }
        let v_next = observable.value(&next);
        traj.deltas.push(v_next - traj.observable_values[t]);
        traj.observable_values.push(v_next);
        traj.states.push(next.clone());
    }
    Ok(traj)
}

/// `Δv(x) = v(f(x)) − v(x)`, one evaluation of `f`.
pub fn delta_v(map: &MapSystem, v: &Observable, x: &[f64]) -> Result<f64> {
    map.check_dim(x)?;
    let mut next = vec![0.0; map.dim()];
    map.step_into(x, &mut next, 1)?;
    Ok(v.value(&next) - v.value(x))
}

/// `Δv` without the domain check; derivative stencils use this.
pub(crate) fn delta_v_unchecked(map: &MapSystem, v: &Observable, x: &[f64]) -> Result<f64> {
    let next = map.eval_finite(x)?;
    let d = v.value(&next) - v.value(x);
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::NonFiniteState { step: 1 })
    }
}

/// Walks the orbit of `xi` for `t = 0..=horizon`, handing `(t, Δv(f^t ξ))`
/// to `visit` until it returns `true` (stop). Returns the number of
/// increments visited.
///
/// When an iterate reproduces its predecessor bit-for-bit the orbit has
/// reached an exact fixed point and every later increment is zero; the walk
/// then reports one zero increment and stops.
pub(crate) fn scan_increments<F>(
    map: &MapSystem,
    v: &Observable,
    xi: &[f64],
    horizon: usize,
    mut visit: F,
) -> Result<usize>
where
    F: FnMut(usize, f64) -> bool,
{
    map.check_state(xi)?;
    let mut x = xi.to_vec();
    let mut next = vec![0.0; map.dim()];
    let mut v_x = v.value(&x);
    for t in 0..=horizon {
        map.step_into(&x, &mut next, t + 1)?;
        let v_next = v.value(&next);
        let d = v_next - v_x;
        if visit(t, d) {
            return Ok(t + 1);
        }
        if next == x {
            return Ok(t + 1);
        }
        std::mem::swap(&mut x, &mut next);
        v_x = v_next;
    }
    Ok(horizon + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransientStatus {
    Finite,
    ExceededHorizon,
}

/// Outcome of a `(v, s)`-transient time computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientTimeResult {
    pub status: TransientStatus,
    /// First `t` with `|Δv(f^t ξ)| > s`, when `status` is `Finite`.
    pub time: Option<usize>,
    pub threshold: f64,
    pub horizon: usize,
    /// `|Δv|` at the triggering step, when `status` is `Finite`.
    pub trigger_delta: Option<f64>,
}

impl TransientTimeResult {
    pub fn is_finite(&self) -> bool {
        self.status == TransientStatus::Finite
    }
}

/// The `(v, s)`-transient time of `xi`, searched up to `horizon`.
///
/// A step triggers only when `|Δv| > s` strictly. An orbit that never
/// triggers within the horizon is reported as `ExceededHorizon`; an infinite
/// transient time cannot be certified by simulation.
pub fn transient_time(
    map: &MapSystem,
    v: &Observable,
    xi: &[f64],
    s: f64,
    horizon: usize,
) -> Result<TransientTimeResult> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {s}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut hit = None;
    scan_increments(map, v, xi, horizon, |t, d| {
        if d.abs() > s {
            hit = Some((t, d.abs()));
            true
        } else {
            false
        }
    })?;
    Ok(match hit {
        Some((t, d)) => TransientTimeResult {
            status: TransientStatus::Finite,
            time: Some(t),
            threshold: s,
            horizon,
            trigger_delta: Some(d),
        },
        None => TransientTimeResult {
            status: TransientStatus::ExceededHorizon,
            time: None,
            threshold: s,
            horizon,
            trigger_delta: None,
        },
    })
}

/// Classification of an initial state against `(v, s, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransientPointClass {
    /// `T < T_s(ξ) < ∞`, with the finite time observed inside the horizon.
    IsTransientPoint,
    /// `T_s(ξ) ≤ T`.
    TooFast,
    /// No trigger within the horizon; undecidable numerically.
    NotObservedFinite,
}

impl TransientPointClass {
    pub fn from_result(result: &TransientTimeResult, min_time: usize) -> Self {
        match result.time {
            Some(t) if t > min_time => Self::IsTransientPoint,
            Some(_) => Self::TooFast,
            None => Self::NotObservedFinite,
        }
    }
}

pub fn classify_transient_point(
    map: &MapSystem,
    v: &Observable,
    xi: &[f64],
    s: f64,
    min_time: usize,
    horizon: usize,
) -> Result<TransientPointClass> {
    if horizon <= min_time {
        return Err(Error::InvalidArgument(format!(
            "horizon ({horizon}) must exceed T ({min_time})"
        )));
    }
    let res = transient_time(map, v, xi, s, horizon)?;
    Ok(TransientPointClass::from_result(&res, min_time))
}

/// `max_{t ≤ horizon} |Δv(f^t ξ)|`. Zero (to [`XV_TOLERANCE`]) is the
/// numeric stand-in for membership of the observable-invariant set.
pub fn candidate_residual(
    map: &MapSystem,
    v: &Observable,
    xi: &[f64],
    horizon: usize,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut worst = 0.0_f64;
    scan_increments(map, v, xi, horizon, |_, d| {
        worst = worst.max(d.abs());
        false
    })?;
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1(h: f64) -> MapSystem {
        MapSystem::new("example1", 2, move |x, o| {
            o[0] = x[0] * (1.0 - h * x[1]);
            o[1] = x[1] + h * (x[0] - 1.0);
        })
    }

    #[test]
    fn invariant_axis_moves_down_linearly() {
        let map = example1(0.1);
        let v = Observable::coordinate("x", 2, 0);
        let traj = iterate(&map, &[0.0, 5.0], 3, &v).unwrap();
        assert_eq!(traj.len(), 4);
        assert_eq!(traj.states[3][0], 0.0);
        assert!((traj.states[3][1] - 4.7).abs() < 1e-12);
        assert!(traj.deltas.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn delta_v_of_example1_is_minus_hxy() {
        let map = example1(0.1);
        let v = Observable::coordinate("x", 2, 0);
        let d = delta_v(&map, &v, &[2.0, 3.0]).unwrap();
        assert!((d + 0.6).abs() < 1e-12);
    }

    #[test]
    fn zero_steps_rejected() {
        let map = example1(0.1);
        let v = Observable::coordinate("x", 2, 0);
        let err = iterate(&map, &[0.0, 0.0], 0, &v).unwrap_err();
        assert!(matches!(err.cause, Error::InvalidArgument(_)));
    }

    #[test]
    fn blow_up_reports_partial_trajectory() {
        let map = MapSystem::new("square", 1, |x, o| o[0] = x[0] * x[0]);
        let v = Observable::coordinate("x", 1, 0);
        let err = iterate(&map, &[10.0], 10, &v).unwrap_err();
        // 10 → 1e2 → 1e4 → 1e8 leaves the [-1e6, 1e6] box at step 3
        assert!(matches!(err.cause, Error::DomainEscape { step: 3, .. }));
        assert_eq!(err.partial.len(), 3);
        assert_eq!(err.partial.deltas.len(), 2);
    }

    #[test]
    fn non_finite_state_is_reported() {
        let map = MapSystem::new("nan", 1, |_, o| o[0] = f64::NAN);
        let v = Observable::coordinate("x", 1, 0);
        let err = transient_time(&map, &v, &[0.0], 1.0, 10).unwrap_err();
        assert_eq!(err, Error::NonFiniteState { step: 1 });
    }

    #[test]
    fn tie_at_threshold_does_not_trigger() {
        // Δv ≡ 1 exactly.
        let map = MapSystem::new("shift", 1, |x, o| o[0] = x[0] + 1.0);
        let v = Observable::coordinate("x", 1, 0);
        let r = transient_time(&map, &v, &[0.0], 1.0, 20).unwrap();
        assert_eq!(r.status, TransientStatus::ExceededHorizon);
        let r = transient_time(&map, &v, &[0.0], 0.999, 20).unwrap();
        assert_eq!(r.time, Some(0));
    }

    #[test]
    fn stable_fixed_point_never_triggers() {
        let map = MapSystem::new("contract", 1, |x, o| o[0] = 0.5 * x[0]);
        let v = Observable::coordinate("x", 1, 0);
        let r = transient_time(&map, &v, &[0.0], 1e-300, 1_000_000).unwrap();
        assert_eq!(r.status, TransientStatus::ExceededHorizon);
        assert_eq!(
            classify_transient_point(&map, &v, &[0.0], 1e-3, 5, 100).unwrap(),
            TransientPointClass::NotObservedFinite
        );
    }

    #[test]
    fn immediate_trigger_is_too_fast() {
        let map = example1(0.1);
        let v = Observable::coordinate("x", 2, 0);
        // |Δv(2,3)| = 0.6 > 0.005
        let c = classify_transient_point(&map, &v, &[2.0, 3.0], 0.005, 10, 100).unwrap();
        assert_eq!(c, TransientPointClass::TooFast);
    }

    #[test]
    fn horizon_must_exceed_min_time() {
        let map = example1(0.1);
        let v = Observable::coordinate("x", 2, 0);
        assert!(classify_transient_point(&map, &v, &[0.0, 0.0], 0.1, 10, 10).is_err());
    }

    #[test]
    fn residual_single_step() {
        let map = example1(0.1);
        let v = Observable::coordinate("x", 2, 0);
        // t = 0 gives h·0.25 = 0.025; t = 1 gives 0.1·0.475·0.45 = 0.021375
        let r = candidate_residual(&map, &v, &[0.5, 0.5], 1).unwrap();
        assert!((r - 0.025).abs() < 1e-15);
    }

    #[test]
    fn affine_observable_keeps_linear_form() {
        let v = Observable::linear("v", vec![1.0, 2.0]);
        let w = v.affine(-3.0, 4.0);
        assert_eq!(w.linear_form().unwrap().coefficients, vec![-3.0, -6.0]);
        assert_eq!(w.value(&[1.0, 1.0]), -9.0 + 4.0);
        assert_eq!(w.analytic_gradient(&[0.0, 0.0]).unwrap(), vec![-3.0, -6.0]);
    }

    #[test]
    fn csv_has_expected_header_and_blank_final_delta() {
        let map = example1(0.1);
        let v = Observable::coordinate("x", 2, 0);
        let traj = iterate(&map, &[0.5, 0.5], 2, &v).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,v,delta_v");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].ends_with(','));
    }
}
