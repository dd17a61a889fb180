//! Transient-center criteria for fixed points.
//!
//! Each criterion checks a sufficient condition and returns a
//! [`CenterVerdict`] carrying the numbers that witness it. Only stable
//! exclusion can conclude `NotCenter`; every other failure is
//! `Inconclusive`. Strict inequalities are tested with a relative margin of
//! [`CRITERION_MARGIN`], so near-equality cases are never guessed.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{delta_v, MapSystem, Observable};
use crate::empirical::{fixed_point_empirical_verdict, EmpiricalOptions};
use crate::error::{Error, Result};
use crate::linalg::{
    self, definiteness, gradient, gradient_delta_v, hessian_delta_v, nonneg_irreducible,
    unstable_subspace_basis, Definiteness, SpectralSummary, DEFINITENESS_TOL,
    FIRST_DERIVATIVE_STEP, HESSIAN_STEP, UNIT_CIRCLE_TOL,
};

/// Relative margin required on the strict spectral inequalities.
pub const CRITERION_MARGIN: f64 = 1e-6;
/// `|∇v·w|` and `|Δv(w)|` must exceed this to count as nonzero.
pub const NONZERO_TOL: f64 = 1e-9;
/// Relative tolerance on `‖∇Δv(x*)‖` for the flatness criterion.
pub const FLATNESS_TOL: f64 = 1e-7;
/// Roots closer than this are merged.
pub const DEDUP_DISTANCE: f64 = 1e-6;
/// Newton iterations per seed before it is dropped.
pub const NEWTON_MAX_ITER: usize = 50;
/// Fixed points must satisfy `‖f(x*) − x*‖ ≤ FIXED_POINT_RESIDUAL·(1+‖x*‖)`.
pub const FIXED_POINT_RESIDUAL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

impl Stability {
    pub fn from_spectrum(spectral: &SpectralSummary) -> Self {
        if spectral.spectral_radius < 1.0 - UNIT_CIRCLE_TOL {
            Stability::Stable
        } else if spectral
            .eigenvalues
            .iter()
            .any(|z| z.norm() > 1.0 + UNIT_CIRCLE_TOL)
        {
            Stability::Unstable
        } else {
            Stability::Marginal
        }
    }
}

/// A fixed point with its linearization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub location: Vec<f64>,
    /// `‖f(x*) − x*‖`.
    pub residual: f64,
    pub stability: Stability,
    pub spectral: SpectralSummary,
    /// `Df(x*)`, row-major.
    pub jacobian: Vec<Vec<f64>>,
}

impl FixedPoint {
    /// Linearizes `map` at `location`, which must be a fixed point to
    /// within [`FIXED_POINT_RESIDUAL`].
    pub fn at(map: &MapSystem, location: &[f64]) -> Result<Self> {
        map.check_dim(location)?;
        let fx = map.eval_finite(location)?;
        let residual = norm(&sub(&fx, location));
        if residual > FIXED_POINT_RESIDUAL * (1.0 + norm(location)) {
            return Err(Error::InvalidArgument(format!(
                "not a fixed point: residual {residual:e}"
            )));
        }
        let jac = linalg::jacobian(map, location, FIRST_DERIVATIVE_STEP)?;
        let spectral = linalg::eigen(&jac)?;
        let stability = Stability::from_spectrum(&spectral);
        Ok(Self {
            location: location.to_vec(),
            residual,
            stability,
            spectral,
            jacobian: jac.row_iter().map(|r| r.iter().copied().collect()).collect(),
        })
    }

    pub fn jacobian_matrix(&self) -> DMatrix<f64> {
        let n = self.location.len();
        DMatrix::from_fn(n, n, |i, j| self.jacobian[i][j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Center,
    NotCenter,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    StableExclusion,
    LinearEigenspace,
    GradientEigvecLinear,
    GradientEigvecH1,
    GradientEigvecH2,
    PerronFrobenius,
    HessianFlatness,
    Empirical,
}

/// Which condition the gradient–eigenvector criterion checks on top of
/// `|λ| > 1` and `∇v(x*)·w ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientMode {
    /// Map is linear; no dominance condition needed.
    LinearMap,
    /// `λ² > ‖A‖` (spectral norm).
    H1,
    /// `λ² > ρ(A)`.
    H2,
}

impl GradientMode {
    fn criterion(self) -> Criterion {
        match self {
            GradientMode::LinearMap => Criterion::GradientEigvecLinear,
            GradientMode::H1 => Criterion::GradientEigvecH1,
            GradientMode::H2 => Criterion::GradientEigvecH2,
        }
    }
}

/// Record of one criterion tried during [`classify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub criterion: Criterion,
    /// `None` when the criterion was not applicable or failed to evaluate.
    pub decision: Option<Decision>,
    pub certificate: BTreeMap<String, f64>,
    pub note: Option<String>,
}

/// A decision together with the criterion that produced it and its
/// numeric certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterVerdict {
    pub decision: Decision,
    pub criterion: Criterion,
    pub certificate: BTreeMap<String, f64>,
    /// True when the verdict rests on sampling rather than a theorem.
    pub empirical: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attempts: Vec<Attempt>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl CenterVerdict {
    pub fn new(decision: Decision, criterion: Criterion) -> Self {
        Self {
            decision,
            criterion,
            certificate: BTreeMap::new(),
            empirical: false,
            attempts: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.certificate.insert(key.to_string(), value);
        self
    }

    pub fn is_center(&self) -> bool {
        self.decision == Decision::Center
    }

    fn attempt(&self) -> Attempt {
        Attempt {
            criterion: self.criterion,
            decision: Some(self.decision),
            certificate: self.certificate.clone(),
            note: None,
        }
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of a grid-seeded Newton search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub fixed_points: Vec<FixedPoint>,
    /// Seeds whose Newton iteration failed to converge (or converged outside
    /// the region).
    pub dropped_seeds: usize,
}

/// Newton's method on `g(x) = f(x) − x` from every node of a regular grid
/// over `region`, deduplicated within [`DEDUP_DISTANCE`]. Results are sorted
/// lexicographically.
pub fn find_fixed_points(
    map: &MapSystem,
    region: &[(f64, f64)],
    grid: &[usize],
    tol: f64,
) -> Result<FixedPointReport> {
    let n = map.dim();
    if region.len() != n || grid.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: region.len().min(grid.len()),
        });
    }
    if grid.iter().any(|g| *g < 2) {
        return Err(Error::InvalidArgument("grid needs at least 2 nodes per axis".into()));
    }
    if region.iter().any(|(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidArgument("region needs lower < upper".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let total: usize = grid.iter().product();
    let seeds: Vec<Vec<f64>> = (0..total)
        .map(|mut k| {
            (0..n)
                .map(|i| {
                    let idx = k % grid[i];
                    k /= grid[i];
                    let (lo, hi) = region[i];
                    lo + (hi - lo) * idx as f64 / (grid[i] - 1) as f64
                })
                .collect()
        })
        .collect();

    let roots: Vec<Option<Vec<f64>>> = seeds
        .par_iter()
        .map(|seed| newton(map, seed, tol).filter(|x| in_region(x, region)))
        .collect();

    let mut unique: Vec<Vec<f64>> = Vec::new();
    let mut dropped = 0;
    for root in roots {
        match root {
            Some(x) => {
                if !unique.iter().any(|u| norm(&sub(u, &x)) <= DEDUP_DISTANCE) {
                    unique.push(x);
                }
            }
            None => dropped += 1,
        }
    }
    unique.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut fixed_points = Vec::with_capacity(unique.len());
    for x in unique {
        match FixedPoint::at(map, &x) {
            Ok(fp) => fixed_points.push(fp),
            Err(e) => {
                log::debug!("dropping root {x:?}: {e}");
                dropped += 1;
            }
        }
    }
    if dropped > 0 {
        log::debug!("{dropped} Newton seeds dropped");
    }
    Ok(FixedPointReport {
        fixed_points,
        dropped_seeds: dropped,
    })
}

fn in_region(x: &[f64], region: &[(f64, f64)]) -> bool {
    x.iter().zip(region).all(|(v, (lo, hi))| {
        let slack = 1e-9 * (1.0 + (hi - lo).abs());
        *v >= lo - slack && *v <= hi + slack
    })
}

fn newton(map: &MapSystem, seed: &[f64], tol: f64) -> Option<Vec<f64>> {
    let n = map.dim();
    let identity = DMatrix::<f64>::identity(n, n);
    let mut x = seed.to_vec();
    let mut converged_at = None;
    for it in 0..NEWTON_MAX_ITER {
        let fx = map.eval_finite(&x).ok()?;
        let g = sub(&fx, &x);
        let scale = 1.0 + norm(&x);
        if norm(&g) <= tol * scale {
            // a couple of polishing steps, then stop
            match converged_at {
                None => converged_at = Some(it),
                Some(c) if it >= c + 2 => break,
                _ => {}
            }
        }
        let jac = linalg::jacobian(map, &x, FIRST_DERIVATIVE_STEP).ok()? - &identity;
        let step = jac.lu().solve(&(-DVector::from_vec(g)))?;
        if step.iter().any(|s| !s.is_finite()) {
            return None;
        }
        x.iter_mut().zip(step.iter()).for_each(|(xi, si)| *xi += si);
        if step.norm() <= 1e-15 * scale {
            converged_at.get_or_insert(it);
            break;
        }
    }
    let fx = map.eval_finite(&x).ok()?;
    let residual = norm(&sub(&fx, &x));
    if converged_at.is_none() && residual > tol * (1.0 + norm(&x)) {
        return None;
    }
    snap_to_domain(map, &mut x);
    let fx = map.eval_finite(&x).ok()?;
    if norm(&sub(&fx, &x)) <= FIXED_POINT_RESIDUAL * (1.0 + norm(&x)) {
        Some(x)
    } else {
        None
    }
}

/// Rounding can leave a root a hair outside a domain face it lies on.
fn snap_to_domain(map: &MapSystem, x: &mut [f64]) {
    let dom = map.domain();
    for (i, v) in x.iter_mut().enumerate() {
        let slack = 1e-12 * (1.0 + v.abs());
        if *v < dom.lower[i] && *v >= dom.lower[i] - slack {
            *v = dom.lower[i];
        }
        if *v > dom.upper[i] && *v <= dom.upper[i] + slack {
            *v = dom.upper[i];
        }
    }
}

/// A fixed point with spectral radius below one is asymptotically (hence
/// Lyapunov) stable and cannot be a transient center for any observable.
pub fn stable_exclusion(fp: &FixedPoint) -> CenterVerdict {
    let decision = if fp.stability == Stability::Stable {
        Decision::NotCenter
    } else {
        Decision::Inconclusive
    };
    let margin = 1.0 - fp.spectral.spectral_radius;
    CenterVerdict::new(decision, Criterion::StableExclusion)
        .with("rho", fp.spectral.spectral_radius)
        .with("stability_margin", margin)
}

/// For a linear map `x ↦ Ax`: the origin is a center when `Δv(w) ≠ 0` for
/// some `w` in the unstable eigenspace. Probes basis vectors, their signed
/// pairwise sums and `samples` seeded random combinations, all at unit norm.
pub fn linear_eigenspace_criterion(
    map: &MapSystem,
    v: &Observable,
    samples: usize,
    seed: u64,
) -> Result<CenterVerdict> {
    let a = map
        .linear_matrix()
        .ok_or_else(|| Error::NotApplicable("map is not declared linear".into()))?;
    let basis = unstable_subspace_basis(a)?;
    if basis.is_empty() {
        return Err(Error::NotApplicable("unstable eigenspace is trivial".into()));
    }
    let n = map.dim();
    let mut probes: Vec<Vec<f64>> = Vec::new();
    for b in &basis {
        probes.push(b.clone());
        probes.push(b.iter().map(|x| -x).collect());
    }
    for i in 0..basis.len() {
        for j in (i + 1)..basis.len() {
            for sign in [1.0, -1.0] {
                probes.push((0..n).map(|k| basis[i][k] + sign * basis[j][k]).collect());
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let coeffs: Vec<f64> = basis.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        probes.push(
            (0..n)
                .map(|k| basis.iter().zip(&coeffs).map(|(b, c)| c * b[k]).sum())
                .collect(),
        );
    }
    let mut best = 0.0_f64;
    for mut w in probes {
        let len = norm(&w);
        if len == 0.0 {
            continue;
        }
        w.iter_mut().for_each(|x| *x /= len);
        let d = delta_v(map, v, &w)?.abs();
        best = best.max(d);
    }
    let decision = if best > NONZERO_TOL {
        Decision::Center
    } else {
        Decision::Inconclusive
    };
    Ok(CenterVerdict::new(decision, Criterion::LinearEigenspace)
        .with("unstable_dimension", basis.len() as f64)
        .with("max_abs_delta_v", best))
}

/// Real eigenpair `(λ, w)` of `Df(x*)` with `|λ| > 1` and `∇v(x*)·w ≠ 0`,
/// plus the dominance condition selected by `mode`.
pub fn gradient_eigvec_criterion(
    map: &MapSystem,
    fp: &FixedPoint,
    v: &Observable,
    mode: GradientMode,
) -> Result<CenterVerdict> {
    if mode == GradientMode::LinearMap && !map.is_linear() {
        return Err(Error::NotApplicable("map is not declared linear".into()));
    }
    let pairs: Vec<_> = fp.spectral.unstable_real_pairs().collect();
    if pairs.is_empty() {
        return Err(Error::NotApplicable(
            "no real eigenvalue with modulus above one".into(),
        ));
    }
    let grad = gradient(v, &fp.location, FIRST_DERIVATIVE_STEP)?;
    let rho = fp.spectral.spectral_radius;
    let a_norm = fp.spectral.spectral_norm;
    let criterion = mode.criterion();

    let mut fallback: Option<CenterVerdict> = None;
    for pair in pairs {
        let lambda = pair.value;
        let lambda_sq = lambda * lambda;
        let grad_dot_w = dot(&grad, &pair.vector);
        let margin_h1 = (lambda_sq - a_norm) / a_norm;
        let margin_h2 = (lambda_sq - rho) / rho;
        let dominance = match mode {
            GradientMode::LinearMap => true,
            GradientMode::H1 => margin_h1 > CRITERION_MARGIN,
            GradientMode::H2 => margin_h2 > CRITERION_MARGIN,
        };
        let ok = dominance && grad_dot_w.abs() > NONZERO_TOL;
        let mut verdict = CenterVerdict::new(
            if ok {
                Decision::Center
            } else {
                Decision::Inconclusive
            },
            criterion,
        )
        .with("lambda", lambda)
        .with("lambda_sq", lambda_sq)
        .with("rho", rho)
        .with("spectral_norm", a_norm)
        .with("grad_dot_w", grad_dot_w)
        .with("margin_h1", margin_h1)
        .with("margin_h2", margin_h2);
        for (k, wk) in pair.vector.iter().enumerate() {
            verdict = verdict.with(&format!("w{}", k + 1), *wk);
        }
        if ok {
            return Ok(verdict);
        }
        fallback.get_or_insert(verdict);
    }
    Ok(fallback.expect("at least one unstable pair"))
}

/// Nonnegative irreducible `Df(x*)` with `ρ > 1` and a linear observable
/// `pᵀx` with `p ≥ 0`, `p ≠ 0`: the positive Perron vector witnesses the
/// gradient–eigenvector condition.
pub fn perron_frobenius_criterion(fp: &FixedPoint, p_vec: &[f64]) -> Result<CenterVerdict> {
    let n = fp.location.len();
    if n < 2 {
        return Err(Error::NotApplicable("needs dimension at least 2".into()));
    }
    if p_vec.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: p_vec.len(),
        });
    }
    if p_vec.iter().any(|p| !(*p >= 0.0)) || p_vec.iter().all(|p| *p == 0.0) {
        return Err(Error::NotApplicable(
            "observable coefficients must be nonnegative and not all zero".into(),
        ));
    }
    let a = fp.jacobian_matrix();
    if !nonneg_irreducible(&a) {
        return Err(Error::NotApplicable(
            "Jacobian is not nonnegative and irreducible".into(),
        ));
    }
    let rho = fp.spectral.spectral_radius;
    let decision = if rho > 1.0 + CRITERION_MARGIN {
        Decision::Center
    } else {
        Decision::Inconclusive
    };
    let mut verdict = CenterVerdict::new(decision, Criterion::PerronFrobenius).with("rho", rho);
    if let Some(perron) = fp
        .spectral
        .real_eigenpairs
        .iter()
        .find(|p| (p.value - rho).abs() <= 1e-8 * rho.max(1.0))
    {
        for (k, wk) in perron.vector.iter().enumerate() {
            verdict = verdict.with(&format!("w{}", k + 1), *wk);
        }
        verdict = verdict
            .with(
                "perron_min_component",
                perron.vector.iter().copied().fold(f64::INFINITY, f64::min),
            )
            .with("p_dot_w", dot(p_vec, &perron.vector));
    }
    Ok(verdict)
}

/// Unstable fixed point with `∇Δv(x*) = 0` and a definite Hessian of `Δv`.
pub fn flatness_criterion(map: &MapSystem, fp: &FixedPoint, v: &Observable) -> Result<CenterVerdict> {
    if fp.stability != Stability::Unstable {
        return Err(Error::NotApplicable("fixed point is not unstable".into()));
    }
    let x = &fp.location;
    let grad_v = gradient(v, x, FIRST_DERIVATIVE_STEP)?;
    let grad_dv = gradient_delta_v(map, v, x, FIRST_DERIVATIVE_STEP)?;
    let scale = 1.0 + (1.0 + fp.spectral.spectral_norm) * norm(&grad_v);
    let grad_norm = norm(&grad_dv);
    let mut verdict = CenterVerdict::new(Decision::Inconclusive, Criterion::HessianFlatness)
        .with("grad_delta_v_norm", grad_norm)
        .with("grad_scale", scale);
    if grad_norm > FLATNESS_TOL * scale {
        return Ok(verdict);
    }
    let hess = hessian_delta_v(map, v, x, HESSIAN_STEP)?;
    verdict = verdict.with("hessian_asymmetry", hess.asymmetry);
    let def = definiteness(&hess.matrix, DEFINITENESS_TOL)?;
    for (k, ev) in def.eigenvalues.iter().enumerate() {
        verdict = verdict.with(&format!("hessian_eig{}", k + 1), *ev);
    }
    verdict = verdict.with("hessian_min_abs_eigenvalue", def.min_abs_eigenvalue);
    if hess.asymmetric {
        verdict.diagnostics.push("Hessian estimate too asymmetric".into());
        return Ok(verdict);
    }
    if matches!(
        def.kind,
        Definiteness::PositiveDefinite | Definiteness::NegativeDefinite
    ) {
        verdict.decision = Decision::Center;
    }
    Ok(verdict)
}

/// Settings for [`classify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    /// Empirical fallback; `None` skips it.
    pub empirical: Option<EmpiricalOptions>,
    /// Random probes for the linear eigenspace criterion.
    pub linear_samples: usize,
    pub seed: u64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            empirical: Some(EmpiricalOptions::default()),
            linear_samples: 32,
            seed: 0,
        }
    }
}

/// Runs the criteria in order and returns the first decisive verdict:
/// stable exclusion, Perron–Frobenius (linear observable with nonnegative
/// coefficients), the linear-map criteria (linear maps only), gradient–
/// eigenvector under the spectral-radius then the spectral-norm condition,
/// Hessian flatness, and finally the empirical escape test. Every attempt
/// is attached to the returned verdict.
pub fn classify(
    map: &MapSystem,
    fp: &FixedPoint,
    v: &Observable,
    options: &ClassifyOptions,
) -> CenterVerdict {
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut diagnostics: Vec<String> = Vec::new();
    let finish = |mut verdict: CenterVerdict, attempts: Vec<Attempt>, diagnostics: Vec<String>| {
        verdict.attempts = attempts;
        verdict.diagnostics.extend(diagnostics);
        verdict
    };

    let stable = stable_exclusion(fp);
    attempts.push(stable.attempt());
    if stable.decision == Decision::NotCenter {
        return finish(stable, attempts, diagnostics);
    }

    let mut steps: Vec<(Criterion, Box<dyn Fn() -> Result<CenterVerdict> + '_>)> = Vec::new();
    if let Some(form) = v.linear_form() {
        let p = form.coefficients.clone();
        if map.dim() >= 2 && p.iter().all(|c| *c >= 0.0) && p.iter().any(|c| *c > 0.0) {
            steps.push((
                Criterion::PerronFrobenius,
                Box::new(move || perron_frobenius_criterion(fp, &p)),
            ));
        }
    }
    if map.is_linear() {
        steps.push((
            Criterion::GradientEigvecLinear,
            Box::new(|| gradient_eigvec_criterion(map, fp, v, GradientMode::LinearMap)),
        ));
        steps.push((
            Criterion::LinearEigenspace,
            Box::new(|| {
                if fp.location.iter().any(|x| *x != 0.0) {
                    return Err(Error::NotApplicable("only the origin of a linear map".into()));
                }
                linear_eigenspace_criterion(map, v, options.linear_samples, options.seed)
            }),
        ));
    }
    steps.push((
        Criterion::GradientEigvecH2,
        Box::new(|| gradient_eigvec_criterion(map, fp, v, GradientMode::H2)),
    ));
    steps.push((
        Criterion::GradientEigvecH1,
        Box::new(|| gradient_eigvec_criterion(map, fp, v, GradientMode::H1)),
    ));
    steps.push((
        Criterion::HessianFlatness,
        Box::new(|| flatness_criterion(map, fp, v)),
    ));
    if let Some(opts) = &options.empirical {
        steps.push((
            Criterion::Empirical,
            Box::new(move || fixed_point_empirical_verdict(map, v, fp, opts)),
        ));
    }

    let mut last = Criterion::StableExclusion;
    let mut last_certificate = stable.certificate.clone();
    for (criterion, run) in steps {
        last = criterion;
        match run() {
            Ok(verdict) => {
                attempts.push(verdict.attempt());
                if verdict.decision != Decision::Inconclusive {
                    return finish(verdict, attempts, diagnostics);
                }
                last_certificate = verdict.certificate;
            }
            Err(e) => {
                attempts.push(Attempt {
                    criterion,
                    decision: None,
                    certificate: BTreeMap::new(),
                    note: Some(e.to_string()),
                });
                diagnostics.push(format!("{criterion:?}: {e}"));
            }
        }
    }
    let mut verdict = CenterVerdict::new(Decision::Inconclusive, last);
    verdict.certificate = last_certificate;
    verdict.empirical = last == Criterion::Empirical;
    finish(verdict, attempts, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_linear(a: f64, b: f64) -> MapSystem {
        MapSystem::linear("diag", DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])).unwrap()
    }

    fn origin(map: &MapSystem) -> FixedPoint {
        FixedPoint::at(map, &vec![0.0; map.dim()]).unwrap()
    }

    #[test]
    fn eigenspace_criterion_cases() {
        let map = diag_linear(2.0, 0.5);
        let x = Observable::coordinate("x", 2, 0);
        let v = linear_eigenspace_criterion(&map, &x, 8, 1).unwrap();
        assert_eq!(v.decision, Decision::Center);
        assert!((v.certificate["max_abs_delta_v"] - 1.0).abs() < 1e-12);
        let y = Observable::coordinate("y", 2, 1);
        let v = linear_eigenspace_criterion(&map, &y, 8, 1).unwrap();
        assert_eq!(v.decision, Decision::Inconclusive);
        let stable = diag_linear(0.5, 0.2);
        assert!(matches!(
            linear_eigenspace_criterion(&stable, &x, 8, 1),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn eigenspace_criterion_perron_direction() {
        let map = MapSystem::linear("anti", DMatrix::from_row_slice(2, 2, &[0.0, 1.5, 1.3, 0.0]))
            .unwrap();
        let sum = Observable::linear("sum", vec![1.0, 1.0]);
        let v = linear_eigenspace_criterion(&map, &sum, 8, 1).unwrap();
        assert_eq!(v.decision, Decision::Center);
        // Δv at the unit Perron vector w ∝ (√1.5, √1.3): (√1.95 − 1)(w₁ + w₂)
        let w = [1.5_f64.sqrt(), 1.3_f64.sqrt()];
        let len = (w[0] * w[0] + w[1] * w[1]).sqrt();
        let expected = (1.95_f64.sqrt() - 1.0) * (w[0] + w[1]) / len;
        assert!(v.certificate["max_abs_delta_v"] >= expected - 1e-12);
    }

    #[test]
    fn gradient_criterion_on_linear_map() {
        let map = diag_linear(-3.0, 0.5);
        let fp = origin(&map);
        let x = Observable::coordinate("x", 2, 0);
        let v = gradient_eigvec_criterion(&map, &fp, &x, GradientMode::LinearMap).unwrap();
        assert_eq!(v.decision, Decision::Center);
        assert_eq!(v.certificate["lambda"], -3.0);
        let y = Observable::coordinate("y", 2, 1);
        let v = gradient_eigvec_criterion(&map, &fp, &y, GradientMode::LinearMap).unwrap();
        assert_eq!(v.decision, Decision::Inconclusive);
    }

    #[test]
    fn linear_mode_needs_linear_map() {
        let map = MapSystem::new("nl", 1, |x, o| o[0] = 2.0 * x[0] + x[0] * x[0]);
        let fp = origin(&map);
        let x = Observable::coordinate("x", 1, 0);
        assert!(matches!(
            gradient_eigvec_criterion(&map, &fp, &x, GradientMode::LinearMap),
            Err(Error::NotApplicable(_))
        ));
        let v = gradient_eigvec_criterion(&map, &fp, &x, GradientMode::H2).unwrap();
        assert_eq!(v.decision, Decision::Center);
    }

    #[test]
    fn h1_can_fail_where_h2_holds() {
        // λ = 1.1 dominant, but the shear makes ‖A‖ > λ²
        let map = MapSystem::linear("shear", DMatrix::from_row_slice(2, 2, &[1.1, 5.0, 0.0, 0.2]))
            .unwrap();
        let fp = origin(&map);
        let x = Observable::coordinate("x", 2, 0);
        let h2 = gradient_eigvec_criterion(&map, &fp, &x, GradientMode::H2).unwrap();
        let h1 = gradient_eigvec_criterion(&map, &fp, &x, GradientMode::H1).unwrap();
        assert_eq!(h2.decision, Decision::Center);
        assert_eq!(h1.decision, Decision::Inconclusive);
        assert!(h1.certificate["margin_h1"] < 0.0);
    }

    #[test]
    fn stable_exclusion_cases() {
        let stable = origin(&diag_linear(0.5, -0.9));
        assert_eq!(stable_exclusion(&stable).decision, Decision::NotCenter);
        let unstable = origin(&diag_linear(1.5, 0.5));
        assert_eq!(stable_exclusion(&unstable).decision, Decision::Inconclusive);
        let marginal = origin(&diag_linear(1.0, 0.5));
        assert_eq!(marginal.stability, Stability::Marginal);
        assert_eq!(stable_exclusion(&marginal).decision, Decision::Inconclusive);
    }

    #[test]
    fn perron_frobenius_cases() {
        let map = MapSystem::linear("anti", DMatrix::from_row_slice(2, 2, &[0.0, 1.5, 1.3, 0.0]))
            .unwrap();
        let v = perron_frobenius_criterion(&origin(&map), &[1.0, 1.0]).unwrap();
        assert_eq!(v.decision, Decision::Center);
        assert!((v.certificate["rho"] - 1.95_f64.sqrt()).abs() < 1e-9);
        assert!(v.certificate["perron_min_component"] > 0.0);

        let reducible = diag_linear(2.0, 3.0);
        assert!(matches!(
            perron_frobenius_criterion(&origin(&reducible), &[1.0, 1.0]),
            Err(Error::NotApplicable(_))
        ));
        let weak = MapSystem::linear("weak", DMatrix::from_row_slice(2, 2, &[0.0, 0.9, 0.9, 0.0]))
            .unwrap();
        let v = perron_frobenius_criterion(&origin(&weak), &[1.0, 1.0]).unwrap();
        assert_eq!(v.decision, Decision::Inconclusive);
        assert!((v.certificate["rho"] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn flatness_cases() {
        let cubic = MapSystem::new("cubic", 1, |x, o| o[0] = 2.0 * x[0] + x[0].powi(3));
        let sq = Observable::new("x^2", |p| p[0] * p[0]);
        let v = flatness_criterion(&cubic, &origin(&cubic), &sq).unwrap();
        assert_eq!(v.decision, Decision::Center);
        assert!((v.certificate["hessian_eig1"] - 6.0).abs() < 1e-4);

        let stable = diag_linear(0.5, 0.5);
        let x = Observable::coordinate("x", 2, 0);
        assert!(matches!(
            flatness_criterion(&stable, &origin(&stable), &x),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn newton_finds_cubic_root_only_at_zero() {
        let cubic = MapSystem::new("cubic", 1, |x, o| o[0] = 2.0 * x[0] + x[0].powi(3));
        let rep = find_fixed_points(&cubic, &[(-1.0, 1.0)], &[9], 1e-12).unwrap();
        assert_eq!(rep.fixed_points.len(), 1);
        assert!(rep.fixed_points[0].location[0].abs() < 1e-12);
        assert_eq!(rep.fixed_points[0].stability, Stability::Unstable);
    }

    #[test]
    fn fixed_point_rejects_non_fixed_location() {
        let map = diag_linear(2.0, 0.5);
        assert!(FixedPoint::at(&map, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn grid_validation() {
        let map = diag_linear(2.0, 0.5);
        assert!(find_fixed_points(&map, &[(-1.0, 1.0), (-1.0, 1.0)], &[1, 3], 1e-12).is_err());
        assert!(find_fixed_points(&map, &[(-1.0, 1.0)], &[3], 1e-12).is_err());
    }
}
