//! Dense spectral tools for small matrices (n ≤ 64) and finite-difference
//! derivatives of maps and observables.
//!
//! Eigenvalues come from a real Schur decomposition; real eigenvectors are
//! recovered as right singular vectors of `A − λI` for the smallest singular
//! values. The spectral norm is `√ρ(AᵀA)` from a symmetric eigensolve.

mod diff;

pub use diff::{
    gradient, gradient_delta_v, hessian_delta_v, jacobian, numeric_gradient,
    numeric_jacobian, HessianEstimate, FIRST_DERIVATIVE_STEP, HESSIAN_STEP,
};

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest matrix the dense routines accept.
pub const MAX_DENSE_DIM: usize = 64;

/// An eigenvalue is treated as real when `|Im λ| ≤ REAL_EIGEN_TOL·(1+|λ|)`.
pub const REAL_EIGEN_TOL: f64 = 1e-9;

/// Stored eigenpairs satisfy `‖Aw − λw‖ ≤ EIGENPAIR_RESIDUAL_TOL·‖A‖`.
pub const EIGENPAIR_RESIDUAL_TOL: f64 = 1e-8;

/// Default relative degeneracy tolerance for [`definiteness`].
pub const DEFINITENESS_TOL: f64 = 1e-8;

/// Moduli within this of 1 are neither stable nor unstable.
pub const UNIT_CIRCLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealEigenpair {
    pub value: f64,
    /// Unit 2-norm; the largest-magnitude component is made positive.
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub eigenvalues: Vec<Complex64>,
    pub real_eigenpairs: Vec<RealEigenpair>,
    pub spectral_radius: f64,
    pub spectral_norm: f64,
}

impl SpectralSummary {
    /// Real eigenpairs with `|λ| > 1 + UNIT_CIRCLE_TOL`.
    pub fn unstable_real_pairs(&self) -> impl Iterator<Item = &RealEigenpair> {
        self.real_eigenpairs
            .iter()
            .filter(|p| p.value.abs() > 1.0 + UNIT_CIRCLE_TOL)
    }
}

fn check_square(a: &DMatrix<f64>) -> Result<usize> {
    if !a.is_square() {
        return Err(Error::InvalidArgument(format!(
            "matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let n = a.nrows();
    if n == 0 || n > MAX_DENSE_DIM {
        return Err(Error::InvalidArgument(format!(
            "matrix dimension {n} outside 1..={MAX_DENSE_DIM}"
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    Ok(n)
}

fn sweep_cap(n: usize) -> usize {
    100 * n
}

/// All eigenvalues of a real square matrix, in Schur order.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = check_square(a)?;
    if n == 1 {
        return Ok(vec![Complex64::new(a[(0, 0)], 0.0)]);
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, sweep_cap(n)).ok_or(
        Error::ConvergenceFailure {
            iterations: sweep_cap(n),
        },
    )?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

pub fn is_real_eigenvalue(z: Complex64) -> bool {
    z.im.abs() <= REAL_EIGEN_TOL * (1.0 + z.norm())
}

/// Eigenvalues, real eigenpairs, spectral radius and spectral norm.
pub fn eigen(a: &DMatrix<f64>) -> Result<SpectralSummary> {
    let n = check_square(a)?;
    let values = eigenvalues(a)?;
    let spectral_radius = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let norm = spectral_norm(a)?;

    let mut reals: Vec<f64> = values
        .iter()
        .filter(|z| is_real_eigenvalue(**z))
        .map(|z| z.re)
        .collect();
    reals.sort_by(|x, y| y.abs().total_cmp(&x.abs()).then(y.total_cmp(x)));

    let mut real_eigenpairs = Vec::new();
    let mut i = 0;
    while i < reals.len() {
        let lambda = reals[i];
        let mut multiplicity = 1;
        while i + multiplicity < reals.len()
            && (reals[i + multiplicity] - lambda).abs() <= REAL_EIGEN_TOL * (1.0 + lambda.abs())
        {
            multiplicity += 1;
        }
        let cluster_mean =
            reals[i..i + multiplicity].iter().sum::<f64>() / multiplicity as f64;
        for w in null_vectors(a, cluster_mean, multiplicity, norm) {
            let av = a * DVector::from_column_slice(&w);
            let residual = (0..n)
                .map(|k| (av[k] - cluster_mean * w[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            if residual <= EIGENPAIR_RESIDUAL_TOL * norm.max(f64::MIN_POSITIVE) || residual == 0.0
            {
                real_eigenpairs.push(RealEigenpair {
                    value: cluster_mean,
                    vector: w,
                });
            } else {
                log::debug!(
                    "dropping eigenpair for λ = {cluster_mean}: residual {residual:e} too large"
                );
            }
        }
        i += multiplicity;
    }

    Ok(SpectralSummary {
        eigenvalues: values,
        real_eigenpairs,
        spectral_radius,
        spectral_norm: norm,
    })
}

/// Up to `max_count` unit vectors spanning (numerically) the null space of
/// `A − λI`; always at least one.
fn null_vectors(a: &DMatrix<f64>, lambda: f64, max_count: usize, norm: f64) -> Vec<Vec<f64>> {
    let n = a.nrows();
    let shifted = a - DMatrix::<f64>::identity(n, n) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = match svd.v_t {
        Some(v) => v,
        None => return Vec::new(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let cutoff = EIGENPAIR_RESIDUAL_TOL * norm.max(1.0);
    order
        .iter()
        .take(max_count)
        .enumerate()
        .filter(|(k, &idx)| *k == 0 || svd.singular_values[idx] <= cutoff)
        .map(|(_, &idx)| normalize_sign(v_t.row(idx).iter().copied().collect()))
        .collect()
}

/// Scales to unit norm and flips so the largest-magnitude entry is positive.
fn normalize_sign(mut w: Vec<f64>) -> Vec<f64> {
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        w.iter_mut().for_each(|x| *x /= norm);
    }
    let mut best = 0;
    for (k, x) in w.iter().enumerate() {
        if x.abs() > w[best].abs() + 1e-12 {
            best = k;
        }
    }
    if w[best] < 0.0 {
        w.iter_mut().for_each(|x| *x = -*x);
    }
    w
}

/// Operator 2-norm, `√ρ(AᵀA)`.
pub fn spectral_norm(a: &DMatrix<f64>) -> Result<f64> {
    let n = check_square(a)?;
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::try_new(ata, f64::EPSILON, sweep_cap(n)).ok_or(
        Error::ConvergenceFailure {
            iterations: sweep_cap(n),
        },
    )?;
    Ok(eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(*v)).max(0.0).sqrt())
}

/// Spectral radius `max |λᵢ|`.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Orthonormal basis of the span of eigenvectors whose eigenvalues have
/// modulus above `1 + UNIT_CIRCLE_TOL`. Complex pairs contribute the real
/// and imaginary parts of their eigenvector.
pub fn unstable_subspace_basis(a: &DMatrix<f64>) -> Result<Vec<Vec<f64>>> {
    let n = check_square(a)?;
    let summary = eigen(a)?;
    let mut raw: Vec<Vec<f64>> = summary
        .unstable_real_pairs()
        .map(|p| p.vector.clone())
        .collect();
    for z in &summary.eigenvalues {
        if is_real_eigenvalue(*z) || z.im < 0.0 || z.norm() <= 1.0 + UNIT_CIRCLE_TOL {
            continue;
        }
        let shifted = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let d = if i == j { *z } else { Complex64::new(0.0, 0.0) };
            Complex64::new(a[(i, j)], 0.0) - d
        });
        let svd = shifted.svd(false, true);
        if let Some(v_t) = svd.v_t {
            let mut idx = 0;
            for k in 1..n {
                if svd.singular_values[k] < svd.singular_values[idx] {
                    idx = k;
                }
            }
            // rows of V^H are conjugated right singular vectors
            let z_vec: Vec<Complex64> = v_t.row(idx).iter().map(|c| c.conj()).collect();
            raw.push(z_vec.iter().map(|c| c.re).collect());
            raw.push(z_vec.iter().map(|c| c.im).collect());
        }
    }
    Ok(gram_schmidt(raw))
}

fn gram_schmidt(vectors: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in vectors {
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-10 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Definiteness {
    PositiveDefinite,
    NegativeDefinite,
    Indefinite,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitenessVerdict {
    pub kind: Definiteness,
    pub min_abs_eigenvalue: f64,
    pub eigenvalues: Vec<f64>,
}

/// Sign pattern of a symmetric matrix's eigenvalues. Any eigenvalue with
/// `|λᵢ| ≤ tol·max|λⱼ|` makes the verdict `Degenerate`.
pub fn definiteness(h: &DMatrix<f64>, tol: f64) -> Result<DefinitenessVerdict> {
    let n = check_square(h)?;
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, sweep_cap(n)).ok_or(
        Error::ConvergenceFailure {
            iterations: sweep_cap(n),
        },
    )?;
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    let max_abs = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min_abs = values.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let kind = if max_abs == 0.0 || min_abs <= tol * max_abs {
        Definiteness::Degenerate
    } else if values.iter().all(|v| *v > 0.0) {
        Definiteness::PositiveDefinite
    } else if values.iter().all(|v| *v < 0.0) {
        Definiteness::NegativeDefinite
    } else {
        Definiteness::Indefinite
    };
    Ok(DefinitenessVerdict {
        kind,
        min_abs_eigenvalue: min_abs,
        eigenvalues: values,
    })
}

/// True when every entry is nonnegative and `(I + A)^{n−1}` is entrywise
/// positive. Works on the positivity pattern with boolean products, so it
/// cannot overflow.
pub fn nonneg_irreducible(a: &DMatrix<f64>) -> bool {
    if !a.is_square() || a.nrows() == 0 {
        return false;
    }
    if a.iter().any(|v| !(*v >= 0.0)) {
        return false;
    }
    let n = a.nrows();
    let mut pattern: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| i == j || a[(i, j)] > 0.0).collect())
        .collect();
    // the diagonal makes powers monotone, so any exponent ≥ n−1 suffices
    let mut power = 1;
    while power < n.saturating_sub(1) {
        pattern = bool_product(&pattern, &pattern);
        power *= 2;
    }
    pattern.iter().all(|row| row.iter().all(|b| *b))
}

fn bool_product(x: &[Vec<bool>], y: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = x.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).any(|k| x[i][k] && y[k][j])).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn antidiagonal_eigenvalues() {
        let s = eigen(&m2(0.0, 1.5, 1.3, 0.0)).unwrap();
        let root = 1.95_f64.sqrt();
        let mut re: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + root).abs() < 1e-12 && (re[1] - root).abs() < 1e-12);
        // λ² = ab, by substitution into the characteristic polynomial
        for z in &s.eigenvalues {
            assert!((z * z - Complex64::new(1.95, 0.0)).norm() < 1e-12);
        }
        assert!((s.spectral_radius - root).abs() < 1e-12);
        assert!((s.spectral_norm - 1.5).abs() < 1e-12);
        assert_eq!(s.real_eigenpairs.len(), 2);
        let perron = &s.real_eigenpairs[0];
        assert!((perron.value - root).abs() < 1e-12);
        assert!(perron.vector.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn identity_has_two_unit_eigenpairs() {
        let s = eigen(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(s.spectral_radius, 1.0);
        assert!((s.spectral_norm - 1.0).abs() < 1e-15);
        assert_eq!(s.real_eigenpairs.len(), 2);
        let dot: f64 = s.real_eigenpairs[0]
            .vector
            .iter()
            .zip(&s.real_eigenpairs[1].vector)
            .map(|(a, b)| a * b)
            .sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn diagonal_eigenvector() {
        let s = eigen(&m2(1.5, 0.0, 0.0, 0.5)).unwrap();
        let top = &s.real_eigenpairs[0];
        assert_eq!(top.value, 1.5);
        assert!((top.vector[0] - 1.0).abs() < 1e-15 && top.vector[1].abs() < 1e-15);
        assert_eq!(s.real_eigenpairs[1].value, 0.5);
    }

    #[test]
    fn rotation_has_no_real_pairs() {
        let s = eigen(&m2(0.0, -2.0, 2.0, 0.0)).unwrap();
        assert!(s.real_eigenpairs.is_empty());
        assert!((s.spectral_radius - 2.0).abs() < 1e-12);
        let basis = unstable_subspace_basis(&m2(0.0, -2.0, 2.0, 0.0)).unwrap();
        assert_eq!(basis.len(), 2);
    }

    #[test]
    fn spectral_norms() {
        assert_eq!(spectral_norm(&m2(1.5, 0.0, 0.0, 0.5)).unwrap(), 1.5);
        // AᵀA = diag(1.69, 2.25)
        assert!((spectral_norm(&m2(0.0, 1.5, 1.3, 0.0)).unwrap() - 1.5).abs() < 1e-14);
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn definiteness_cases() {
        let v = definiteness(&DMatrix::from_element(1, 1, 6.0), DEFINITENESS_TOL).unwrap();
        assert_eq!(v.kind, Definiteness::PositiveDefinite);
        assert_eq!(v.min_abs_eigenvalue, 6.0);
        let v = definiteness(&m2(0.0, -0.1, -0.1, 0.0), DEFINITENESS_TOL).unwrap();
        assert_eq!(v.kind, Definiteness::Indefinite);
        assert!((v.eigenvalues[0] + 0.1).abs() < 1e-15 && (v.eigenvalues[1] - 0.1).abs() < 1e-15);
        let v = definiteness(&DMatrix::zeros(2, 2), DEFINITENESS_TOL).unwrap();
        assert_eq!(v.kind, Definiteness::Degenerate);
        let v = definiteness(&m2(-1.0, 0.0, 0.0, -3.0), DEFINITENESS_TOL).unwrap();
        assert_eq!(v.kind, Definiteness::NegativeDefinite);
    }

    #[test]
    fn irreducibility_cases() {
        assert!(nonneg_irreducible(&m2(0.0, 1.5, 1.3, 0.0)));
        assert!(!nonneg_irreducible(&DMatrix::identity(2, 2)));
        assert!(!nonneg_irreducible(&m2(-1.0, 2.0, 2.0, 1.0)));
        // a 4-cycle needs the full n−1 power
        let mut cycle = DMatrix::zeros(4, 4);
        for i in 0..4 {
            cycle[(i, (i + 1) % 4)] = 1.0;
        }
        assert!(nonneg_irreducible(&cycle));
        // huge entries do not overflow the pattern test
        let big = m2(0.0, 1e300, 1e300, 0.0);
        assert!(nonneg_irreducible(&big));
    }

    #[test]
    fn rejects_non_square_and_oversized() {
        assert!(eigen(&DMatrix::zeros(2, 3)).is_err());
        assert!(eigen(&DMatrix::zeros(65, 65)).is_err());
    }

    fn small_matrix() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..=6).prop_flat_map(|n| {
            prop::collection::vec(-3.0f64..3.0, n * n)
                .prop_map(move |v| DMatrix::from_row_slice(n, n, &v))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn radius_bounded_by_norm(a in small_matrix()) {
            let s = eigen(&a).unwrap();
            prop_assert!(s.spectral_radius <= s.spectral_norm * (1.0 + 1e-9) + 1e-12);
            let rho = s.eigenvalues.iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!((rho - s.spectral_radius).abs() <= 1e-9 * rho.max(1e-300));
            for p in &s.real_eigenpairs {
                let w = DVector::from_column_slice(&p.vector);
                let r = (&a * &w - &w * p.value).norm();
                prop_assert!(r <= 1e-8 * s.spectral_norm + 1e-300);
                prop_assert!((w.norm() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn perron_frobenius_consistency(v in prop::collection::vec(0.0f64..2.0, 9)) {
            let mut a = DMatrix::from_row_slice(3, 3, &v);
            // keep a cycle so the pattern is irreducible
            a[(0, 1)] += 0.1;
            a[(1, 2)] += 0.1;
            a[(2, 0)] += 0.1;
            prop_assert!(nonneg_irreducible(&a));
            let s = eigen(&a).unwrap();
            let perron = s.real_eigenpairs.iter()
                .find(|p| (p.value - s.spectral_radius).abs() <= 1e-8 * s.spectral_radius.max(1.0));
            prop_assert!(perron.is_some());
            prop_assert!(perron.unwrap().vector.iter().all(|x| *x > 0.0));
        }
    }
}
