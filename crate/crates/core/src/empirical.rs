//! Sampling-based evidence for transient centers, transient-point search
//! and honeymoon scaling.
//!
//! All randomness is derived from a user seed through per-task sub-seeds,
//! so parallel and serial runs agree bit-for-bit.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{CenterVerdict, Criterion, Decision, FixedPoint};
use crate::dynamics::{
    scan_increments, transient_time, MapSystem, Observable,
    TransientPointClass, TransientTimeResult,
};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_rows};
use crate::linalg::{self, FIRST_DERIVATIVE_STEP};

/// Ball radii used when none are given.
pub const DEFAULT_RADII: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
pub const DEFAULT_HORIZON: usize = 100_000;
pub const DEFAULT_SAMPLES: usize = 256;
/// Candidates must satisfy `candidate_residual ≤ CANDIDATE_TOL`.
pub const CANDIDATE_TOL: f64 = 1e-10;
/// Minimum ratio `escape_sup(smallest r) / escape_sup(largest r)` for a
/// non-decaying profile.
pub const NON_DECAY_RATIO: f64 = 0.5;
/// Attempts to draw a ball sample inside the domain before giving up on it.
const REJECTION_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOptions {
    /// Decreasing positive radii.
    pub radii: Vec<f64>,
    pub horizon: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for EmpiricalOptions {
    fn default() -> Self {
        Self {
            radii: DEFAULT_RADII.to_vec(),
            horizon: DEFAULT_HORIZON,
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

impl EmpiricalOptions {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::InvalidArgument("at least one radius is required".into()));
        }
        if self.radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument("radii must be positive".into()));
        }
        if self.radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument("radii must be strictly decreasing".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// The sampled double supremum `sup_{x∈B_r} sup_t |Δv(f^t x)|` per radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeProfile {
    pub candidate: Vec<f64>,
    pub radii: Vec<f64>,
    pub escape_sup: Vec<f64>,
    pub horizon: usize,
    pub samples_per_radius: usize,
    pub seed: u64,
}

impl EscapeProfile {
    /// Writes `radius,escape_sup`.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        let rows = self
            .radii
            .iter()
            .zip(&self.escape_sup)
            .map(|(r, e)| vec![fmt_f64(*r), fmt_f64(*e)]);
        write_rows(w, "radius,escape_sup", rows)
    }

    /// `escape_sup` at the smallest radius over that at the largest.
    pub fn decay_ratio(&self) -> f64 {
        let first = self.escape_sup[0];
        let last = *self.escape_sup.last().expect("non-empty profile");
        if first == 0.0 {
            if last == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            last / first
        }
    }

    /// Center (empirical) when every radius reaches `S* = ½·escape_sup` at
    /// the largest radius and the profile does not decay.
    pub fn verdict(&self) -> CenterVerdict {
        let largest = self.escape_sup[0];
        let s_star = 0.5 * largest;
        let min_sup = self.escape_sup.iter().copied().fold(f64::INFINITY, f64::min);
        let ratio = self.decay_ratio();
        let center = largest > 0.0 && min_sup >= s_star && ratio >= NON_DECAY_RATIO;
        let mut verdict = CenterVerdict::new(
            if center {
                Decision::Center
            } else {
                Decision::Inconclusive
            },
            Criterion::Empirical,
        )
        .with("s_star", s_star)
        .with("min_escape_sup", min_sup)
        .with("decay_ratio", ratio);
        for (k, (r, e)) in self.radii.iter().zip(&self.escape_sup).enumerate() {
            verdict = verdict
                .with(&format!("radius{}", k + 1), *r)
                .with(&format!("escape_sup{}", k + 1), *e);
        }
        verdict.empirical = true;
        verdict
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for task `(a, b)` under `seed`.
pub(crate) fn sub_seed(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(a)).wrapping_add(b))
}

fn ensure_candidate(map: &MapSystem, v: &Observable, candidate: &[f64], horizon: usize) -> Result<()> {
    // An orbit that leaves X^v and later blows up is reported as leaving X^v.
    let mut residual = 0.0_f64;
    let scan = scan_increments(map, v, candidate, horizon, |_, d| {
        residual = residual.max(d.abs());
        residual > CANDIDATE_TOL
    });
    if residual > CANDIDATE_TOL {
        return Err(Error::CandidateNotInXv { residual });
    }
    scan.map(|_| ())
}

/// `max_t |Δv(f^t x)|` along the orbit; an orbit that blows up contributes
/// what it reached before.
fn orbit_sup(map: &MapSystem, v: &Observable, x: &[f64], horizon: usize) -> f64 {
    let mut best = 0.0_f64;
    let _ = scan_increments(map, v, x, horizon, |_, d| {
        if d.is_finite() {
            best = best.max(d.abs());
        }
        false
    });
    best
}

/// Unit directions probed deterministically at `r/2`: coordinate axes and
/// real unstable eigenvectors of `Df(candidate)`.
fn probe_directions(map: &MapSystem, candidate: &[f64]) -> Vec<Vec<f64>> {
    let n = map.dim();
    let mut dirs = Vec::new();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        dirs.push(e);
    }
    if let Ok(jac) = linalg::jacobian(map, candidate, FIRST_DERIVATIVE_STEP) {
        if let Ok(spec) = linalg::eigen(&jac) {
            for pair in spec.unstable_real_pairs() {
                dirs.push(pair.vector.clone());
            }
        }
    }
    let mut signed = Vec::with_capacity(2 * dirs.len());
    for d in dirs {
        signed.push(d.iter().map(|x| -x).collect());
        signed.push(d);
    }
    signed
}

fn ball_sample(rng: &mut ChaCha8Rng, center: &[f64], r: f64) -> Vec<f64> {
    let n = center.len();
    loop {
        let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 || !len.is_finite() {
            continue;
        }
        let u: f64 = rng.random();
        let rho = r * u.powf(1.0 / n as f64);
        return center.iter().zip(&dir).map(|(c, d)| c + rho * d / len).collect();
    }
}

fn radius_sup(
    map: &MapSystem,
    v: &Observable,
    candidate: &[f64],
    r: f64,
    radius_index: usize,
    horizon: usize,
    samples: usize,
    seed: u64,
    probes: &[Vec<f64>],
) -> f64 {
    let probe_sup = probes
        .par_iter()
        .map(|d| {
            let x: Vec<f64> = candidate.iter().zip(d).map(|(c, di)| c + 0.5 * r * di).collect();
            if map.domain().contains(&x) {
                orbit_sup(map, v, &x, horizon)
            } else {
                0.0
            }
        })
        .reduce(|| 0.0, f64::max);
    let sample_sup = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(sub_seed(seed, radius_index as u64, k as u64));
            for _ in 0..REJECTION_ATTEMPTS {
                let x = ball_sample(&mut rng, candidate, r);
                if map.domain().contains(&x) {
                    return orbit_sup(map, v, &x, horizon);
                }
            }
            0.0
        })
        .reduce(|| 0.0, f64::max);
    probe_sup.max(sample_sup)
}

/// Sampled `sup_{x∈B_r(candidate)} sup_{t≤horizon} |Δv(f^t x)|`.
pub fn escape_supremum(
    map: &MapSystem,
    v: &Observable,
    candidate: &[f64],
    r: f64,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let opts = EmpiricalOptions {
        radii: vec![r],
        horizon,
        samples,
        seed,
    };
    Ok(escape_profile(map, v, candidate, &opts)?.escape_sup[0])
}

/// Escape suprema for every radius in `opts`.
pub fn escape_profile(
    map: &MapSystem,
    v: &Observable,
    candidate: &[f64],
    opts: &EmpiricalOptions,
) -> Result<EscapeProfile> {
    opts.validate()?;
    map.check_state(candidate)?;
    ensure_candidate(map, v, candidate, opts.horizon)?;
    Ok(profile_unchecked(map, v, candidate, opts))
}

fn profile_unchecked(
    map: &MapSystem,
    v: &Observable,
    candidate: &[f64],
    opts: &EmpiricalOptions,
) -> EscapeProfile {
    let probes = probe_directions(map, candidate);
    let escape_sup = opts
        .radii
        .iter()
        .enumerate()
        .map(|(k, r)| {
            radius_sup(
                map,
                v,
                candidate,
                *r,
                k,
                opts.horizon,
                opts.samples,
                opts.seed,
                &probes,
            )
        })
        .collect();
    EscapeProfile {
        candidate: candidate.to_vec(),
        radii: opts.radii.clone(),
        escape_sup,
        horizon: opts.horizon,
        samples_per_radius: opts.samples,
        seed: opts.seed,
    }
}

/// Empirical transient-center test for a candidate in the numeric `X^v`.
pub fn empirical_center_verdict(
    map: &MapSystem,
    v: &Observable,
    candidate: &[f64],
    opts: &EmpiricalOptions,
) -> Result<CenterVerdict> {
    Ok(escape_profile(map, v, candidate, opts)?.verdict())
}

/// Empirical test at a fixed point. A fixed point lies in `X^v` by
/// definition, so the orbit precondition is replaced by `|Δv(x*)|`, which
/// stays meaningful when the located point is only accurate to rounding and
/// its numerical orbit would drift off an unstable equilibrium.
pub(crate) fn fixed_point_empirical_verdict(
    map: &MapSystem,
    v: &Observable,
    fp: &FixedPoint,
    opts: &EmpiricalOptions,
) -> Result<CenterVerdict> {
    opts.validate()?;
    let next = map.eval_finite(&fp.location)?;
    let residual = (v.value(&next) - v.value(&fp.location)).abs();
    if residual > CANDIDATE_TOL {
        return Err(Error::CandidateNotInXv { residual });
    }
    Ok(profile_unchecked(map, v, &fp.location, opts).verdict())
}

/// A sample classified as a `(v, s, T)`-transient point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientPointHit {
    pub point: Vec<f64>,
    pub time: usize,
}

/// Writes `x1..xn,time`.
pub fn write_transient_points_csv<W: Write>(w: W, dim: usize, hits: &[TransientPointHit]) -> io::Result<()> {
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    header.push("time".into());
    let rows = hits.iter().map(|h| {
        let mut row: Vec<String> = h.point.iter().map(|x| fmt_f64(*x)).collect();
        row.push(h.time.to_string());
        row
    });
    write_rows(w, &header.join(","), rows)
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while out.len() < count {
        if out.iter().take_while(|p| **p * **p <= candidate).all(|p| candidate % p != 0) {
            out.push(candidate);
        }
        candidate += 1;
    }
    out
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * f;
        k /= base;
        f *= inv;
    }
    out
}

/// Scans `budget` points of a randomly shifted Halton sequence over
/// `region` and returns those that are `(v, s, T)`-transient points, in
/// sequence order. Orbits that blow up before triggering are skipped.
pub fn transient_point_search(
    map: &MapSystem,
    v: &Observable,
    region: &[(f64, f64)],
    s: f64,
    min_time: usize,
    horizon: usize,
    budget: usize,
    seed: u64,
) -> Result<Vec<TransientPointHit>> {
    let n = map.dim();
    if region.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: region.len(),
        });
    }
    if budget == 0 {
        return Err(Error::InvalidArgument("budget must be at least 1".into()));
    }
    if horizon <= min_time {
        return Err(Error::InvalidArgument(format!(
            "horizon ({horizon}) must exceed T ({min_time})"
        )));
    }
    if !(s > 0.0) {
        return Err(Error::InvalidArgument("threshold must be positive".into()));
    }
    let bases = primes(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let hits: Vec<Option<TransientPointHit>> = (0..budget)
        .into_par_iter()
        .map(|k| {
            let point: Vec<f64> = (0..n)
                .map(|i| {
                    let u = (radical_inverse(k as u64 + 1, bases[i]) + shift[i]).fract();
                    let (lo, hi) = region[i];
                    lo + (hi - lo) * u
                })
                .collect();
            let res = transient_time(map, v, &point, s, horizon).ok()?;
            match TransientPointClass::from_result(&res, min_time) {
                TransientPointClass::IsTransientPoint => Some(TransientPointHit {
                    point,
                    time: res.time.expect("finite"),
                }),
                _ => None,
            }
        })
        .collect();
    Ok(hits.into_iter().flatten().collect())
}

/// One row of a honeymoon-scaling table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub epsilon: f64,
    pub result: Result<TransientTimeResult>,
}

impl ScalingRow {
    /// `Finite`, `ExceededHorizon`, or the error kind.
    pub fn status(&self) -> &'static str {
        match &self.result {
            Ok(r) if r.is_finite() => "Finite",
            Ok(_) => "ExceededHorizon",
            Err(e) => e.kind(),
        }
    }

    pub fn time(&self) -> Option<usize> {
        self.result.as_ref().ok().and_then(|r| r.time)
    }
}

/// Transient times from `candidate + ε·direction` for each ε.
pub fn honeymoon_scaling(
    map: &MapSystem,
    v: &Observable,
    candidate: &[f64],
    direction: &[f64],
    epsilons: &[f64],
    s: f64,
    horizon: usize,
) -> Result<Vec<ScalingRow>> {
    map.check_dim(candidate)?;
    map.check_dim(direction)?;
    let len = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(len > 0.0) || !len.is_finite() {
        return Err(Error::InvalidArgument("direction must be a nonzero vector".into()));
    }
    if epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidArgument("epsilons must be positive".into()));
    }
    let starts: Vec<Vec<f64>> = epsilons
        .iter()
        .map(|e| candidate.iter().zip(direction).map(|(c, d)| c + e * d / len).collect())
        .collect();
    if let Some(bad) = starts.iter().find(|x| !map.domain().contains(x)) {
        return Err(Error::InvalidArgument(format!(
            "start {bad:?} lies outside the domain"
        )));
    }
    Ok(epsilons
        .iter()
        .zip(starts)
        .map(|(e, x)| ScalingRow {
            epsilon: *e,
            result: transient_time(map, v, &x, s, horizon),
        })
        .collect())
}

/// Writes `epsilon,status,time` (time empty unless finite).
pub fn write_scaling_csv<W: Write>(w: W, rows: &[ScalingRow]) -> io::Result<()> {
    let rows = rows.iter().map(|r| {
        vec![
            fmt_f64(r.epsilon),
            r.status().to_string(),
            r.time().map(|t| t.to_string()).unwrap_or_default(),
        ]
    });
    write_rows(w, "epsilon,status,time", rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn example1(h: f64) -> MapSystem {
        MapSystem::new("example1", 2, move |x, o| {
            o[0] = x[0] * (1.0 - h * x[1]);
            o[1] = x[1] + h * (x[0] - 1.0);
        })
    }

    fn quick(seed: u64) -> EmpiricalOptions {
        EmpiricalOptions {
            radii: vec![1e-2, 1e-3, 1e-4],
            horizon: 2000,
            samples: 16,
            seed,
        }
    }

    #[test]
    fn example1_origin_escapes_at_every_radius() {
        let map = example1(0.1);
        let x = Observable::coordinate("x", 2, 0);
        let prof = escape_profile(&map, &x, &[0.0, 0.0], &quick(3)).unwrap();
        for e in &prof.escape_sup {
            assert!(*e >= 0.5 * 0.01 * (1.0 - 1e-2), "{e}");
        }
        let verdict = prof.verdict();
        assert_eq!(verdict.decision, Decision::Center);
        assert!(verdict.empirical);
    }

    #[test]
    fn candidate_outside_xv_is_rejected() {
        let map = example1(0.1);
        let x = Observable::coordinate("x", 2, 0);
        let err = escape_profile(&map, &x, &[0.5, 0.5], &quick(0)).unwrap_err();
        assert!(matches!(err, Error::CandidateNotInXv { .. }));
    }

    #[test]
    fn stable_origin_decays() {
        let map =
            MapSystem::linear("stable", DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3])).unwrap();
        let x = Observable::coordinate("x", 2, 0);
        let prof = escape_profile(&map, &x, &[0.0, 0.0], &quick(1)).unwrap();
        assert!(prof.escape_sup[2] <= 1e-2 * prof.escape_sup[0] * 1.0001);
        assert_eq!(prof.verdict().decision, Decision::Inconclusive);
    }

    #[test]
    fn profile_is_seed_deterministic() {
        let map = example1(0.1);
        let x = Observable::coordinate("x", 2, 0);
        let a = escape_profile(&map, &x, &[0.0, 0.0], &quick(9)).unwrap();
        let b = escape_profile(&map, &x, &[0.0, 0.0], &quick(9)).unwrap();
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.write_csv(&mut buf_a).unwrap();
        b.write_csv(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
        assert!(String::from_utf8(buf_a).unwrap().starts_with("radius,escape_sup\n"));
    }

    #[test]
    fn radii_must_decrease() {
        let map = example1(0.1);
        let x = Observable::coordinate("x", 2, 0);
        let mut opts = quick(0);
        opts.radii = vec![1e-3, 1e-2];
        assert!(escape_profile(&map, &x, &[0.0, 0.0], &opts).is_err());
    }

    #[test]
    fn search_finds_points_near_invariant_axis() {
        let map = example1(0.1);
        let x = Observable::coordinate("x", 2, 0);
        let hits = transient_point_search(
            &map,
            &x,
            &[(0.0, 0.01), (-0.01, 0.01)],
            0.005,
            20,
            5000,
            64,
            7,
        )
        .unwrap();
        assert!(!hits.is_empty());
        assert!(hits.iter().all(|h| h.time > 20));
    }

    #[test]
    fn search_with_huge_threshold_is_empty() {
        let map = example1(0.1);
        let x = Observable::coordinate("x", 2, 0);
        let hits = transient_point_search(
            &map,
            &x,
            &[(0.0, 0.01), (-0.01, 0.01)],
            1e9,
            5,
            200,
            32,
            7,
        )
        .unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn example1_honeymoon_times_increase() {
        let map = example1(0.1);
        let x = Observable::coordinate("x", 2, 0);
        let rows = honeymoon_scaling(&map, &x, &[0.0, 0.0], &[1.0, 0.0], &[1e-2, 1e-3, 1e-4], 0.005, 10_000)
            .unwrap();
        let times: Vec<usize> = rows.iter().map(|r| r.time().unwrap()).collect();
        assert_eq!(times, vec![17, 26, 34]);
        let mut buf = Vec::new();
        write_scaling_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epsilon,status,time\n"));
        assert!(text.contains(",Finite,26\n"));
    }

    #[test]
    fn large_epsilon_triggers_within_two_steps() {
        let map = example1(0.1);
        let x = Observable::coordinate("x", 2, 0);
        let rows = honeymoon_scaling(&map, &x, &[0.0, 0.0], &[1.0, 0.0], &[0.5], 0.005, 100).unwrap();
        // Δx vanishes on the first step from (ε, 0); y must move first
        assert_eq!(rows[0].time(), Some(2));
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(0, 0, 1), sub_seed(0, 1, 0));
        assert_ne!(sub_seed(1, 0, 0), sub_seed(0, 0, 0));
    }
}
