//! Built-in parameterized models with analytic Jacobians, named
//! observables, closed-form fixed points and known verdicts.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::criteria::{Criterion, Decision};
use crate::dynamics::{DomainBox, MapSystem, Observable, DEFAULT_DOMAIN_HALF_WIDTH};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    Example1,
    Example2,
    Cubic1d,
    LinearCustom,
    StreipertPp,
    Epidemic,
}

impl ModelId {
    pub const ALL: [ModelId; 6] = [
        ModelId::Example1,
        ModelId::Example2,
        ModelId::Cubic1d,
        ModelId::LinearCustom,
        ModelId::StreipertPp,
        ModelId::Epidemic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Example1 => "example1",
            ModelId::Example2 => "example2",
            ModelId::Cubic1d => "cubic1d",
            ModelId::LinearCustom => "linear_custom",
            ModelId::StreipertPp => "streipert_pp",
            ModelId::Epidemic => "epidemic",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            ModelId::Example1 => "x' = x(1 - h y), y' = y + h(x - 1)",
            ModelId::Example2 => "x' = a y / (1 + x^2), y' = b x / (1 + y^2)",
            ModelId::Cubic1d => "x' = 2x + x^3",
            ModelId::LinearCustom => "x' = A x with A given entrywise as a<i><j>",
            ModelId::StreipertPp => {
                "x' = (1+r) x / (1 + (r/K) x + alpha y), y' = (1 + gamma x) y / (1 + d)"
            }
            ModelId::Epidemic => "S' = (1-p) S - alpha S I + b, I' = alpha S I",
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Unknown(format!("model '{s}'")))
    }
}

/// A model parameter: default value and validity range.
#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub range: &'static str,
    valid: fn(f64) -> bool,
}

impl ParamSpec {
    pub fn is_valid(&self, value: f64) -> bool {
        value.is_finite() && (self.valid)(value)
    }
}

fn positive(x: f64) -> bool {
    x > 0.0
}

const LINEAR_DEFAULT: [[f64; 2]; 2] = [[0.0, 1.5], [1.3, 0.0]];

/// Parameters of a model. `linear_custom` has no fixed list; its entries
/// are `a<i><j>` (1-based, square).
pub fn param_specs(id: ModelId) -> Vec<ParamSpec> {
    let spec = |name, default, range, valid| ParamSpec {
        name,
        default,
        range,
        valid,
    };
    match id {
        ModelId::Example1 => vec![spec("h", 0.1, "0 < h < 1", |h| h > 0.0 && h < 1.0)],
        ModelId::Example2 => vec![
            spec("a", 1.5, "a > 0", positive),
            spec("b", 1.3, "b > 0", positive),
        ],
        ModelId::Cubic1d | ModelId::LinearCustom => vec![],
        ModelId::StreipertPp => vec![
            spec("r", 0.5, "r > 0", positive),
            spec("K", 1.0, "K > 0", positive),
            spec("alpha", 1.0, "alpha > 0", positive),
            spec("gamma", 4.0, "gamma > 0", positive),
            spec("d", 1.0, "d > 0", positive),
        ],
        ModelId::Epidemic => vec![
            spec("b", 115.0, "b > 0", positive),
            spec("p", 0.003, "0 <= p < 1", |p| (0.0..1.0).contains(&p)),
            spec("alpha", 4e-5, "0 < alpha < 1", |a| a > 0.0 && a < 1.0),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamValue {
    pub name: String,
    pub value: f64,
    pub range: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableInfo {
    pub name: String,
    pub formula: String,
    /// Present for linear observables `cᵀx`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownFixedPoint {
    pub label: String,
    pub location: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthTarget {
    Point(Vec<f64>),
    /// Every point of the closed segment.
    Segment { from: Vec<f64>, to: Vec<f64> },
}

/// A verdict known in closed form for this parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub label: String,
    pub target: TruthTarget,
    pub observable: String,
    pub expected: Decision,
    /// Criterion expected to reach the verdict.
    pub route: Criterion,
    /// Established analytically outside the implemented criteria; the route
    /// is the numeric check that corroborates it.
    pub by_hand: bool,
    pub reason: String,
}

/// Catalog data for a built model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZooEntry {
    pub model_id: ModelId,
    pub description: String,
    pub dimension: usize,
    pub params: Vec<ParamValue>,
    pub observables: Vec<ObservableInfo>,
    pub known_fixed_points: Vec<KnownFixedPoint>,
    pub ground_truths: Vec<GroundTruth>,
    /// Box used by default for fixed-point searches and portraits.
    pub default_region: Vec<(f64, f64)>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ZooEntry {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn fixed_point(&self, label: &str) -> Option<&[f64]> {
        self.known_fixed_points
            .iter()
            .find(|k| k.label == label)
            .map(|k| k.location.as_slice())
    }
}

/// A built model: the map, its observables and its catalog entry.
#[derive(Clone)]
pub struct Model {
    pub entry: ZooEntry,
    pub map: MapSystem,
    observables: Vec<Observable>,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model").field("entry", &self.entry).finish()
    }
}

impl Model {
    /// Looks up an observable by name. Predator–prey also accepts `v1`/`v2`
    /// for `x`/`y`.
    pub fn observable(&self, name: &str) -> Result<Observable> {
        let name = match (self.entry.model_id, name) {
            (ModelId::StreipertPp, "v1") => "x",
            (ModelId::StreipertPp, "v2") => "y",
            _ => name,
        };
        self.observables
            .iter()
            .find(|o| o.name() == name)
            .cloned()
            .ok_or_else(|| {
                Error::Unknown(format!(
                    "observable '{name}' for model {}",
                    self.entry.model_id
                ))
            })
    }

    pub fn observables(&self) -> &[Observable] {
        &self.observables
    }
}

fn resolve_params(id: ModelId, given: &[(String, f64)]) -> Result<Vec<ParamValue>> {
    let specs = param_specs(id);
    for (name, _) in given {
        if !specs.iter().any(|s| s.name == name) {
            return Err(Error::Unknown(format!("parameter '{name}' for model {id}")));
        }
    }
    specs
        .iter()
        .map(|s| {
            let value = given
                .iter()
                .rev()
                .find(|(n, _)| n == s.name)
                .map(|(_, v)| *v)
                .unwrap_or(s.default);
            if !s.is_valid(value) {
                return Err(Error::InvalidParams {
                    name: s.name.into(),
                    value,
                    range: s.range.into(),
                });
            }
            Ok(ParamValue {
                name: s.name.into(),
                value,
                range: s.range.into(),
            })
        })
        .collect()
}

fn coordinate_observables(names: &[&str]) -> (Vec<Observable>, Vec<ObservableInfo>) {
    let n = names.len();
    let obs = names
        .iter()
        .enumerate()
        .map(|(i, name)| Observable::coordinate(*name, n, i))
        .collect();
    let info = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut c = vec![0.0; n];
            c[i] = 1.0;
            ObservableInfo {
                name: (*name).into(),
                formula: (*name).into(),
                coefficients: Some(c),
            }
        })
        .collect();
    (obs, info)
}

fn sum_observable(n: usize) -> (Observable, ObservableInfo) {
    (
        Observable::linear("sum", vec![1.0; n]),
        ObservableInfo {
            name: "sum".into(),
            formula: "sum of all coordinates".into(),
            coefficients: Some(vec![1.0; n]),
        },
    )
}

fn point_truth(
    label: &str,
    location: &[f64],
    observable: &str,
    expected: Decision,
    route: Criterion,
    reason: &str,
) -> GroundTruth {
    GroundTruth {
        label: label.into(),
        target: TruthTarget::Point(location.to_vec()),
        observable: observable.into(),
        expected,
        route,
        by_hand: false,
        reason: reason.into(),
    }
}

/// Builds a zoo model. Missing parameters take their defaults (the
/// figure parameters); unknown names are rejected.
pub fn build(id: ModelId, params: &[(String, f64)]) -> Result<Model> {
    if id == ModelId::LinearCustom {
        return build_linear_custom(linear_matrix_from_params(params)?);
    }
    let values = resolve_params(id, params)?;
    let get = |name: &str| values.iter().find(|p| p.name == name).unwrap().value;
    let pairs: Vec<(String, f64)> = values.iter().map(|p| (p.name.clone(), p.value)).collect();
    let model = match id {
        ModelId::Example1 => example1(get("h")),
        ModelId::Example2 => example2(get("a"), get("b")),
        ModelId::Cubic1d => cubic1d(),
        ModelId::StreipertPp => streipert_pp(get("r"), get("K"), get("alpha"), get("gamma"), get("d")),
        ModelId::Epidemic => epidemic(get("b"), get("p"), get("alpha")),
        ModelId::LinearCustom => unreachable!(),
    };
    let (map, observables, mut entry) = model;
    entry.params = values;
    Ok(Model {
        entry,
        map: map.with_params(pairs),
        observables,
    })
}

type Parts = (MapSystem, Vec<Observable>, ZooEntry);

fn entry(id: ModelId, dimension: usize, observables: Vec<ObservableInfo>, region: Vec<(f64, f64)>) -> ZooEntry {
    ZooEntry {
        model_id: id,
        description: id.description().into(),
        dimension,
        params: Vec::new(),
        observables,
        known_fixed_points: Vec::new(),
        ground_truths: Vec::new(),
        default_region: region,
        notes: Vec::new(),
    }
}

fn example1(h: f64) -> Parts {
    let map = MapSystem::new("example1", 2, move |x, o| {
        o[0] = x[0] * (1.0 - h * x[1]);
        o[1] = x[1] + h * (x[0] - 1.0);
    })
    .with_jacobian(move |x| DMatrix::from_row_slice(2, 2, &[1.0 - h * x[1], -h * x[0], h, 1.0]));
    let (obs, info) = coordinate_observables(&["x", "y"]);
    let mut e = entry(ModelId::Example1, 2, info, vec![(-1.0, 2.0), (-1.0, 1.0)]);
    e.known_fixed_points.push(KnownFixedPoint {
        label: "E1".into(),
        location: vec![1.0, 0.0],
    });
    let mut truth = point_truth(
        "origin",
        &[0.0, 0.0],
        "x",
        Decision::Center,
        Criterion::Empirical,
        "orbits from (eps, 0) grow in x geometrically and then drop by at least h^2(1-eps) in one step",
    );
    truth.by_hand = true;
    e.ground_truths.push(truth);
    e.notes.push(
        "the origin is not a fixed point; it lies on the x-invariant axis x = 0, where y decreases by h per step".into(),
    );
    (map, obs, e)
}

fn example2(a: f64, b: f64) -> Parts {
    let map = MapSystem::new("example2", 2, move |x, o| {
        o[0] = a * x[1] / (1.0 + x[0] * x[0]);
        o[1] = b * x[0] / (1.0 + x[1] * x[1]);
    })
    .with_jacobian(move |x| {
        let (u, w) = (x[0], x[1]);
        let du = 1.0 + u * u;
        let dw = 1.0 + w * w;
        DMatrix::from_row_slice(
            2,
            2,
            &[-2.0 * a * u * w / (du * du), a / du, b / dw, -2.0 * b * u * w / (dw * dw)],
        )
    });
    let (mut obs, mut info) = coordinate_observables(&["x", "y"]);
    let (s, si) = sum_observable(2);
    obs.push(s);
    info.push(si);
    let mut e = entry(ModelId::Example2, 2, info, vec![(-2.0, 2.0), (-2.0, 2.0)]);
    e.known_fixed_points.push(KnownFixedPoint {
        label: "origin".into(),
        location: vec![0.0, 0.0],
    });
    if a * b > 1.0 {
        e.ground_truths.push(point_truth(
            "origin",
            &[0.0, 0.0],
            "sum",
            Decision::Center,
            Criterion::PerronFrobenius,
            "Df(0) = [[0, a], [b, 0]] is nonnegative irreducible with spectral radius sqrt(ab) > 1",
        ));
    } else {
        e.notes.push("ab <= 1: no ground truth is recorded".into());
    }
    (map, obs, e)
}

fn cubic1d() -> Parts {
    let map = MapSystem::new("cubic1d", 1, |x, o| o[0] = 2.0 * x[0] + x[0].powi(3))
        .with_jacobian(|x| DMatrix::from_element(1, 1, 2.0 + 3.0 * x[0] * x[0]));
    let (mut obs, mut info) = coordinate_observables(&["x"]);
    obs.push(Observable::new("x2", |x| x[0] * x[0]).with_gradient(|x| vec![2.0 * x[0]]));
    info.push(ObservableInfo {
        name: "x2".into(),
        formula: "x^2".into(),
        coefficients: None,
    });
    let mut e = entry(ModelId::Cubic1d, 1, info, vec![(-1.0, 1.0)]);
    e.known_fixed_points.push(KnownFixedPoint {
        label: "origin".into(),
        location: vec![0.0],
    });
    e.ground_truths.push(point_truth(
        "origin",
        &[0.0],
        "x2",
        Decision::Center,
        Criterion::HessianFlatness,
        "grad of delta v vanishes at 0 and its Hessian is [6]; f'(0) = 2",
    ));
    (map, obs, e)
}

fn linear_matrix_from_params(params: &[(String, f64)]) -> Result<DMatrix<f64>> {
    if params.is_empty() {
        let m = LINEAR_DEFAULT;
        return Ok(DMatrix::from_fn(2, 2, |i, j| m[i][j]));
    }
    let mut entries = Vec::new();
    for (name, value) in params {
        let idx = name
            .strip_prefix('a')
            .filter(|rest| rest.len() == 2 && rest.chars().all(|c| ('1'..='9').contains(&c)))
            .map(|rest| {
                let b = rest.as_bytes();
                ((b[0] - b'1') as usize, (b[1] - b'1') as usize)
            })
            .ok_or_else(|| {
                Error::Unknown(format!(
                    "parameter '{name}' for model linear_custom (expected a<i><j>)"
                ))
            })?;
        if !value.is_finite() {
            return Err(Error::InvalidParams {
                name: name.clone(),
                value: *value,
                range: "finite".into(),
            });
        }
        entries.push((idx, *value));
    }
    let n = entries.iter().map(|((i, j), _)| i.max(j) + 1).max().unwrap_or(0);
    if entries.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "linear_custom needs all {} entries a11..a{n}{n}",
            n * n
        )));
    }
    let mut m = DMatrix::zeros(n, n);
    for ((i, j), v) in entries {
        m[(i, j)] = v;
    }
    Ok(m)
}

/// `x ↦ Ax` for a square matrix of dimension 1..=9.
pub fn build_linear_custom(matrix: DMatrix<f64>) -> Result<Model> {
    let n = matrix.nrows();
    if n == 0 || n > 9 || matrix.ncols() != n {
        return Err(Error::InvalidArgument(
            "linear_custom needs a square matrix of size 1..9".into(),
        ));
    }
    let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let (mut obs, mut info) = coordinate_observables(&name_refs);
    let (s, si) = sum_observable(n);
    obs.push(s);
    info.push(si);
    let mut params = Vec::new();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let name = format!("a{}{}", i + 1, j + 1);
            pairs.push((name.clone(), matrix[(i, j)]));
            params.push(ParamValue {
                name,
                value: matrix[(i, j)],
                range: "finite".into(),
            });
        }
    }
    let mut e = entry(ModelId::LinearCustom, n, info, vec![(-1.0, 1.0); n]);
    e.params = params;
    e.known_fixed_points.push(KnownFixedPoint {
        label: "origin".into(),
        location: vec![0.0; n],
    });
    if n >= 2 && linalg::nonneg_irreducible(&matrix) {
        if let Ok(rho) = linalg::spectral_radius(&matrix) {
            if rho > 1.0 + 1e-6 {
                e.ground_truths.push(point_truth(
                    "origin",
                    &vec![0.0; n],
                    "sum",
                    Decision::Center,
                    Criterion::PerronFrobenius,
                    "A is nonnegative irreducible with spectral radius above one",
                ));
            }
        }
    }
    let map = MapSystem::linear("linear_custom", matrix)?.with_params(pairs);
    Ok(Model {
        entry: e,
        map,
        observables: obs,
    })
}

fn streipert_pp(r: f64, k: f64, alpha: f64, gamma: f64, d: f64) -> Parts {
    let map = MapSystem::new("streipert_pp", 2, move |x, o| {
        o[0] = (1.0 + r) * x[0] / (1.0 + (r / k) * x[0] + alpha * x[1]);
        o[1] = (1.0 + gamma * x[0]) * x[1] / (1.0 + d);
    })
    .with_jacobian(move |x| {
        let den = 1.0 + (r / k) * x[0] + alpha * x[1];
        let den2 = den * den;
        DMatrix::from_row_slice(
            2,
            2,
            &[
                (1.0 + r) * (1.0 + alpha * x[1]) / den2,
                -(1.0 + r) * alpha * x[0] / den2,
                gamma * x[1] / (1.0 + d),
                (1.0 + gamma * x[0]) / (1.0 + d),
            ],
        )
    })
    .with_domain(DomainBox::nonnegative(2, DEFAULT_DOMAIN_HALF_WIDTH));
    let (obs, info) = coordinate_observables(&["x", "y"]);
    let dd = d / gamma;
    let n_of = |x: f64| (r / alpha) * (1.0 - x / k);
    let mut e = entry(
        ModelId::StreipertPp,
        2,
        info,
        vec![(0.0, 1.2 * k), (0.0, 0.8 * (r / alpha).max(dd))],
    );
    e.known_fixed_points.push(KnownFixedPoint {
        label: "E0".into(),
        location: vec![0.0, 0.0],
    });
    e.known_fixed_points.push(KnownFixedPoint {
        label: "EK".into(),
        location: vec![k, 0.0],
    });
    if dd < k {
        e.known_fixed_points.push(KnownFixedPoint {
            label: "Estar".into(),
            location: vec![dd, n_of(dd)],
        });
    }
    e.ground_truths.push(point_truth(
        "E0",
        &[0.0, 0.0],
        "x",
        Decision::Center,
        Criterion::GradientEigvecH2,
        "eigenvalues 1+r > 1 and 1/(1+d) at E0; the prey direction (1,0) is unstable",
    ));
    let mut e0_y = point_truth(
        "E0",
        &[0.0, 0.0],
        "y",
        Decision::Center,
        Criterion::Empirical,
        "prey recovers to near K, then predators grow while x > d/gamma",
    );
    e0_y.by_hand = true;
    e.ground_truths.push(e0_y);
    if d < gamma * k {
        let why = "eigenvalues 1/(1+r) and (1+gamma K)/(1+d) > 1 at E_K";
        e.ground_truths.push(point_truth(
            "EK",
            &[k, 0.0],
            "y",
            Decision::Center,
            Criterion::GradientEigvecH2,
            why,
        ));
        e.ground_truths.push(point_truth(
            "EK",
            &[k, 0.0],
            "x",
            Decision::Center,
            Criterion::GradientEigvecH2,
            why,
        ));
        e.ground_truths.push(GroundTruth {
            label: "prey_axis".into(),
            target: TruthTarget::Segment {
                from: vec![0.0, 0.0],
                to: vec![2.0 * k, 0.0],
            },
            observable: "y".into(),
            expected: Decision::Center,
            route: Criterion::Empirical,
            by_hand: true,
            reason: "every prey-only state relaxes to K, where predators invade".into(),
        });
    } else {
        e.notes.push("d >= gamma K: E_K is not unstable in y; no prey-axis ground truth".into());
    }
    (map, obs, e)
}

fn epidemic(b: f64, p: f64, alpha: f64) -> Parts {
    let map = MapSystem::new("epidemic", 2, move |x, o| {
        o[0] = (1.0 - p) * x[0] - alpha * x[0] * x[1] + b;
        o[1] = alpha * x[0] * x[1];
    })
    .with_jacobian(move |x| {
        DMatrix::from_row_slice(
            2,
            2,
            &[1.0 - p - alpha * x[1], -alpha * x[0], alpha * x[1], alpha * x[0]],
        )
    })
    .with_domain(DomainBox::nonnegative(2, DEFAULT_DOMAIN_HALF_WIDTH));
    let (obs, info) = coordinate_observables(&["S", "I"]);
    let s_max = if p > 0.0 { 1.3 * b / p } else { 4.0 / alpha };
    let mut e = entry(ModelId::Epidemic, 2, info, vec![(0.0, s_max), (0.0, 0.02 * s_max)]);
    let e_star_loc = if p > 0.0 {
        let s0 = b / p;
        let r0 = alpha * b / p;
        e.known_fixed_points.push(KnownFixedPoint {
            label: "E0".into(),
            location: vec![s0, 0.0],
        });
        if r0 > 1.0 {
            e.ground_truths.push(point_truth(
                "E0",
                &[s0, 0.0],
                "I",
                Decision::Center,
                Criterion::GradientEigvecH2,
                "eigenvalues R0 = alpha b / p > 1 and 1 - p at E0",
            ));
        } else if r0 < 1.0 {
            e.ground_truths.push(point_truth(
                "E0",
                &[s0, 0.0],
                "I",
                Decision::NotCenter,
                Criterion::StableExclusion,
                "eigenvalues R0 < 1 and 1 - p < 1 at E0",
            ));
        }
        e.ground_truths.push(GroundTruth {
            label: "susceptible_axis".into(),
            target: TruthTarget::Segment {
                from: vec![0.5 * s0, 0.0],
                to: vec![1.5 * s0, 0.0],
            },
            observable: "I".into(),
            expected: if r0 > 1.0 {
                Decision::Center
            } else {
                Decision::Inconclusive
            },
            route: Criterion::Empirical,
            by_hand: true,
            reason: "infection-free states relax to E0, where a small infection grows by R0 per step"
                .into(),
        });
        (r0 > 1.0).then(|| vec![1.0 / alpha, (p / alpha) * (r0 - 1.0)])
    } else {
        e.notes.push("p = 0: there is no infection-free equilibrium".into());
        Some(vec![1.0 / alpha, b])
    };
    if let Some(loc) = e_star_loc {
        let jac = map.analytic_jacobian(&loc).expect("analytic Jacobian");
        let stable = linalg::spectral_radius(&jac).is_ok_and(|rho| rho < 1.0 - 1e-6);
        e.known_fixed_points.push(KnownFixedPoint {
            label: "Estar".into(),
            location: loc.clone(),
        });
        if stable {
            e.ground_truths.push(point_truth(
                "Estar",
                &loc,
                "I",
                Decision::NotCenter,
                Criterion::StableExclusion,
                "the endemic equilibrium has spectral radius below one",
            ));
        }
    }
    e.notes.push(
        "reduced two-dimensional system; the recovered class is recovered from the conserved total".into(),
    );
    (map, obs, e)
}

/// One step of the full susceptible–infected–removed system whose first
/// two components are the zoo's epidemic model. Vaccinated and recovered
/// individuals enter `R`, and `R` supplies the `b` new susceptibles, so the
/// total `S + I + R` is conserved.
pub fn epidemic_full_step(b: f64, p: f64, alpha: f64, sir: [f64; 3]) -> [f64; 3] {
    let [s, i, r] = sir;
    let next_s = (1.0 - p) * s - alpha * s * i + b;
    let next_i = alpha * s * i;
    let next_r = r + p * s + i - b;
    [next_s, next_i, next_r]
}

/// `N(t+1) − N(t)` for one full step, zero by construction.
pub fn epidemic_total_change(b: f64, p: f64, alpha: f64, sir: [f64; 3]) -> f64 {
    let next = epidemic_full_step(b, p, alpha, sir);
    next.iter().sum::<f64>() - sir.iter().sum::<f64>()
}

/// Closed-form summary quantities: `D = d/γ` for predator–prey,
/// `R0 = αb/p` for the epidemic model (omitted when `p = 0`).
pub fn derived_quantities(entry: &ZooEntry) -> Vec<(String, f64)> {
    let get = |name| entry.param(name).unwrap_or(f64::NAN);
    match entry.model_id {
        ModelId::StreipertPp => vec![("D".into(), get("d") / get("gamma"))],
        ModelId::Epidemic if get("p") > 0.0 => {
            vec![("R0".into(), get("alpha") * get("b") / get("p"))]
        }
        _ => Vec::new(),
    }
}

/// A point with the observable and verdict it must receive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expectation {
    pub label: String,
    pub point: Vec<f64>,
    pub observable: String,
    pub expected: Decision,
    pub route: Criterion,
    pub by_hand: bool,
}

/// Points sampled per segment ground truth (endpoints included).
pub const SEGMENT_SAMPLES: usize = 5;

/// Expands ground truths into point expectations; segments are sampled at
/// [`SEGMENT_SAMPLES`] evenly spaced points.
pub fn ground_truth_suite(entry: &ZooEntry) -> Vec<Expectation> {
    let mut out = Vec::new();
    for gt in &entry.ground_truths {
        let points: Vec<Vec<f64>> = match &gt.target {
            TruthTarget::Point(p) => vec![p.clone()],
            TruthTarget::Segment { from, to } => (0..SEGMENT_SAMPLES)
                .map(|k| {
                    let t = k as f64 / (SEGMENT_SAMPLES - 1) as f64;
                    from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
                })
                .collect(),
        };
        for (k, point) in points.into_iter().enumerate() {
            let label = match gt.target {
                TruthTarget::Point(_) => gt.label.clone(),
                TruthTarget::Segment { .. } => format!("{}[{k}]", gt.label),
            };
            out.push(Expectation {
                label,
                point,
                observable: gt.observable.clone(),
                expected: gt.expected,
                route: gt.route,
                by_hand: gt.by_hand,
            });
        }
    }
    out
}

/// Parameters and initial states reproducing a published figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub model: ModelId,
    pub params: Vec<(String, f64)>,
    pub observable: String,
    pub initial_states: Vec<Vec<f64>>,
    pub steps: usize,
    /// Threshold line drawn on time-series plots.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub const PRESET_NAMES: [&str; 4] = ["fig2", "fig3", "fig4", "fig6"];

pub fn preset(name: &str) -> Result<Preset> {
    let owned = |v: &[(&str, f64)]| v.iter().map(|(n, x)| (n.to_string(), *x)).collect();
    Ok(match name {
        "fig2" => Preset {
            name: name.into(),
            model: ModelId::Example1,
            params: owned(&[("h", 0.1)]),
            observable: "x".into(),
            initial_states: vec![vec![1e-3, 0.0]],
            steps: 60,
            threshold: Some(0.005),
            note: None,
        },
        "fig3" => {
            let (a, b) = (1.5, 1.3);
            // unit Perron vector of [[0, a], [b, 0]]
            let len = f64::sqrt(a + b);
            let w = [a.sqrt() / len, b.sqrt() / len];
            Preset {
                name: name.into(),
                model: ModelId::Example2,
                params: owned(&[("a", a), ("b", b)]),
                observable: "sum".into(),
                initial_states: [1e-2, 1e-3, 1e-4]
                    .iter()
                    .map(|eps| vec![eps * w[0], eps * w[1]])
                    .collect(),
                steps: 40,
                threshold: None,
                note: Some("initial states along the Perron direction at distances 1e-2, 1e-3, 1e-4".into()),
            }
        }
        "fig4" => Preset {
            name: name.into(),
            model: ModelId::StreipertPp,
            params: owned(&[("r", 0.5), ("K", 1.0), ("alpha", 1.0), ("gamma", 4.0), ("d", 1.0)]),
            observable: "y".into(),
            initial_states: vec![vec![1e-3, 1e-4], vec![1e-2, 1e-4], vec![1e-1, 1e-4]],
            steps: 100,
            threshold: None,
            note: Some(
                "initial prey values 1e-3, 1e-2, 1e-1 are a reconstruction; only y0 = 1e-4 is published".into(),
            ),
        },
        "fig6" => Preset {
            name: name.into(),
            model: ModelId::Epidemic,
            params: owned(&[("b", 115.0), ("p", 0.003), ("alpha", 4e-5)]),
            observable: "I".into(),
            initial_states: vec![vec![2.4e4, 250.0]],
            steps: 1000,
            threshold: None,
            note: None,
        },
        _ => return Err(Error::Unknown(format!("preset '{name}'"))),
    })
}

/// One line of `zoo list`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub id: ModelId,
    pub description: String,
    pub params: Vec<ParamValue>,
}

pub fn catalog() -> Vec<CatalogItem> {
    ModelId::ALL
        .into_iter()
        .map(|id| CatalogItem {
            id,
            description: id.description().into(),
            params: if id == ModelId::LinearCustom {
                let m = LINEAR_DEFAULT;
                (0..2)
                    .flat_map(|i| (0..2).map(move |j| (i, j)))
                    .map(|(i, j)| ParamValue {
                        name: format!("a{}{}", i + 1, j + 1),
                        value: m[i][j],
                        range: "finite".into(),
                    })
                    .collect()
            } else {
                param_specs(id)
                    .into_iter()
                    .map(|s| ParamValue {
                        name: s.name.into(),
                        value: s.default,
                        range: s.range.into(),
                    })
                    .collect()
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
        pairs.iter().map(|(n, v)| (n.to_string(), *v)).collect()
    }

    #[test]
    fn ids_round_trip() {
        for id in ModelId::ALL {
            assert_eq!(id.as_str().parse::<ModelId>().unwrap(), id);
        }
        assert!("nope".parse::<ModelId>().is_err());
    }

    #[test]
    fn known_fixed_points_are_fixed() {
        for id in ModelId::ALL {
            let m = build(id, &[]).unwrap();
            for k in &m.entry.known_fixed_points {
                let fx = m.map.eval_finite(&k.location).unwrap();
                let res: f64 = fx
                    .iter()
                    .zip(&k.location)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let scale = 1.0 + k.location.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(res <= 1e-12 * scale, "{id} {}: {res}", k.label);
            }
        }
    }

    #[test]
    fn parameter_ranges_enforced() {
        let err = build(ModelId::Epidemic, &p(&[("p", 1.0)])).unwrap_err();
        assert!(matches!(err, Error::InvalidParams { ref name, .. } if name == "p"));
        assert!(build(ModelId::StreipertPp, &p(&[("d", 0.0)])).is_err());
        assert!(build(ModelId::Example1, &p(&[("h", 1.5)])).is_err());
        assert!(matches!(
            build(ModelId::Example1, &p(&[("hh", 0.1)])),
            Err(Error::Unknown(_))
        ));
        assert!(build(ModelId::Epidemic, &p(&[("p", 0.0)])).is_ok());
    }

    #[test]
    fn example2_without_ab_gt_one_has_no_truths() {
        let m = build(ModelId::Example2, &p(&[("a", 0.5), ("b", 1.0)])).unwrap();
        assert!(m.entry.ground_truths.is_empty());
        let m = build(ModelId::Example2, &[]).unwrap();
        assert_eq!(m.entry.ground_truths.len(), 1);
    }

    #[test]
    fn predator_prey_truths_depend_on_d() {
        let m = build(ModelId::StreipertPp, &[]).unwrap();
        assert_eq!(m.entry.fixed_point("Estar").unwrap(), &[0.25, 0.375]);
        assert!(m.entry.ground_truths.iter().any(|g| g.label == "EK"));
        let m = build(ModelId::StreipertPp, &p(&[("d", 4.5)])).unwrap();
        assert!(!m.entry.ground_truths.iter().any(|g| g.label == "EK"));
        assert!(m.observable("v2").is_ok());
    }

    #[test]
    fn epidemic_fixed_points() {
        let m = build(ModelId::Epidemic, &[]).unwrap();
        let e0 = m.entry.fixed_point("E0").unwrap();
        assert!((e0[0] - 115.0 / 0.003).abs() < 1e-9);
        let es = m.entry.fixed_point("Estar").unwrap();
        assert!((es[0] - 25_000.0).abs() < 1e-9);
        assert!(m
            .entry
            .ground_truths
            .iter()
            .any(|g| g.label == "Estar" && g.expected == Decision::NotCenter));
    }

    #[test]
    fn linear_custom_from_params() {
        let m = build(
            ModelId::LinearCustom,
            &p(&[("a11", 0.0), ("a12", 2.0), ("a21", 3.0), ("a22", 0.0)]),
        )
        .unwrap();
        assert!(m.map.is_linear());
        assert_eq!(m.entry.ground_truths.len(), 1);
        assert!(build(ModelId::LinearCustom, &p(&[("a11", 1.0), ("a12", 2.0)])).is_err());
        assert!(build(ModelId::LinearCustom, &p(&[("b11", 1.0)])).is_err());
        let default = build(ModelId::LinearCustom, &[]).unwrap();
        assert_eq!(default.map.linear_matrix().unwrap()[(1, 0)], 1.3);
    }

    #[test]
    fn conservation_of_full_epidemic() {
        let sir = [2.4e4, 250.0, 1e4];
        let change = epidemic_total_change(115.0, 0.003, 4e-5, sir);
        assert!(change.abs() <= 1e-9 * sir.iter().sum::<f64>());
        let next = epidemic_full_step(115.0, 0.003, 4e-5, sir);
        let reduced = build(ModelId::Epidemic, &[]).unwrap();
        let step = reduced.map.step(&sir[..2]).unwrap();
        assert_eq!(step, next[..2].to_vec());
    }

    #[test]
    fn suite_expands_segments() {
        let m = build(ModelId::StreipertPp, &[]).unwrap();
        let suite = ground_truth_suite(&m.entry);
        assert_eq!(
            suite.iter().filter(|e| e.label.starts_with("prey_axis")).count(),
            SEGMENT_SAMPLES
        );
    }

    #[test]
    fn presets_build() {
        for name in PRESET_NAMES {
            let pr = preset(name).unwrap();
            let m = build(pr.model, &pr.params).unwrap();
            assert!(m.observable(&pr.observable).is_ok());
            for x in &pr.initial_states {
                assert!(m.map.domain().contains(x));
            }
        }
        assert!(preset("fig9").is_err());
    }

    #[test]
    fn derived_values() {
        let m = build(ModelId::Epidemic, &[]).unwrap();
        let r0 = derived_quantities(&m.entry)[0].1;
        assert!((r0 - 4e-5 * 115.0 / 0.003).abs() < 1e-12);
        let m = build(ModelId::StreipertPp, &[]).unwrap();
        assert_eq!(derived_quantities(&m.entry), vec![("D".to_string(), 0.25)]);
    }

    #[test]
    fn catalog_lists_every_model() {
        assert_eq!(catalog().len(), 6);
    }
}
