//! Run configuration: a strict TOML schema plus built-in figure presets.
//!
//! Unknown keys are rejected everywhere so that a typo cannot silently fall
//! back to a default.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use transient_core::dynamics::Observable;
use transient_core::zoo::{self, Model, ModelId};

use crate::error::{config_err, CliError, CliResult};

/// Observable by zoo name, or linear coefficients `cᵀx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Name(String),
    Coefficients(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    /// One trajectory per initial state.
    pub initial: Vec<Vec<f64>>,
    pub steps: usize,
    /// Horizontal rule on the |Δv| plot, plus the transient-time marker.
    pub threshold: Option<f64>,
    #[serde(default = "yes")]
    pub plot: bool,
    pub observable: Option<ObservableSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransientTimeBlock {
    pub initial: Vec<f64>,
    pub threshold: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// When set, the start is also classified as a transient point for `T`.
    pub min_time: Option<usize>,
    pub observable: Option<ObservableSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyBlock {
    /// Search box, one `[lower, upper]` per coordinate; defaults to the
    /// model's region.
    pub region: Option<Vec<[f64; 2]>>,
    /// Newton seeds per axis.
    pub grid: Option<Vec<usize>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Run the empirical fallback when the analytic criteria are silent.
    #[serde(default = "yes")]
    pub empirical: bool,
    pub radii: Option<Vec<f64>>,
    pub horizon: Option<usize>,
    pub samples: Option<usize>,
    pub observable: Option<ObservableSpec>,
}

impl Default for ClassifyBlock {
    fn default() -> Self {
        Self {
            region: None,
            grid: None,
            tol: default_tol(),
            empirical: true,
            radii: None,
            horizon: None,
            samples: None,
            observable: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchBlock {
    EscapeProfile {
        candidate: Vec<f64>,
        radii: Option<Vec<f64>>,
        horizon: Option<usize>,
        samples: Option<usize>,
        observable: Option<ObservableSpec>,
    },
    TransientPoints {
        region: Vec<[f64; 2]>,
        threshold: f64,
        min_time: usize,
        #[serde(default = "default_horizon")]
        horizon: usize,
        budget: usize,
        observable: Option<ObservableSpec>,
    },
    Honeymoon {
        candidate: Vec<f64>,
        direction: Vec<f64>,
        epsilons: Vec<f64>,
        threshold: f64,
        #[serde(default = "default_horizon")]
        horizon: usize,
        observable: Option<ObservableSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortraitBlock {
    pub region: Option<[[f64; 2]; 2]>,
    /// Contour grid nodes.
    pub grid: Option<[usize; 2]>,
    /// Sign-field cells.
    pub sign_grid: Option<[usize; 2]>,
    /// Direction-field nodes.
    pub arrow_grid: Option<[usize; 2]>,
    /// Mark the model's known fixed points.
    #[serde(default = "yes")]
    pub fixed_points: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub count: Option<usize>,
}

impl SweepAxis {
    /// Explicit values, or `count` evenly spaced points from `start` to
    /// `stop` inclusive.
    pub fn points(&self) -> CliResult<Vec<f64>> {
        match (&self.values, self.start, self.stop, self.count) {
            (Some(v), None, None, None) => Ok(v.clone()),
            (None, Some(a), Some(b), Some(n)) => Ok(match n {
                0 => Vec::new(),
                1 => vec![a],
                _ => (0..n)
                    .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
                    .collect(),
            }),
            _ => config_err(format!(
                "sweep axis '{}' needs either `values` or all of `start`, `stop`, `count`",
                self.name
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTask {
    Classify,
    TransientTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub axes: Vec<SweepAxis>,
    pub task: SweepTask,
    /// Known fixed point label (classify task).
    pub fixed_point: Option<String>,
    /// Empirical fallback inside sweeps (off by default: analytic only).
    #[serde(default)]
    pub empirical: bool,
    /// Start state (transient_time task).
    pub initial: Option<Vec<f64>>,
    pub threshold: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    pub observable: Option<ObservableSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub observable: Option<ObservableSpec>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub simulate: Option<SimulateBlock>,
    pub transient_time: Option<TransientTimeBlock>,
    pub classify: Option<ClassifyBlock>,
    pub search: Option<SearchBlock>,
    pub portrait: Option<PortraitBlock>,
    pub sweep: Option<SweepBlock>,
}

fn yes() -> bool {
    true
}

fn default_horizon() -> usize {
    100_000
}

fn default_tol() -> f64 {
    1e-12
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn model_id(&self) -> CliResult<ModelId> {
        self.model
            .parse()
            .map_err(|_| CliError::Config(format!("unknown model '{}'", self.model)))
    }

    /// Builds the zoo model; invalid parameters are config errors.
    pub fn build_model(&self) -> CliResult<Model> {
        let params: Vec<(String, f64)> = self.params.iter().map(|(k, v)| (k.clone(), *v)).collect();
        zoo::build(self.model_id()?, &params).map_err(|e| CliError::Config(e.to_string()))
    }

    /// The block-level observable if given, else the top-level one, else
    /// the model's first observable.
    pub fn observable(&self, model: &Model, block: Option<&ObservableSpec>) -> CliResult<Observable> {
        match block.or(self.observable.as_ref()) {
            Some(ObservableSpec::Name(name)) => model
                .observable(name)
                .map_err(|e| CliError::Config(e.to_string())),
            Some(ObservableSpec::Coefficients(c)) => {
                if c.len() != model.map.dim() {
                    return config_err(format!(
                        "observable has {} coefficients, model dimension is {}",
                        c.len(),
                        model.map.dim()
                    ));
                }
                if c.iter().any(|x| !x.is_finite()) {
                    return config_err("observable coefficients must be finite");
                }
                Ok(Observable::linear("custom", c.clone()))
            }
            None => Ok(model.observables()[0].clone()),
        }
    }

    /// Built-in configuration for a named figure.
    pub fn preset(name: &str) -> CliResult<Self> {
        let base = |model: ModelId, params: &[(&str, f64)], observable: &str| RunConfig {
            model: model.as_str().into(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            observable: Some(ObservableSpec::Name(observable.into())),
            seed: None,
            output_dir: None,
            simulate: None,
            transient_time: None,
            classify: None,
            search: None,
            portrait: None,
            sweep: None,
        };
        let from_zoo = |name: &str| -> CliResult<RunConfig> {
            let p = zoo::preset(name).map_err(|e| CliError::Config(e.to_string()))?;
            let params: Vec<(&str, f64)> = p.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
            let mut cfg = base(p.model, &params, &p.observable);
            cfg.simulate = Some(SimulateBlock {
                initial: p.initial_states.clone(),
                steps: p.steps,
                threshold: p.threshold,
                plot: true,
                observable: None,
            });
            cfg.classify = Some(ClassifyBlock::default());
            Ok(cfg)
        };
        let pp_params = [("r", 0.5), ("K", 1.0), ("alpha", 1.0), ("gamma", 4.0), ("d", 1.0)];
        match name {
            "fig2" => {
                let mut cfg = from_zoo(name)?;
                cfg.transient_time = Some(TransientTimeBlock {
                    initial: vec![1e-3, 0.0],
                    threshold: 0.005,
                    horizon: default_horizon(),
                    min_time: None,
                    observable: None,
                });
                cfg.search = Some(SearchBlock::Honeymoon {
                    candidate: vec![0.0, 0.0],
                    direction: vec![1.0, 0.0],
                    epsilons: vec![1e-2, 1e-3, 1e-4],
                    threshold: 0.005,
                    horizon: default_horizon(),
                    observable: None,
                });
                Ok(cfg)
            }
            "fig3" => from_zoo(name),
            "fig4" => {
                let mut cfg = from_zoo(name)?;
                cfg.observable = Some(ObservableSpec::Name("x".into()));
                if let Some(sim) = cfg.simulate.as_mut() {
                    sim.observable = Some(ObservableSpec::Name("y".into()));
                }
                cfg.search = Some(SearchBlock::EscapeProfile {
                    candidate: vec![0.1, 0.0],
                    radii: None,
                    horizon: None,
                    samples: None,
                    observable: Some(ObservableSpec::Name("y".into())),
                });
                Ok(cfg)
            }
            "fig6" => {
                let mut cfg = from_zoo(name)?;
                cfg.search = Some(SearchBlock::Honeymoon {
                    candidate: vec![2.4e4, 0.0],
                    direction: vec![0.0, 1.0],
                    epsilons: vec![1e-2, 1e-3, 1e-4],
                    threshold: EPIDEMIC_HONEYMOON_THRESHOLD,
                    horizon: default_horizon(),
                    observable: None,
                });
                Ok(cfg)
            }
            "fig4b" => {
                let mut cfg = base(ModelId::StreipertPp, &pp_params, "x");
                cfg.portrait = Some(PortraitBlock {
                    region: Some([[0.0, 1.2], [0.0, 0.8]]),
                    grid: None,
                    sign_grid: None,
                    arrow_grid: None,
                    fixed_points: true,
                });
                Ok(cfg)
            }
            "fig7a" => {
                let mut cfg = base(
                    ModelId::Epidemic,
                    &[("p", 0.3), ("alpha", 0.8), ("b", 1.0)],
                    "I",
                );
                cfg.portrait = Some(PortraitBlock {
                    region: Some([[0.0, 5.0], [0.0, 3.0]]),
                    grid: None,
                    sign_grid: None,
                    arrow_grid: None,
                    fixed_points: true,
                });
                Ok(cfg)
            }
            _ => config_err(format!(
                "unknown preset '{name}' (available: {})",
                PRESETS.join(", ")
            )),
        }
    }
}

pub const PRESETS: [&str; 6] = ["fig2", "fig3", "fig4", "fig6", "fig4b", "fig7a"];

/// Half the first-outbreak peak of `|ΔI|` along the orbit of
/// `(2.4e4, 1e-2)` at the fig6 parameters.
pub const EPIDEMIC_HONEYMOON_THRESHOLD: f64 = 10.32062921740686;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::parse("model = \"example1\"\nsteps = 3\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = RunConfig::parse("model = \"example1\"\n[simulate]\ninitial=[[0.0,0.0]]\nsteps=3\nstep=4\n")
            .unwrap_err();
        assert!(err.to_string().contains("step"));
    }

    #[test]
    fn search_mode_is_tagged() {
        let cfg = RunConfig::parse(
            "model = \"example1\"\n[search]\nmode = \"escape_profile\"\ncandidate = [0.0, 0.0]\n",
        )
        .unwrap();
        assert!(matches!(cfg.search, Some(SearchBlock::EscapeProfile { .. })));
        assert!(RunConfig::parse(
            "model = \"example1\"\n[search]\nmode = \"escape_profile\"\ncandidate = [0.0, 0.0]\nradius = 1\n"
        )
        .is_err());
    }

    #[test]
    fn observables_resolve() {
        let cfg = RunConfig::parse("model = \"example2\"\nobservable = [1.0, 1.0]\n").unwrap();
        let model = cfg.build_model().unwrap();
        let v = cfg.observable(&model, None).unwrap();
        assert_eq!(v.value(&[2.0, 3.0]), 5.0);
        let cfg = RunConfig::parse("model = \"example2\"\nobservable = [1.0]\n").unwrap();
        assert!(cfg.observable(&model, None).is_err());
    }

    #[test]
    fn invalid_params_are_config_errors() {
        let cfg = RunConfig::parse("model = \"epidemic\"\n[params]\np = 2.0\n").unwrap();
        assert_eq!(cfg.build_model().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn axis_points() {
        let axis = SweepAxis {
            name: "d".into(),
            values: None,
            start: Some(0.5),
            stop: Some(4.5),
            count: Some(41),
        };
        let pts = axis.points().unwrap();
        assert_eq!(pts.len(), 41);
        assert_eq!(pts[40], 4.5);
    }

    #[test]
    fn every_preset_builds() {
        for name in PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            cfg.build_model().unwrap();
        }
        assert!(RunConfig::preset("fig5").is_err());
    }
}
