//! Parameter sweeps: a Cartesian grid of parameter values, one task per
//! cell, rows emitted in grid order regardless of scheduling.

use rayon::prelude::*;
use transient_core::criteria::{classify, ClassifyOptions, FixedPoint};
use transient_core::dynamics::transient_time;
use transient_core::empirical::EmpiricalOptions;
use transient_core::io::fmt_f64;
use transient_core::zoo::{self, derived_quantities};

use crate::config::{RunConfig, SweepBlock, SweepTask};
use crate::error::{config_err, CliError, CliResult};

/// Grid cells in row-major order (first axis slowest).
pub fn grid_cells(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if axes.is_empty() || axes.iter().any(Vec::is_empty) {
        return Vec::new();
    }
    let total: usize = axes.iter().map(Vec::len).product();
    (0..total)
        .map(|mut k| {
            let mut cell = vec![0.0; axes.len()];
            for (a, axis) in axes.iter().enumerate().rev() {
                cell[a] = axis[k % axis.len()];
                k /= axis.len();
            }
            cell
        })
        .collect()
}

fn clean(text: &str) -> String {
    text.replace([',', '\n', '\r'], ";")
}

fn result_columns(task: SweepTask) -> &'static [&'static str] {
    match task {
        SweepTask::Classify => &["status", "decision", "criterion", "spectral_radius", "stability", "detail"],
        SweepTask::TransientTime => &["status", "time", "trigger_delta", "detail"],
    }
}

struct CellOutcome {
    derived: Vec<(String, f64)>,
    results: Vec<String>,
}

fn failure(task: SweepTask, kind: &str, detail: &str) -> Vec<String> {
    let mut row = vec![kind.to_string()];
    row.resize(result_columns(task).len() - 1, String::new());
    row.push(clean(detail));
    row
}

/// Checks the sweep block against the model before any cell runs.
pub fn validate(cfg: &RunConfig, block: &SweepBlock) -> CliResult<Vec<Vec<f64>>> {
    let model = cfg.build_model()?;
    let names: Vec<&str> = zoo::param_specs(model.entry.model_id)
        .iter()
        .map(|s| s.name)
        .collect();
    let mut axes = Vec::new();
    for axis in &block.axes {
        let known = names.contains(&axis.name.as_str())
            || model.entry.params.iter().any(|p| p.name == axis.name);
        if !known {
            return config_err(format!(
                "sweep axis '{}' is not a parameter of {}",
                axis.name, cfg.model
            ));
        }
        let points = axis.points()?;
        if points.iter().any(|x| !x.is_finite()) {
            return config_err(format!("sweep axis '{}' has non-finite values", axis.name));
        }
        axes.push(points);
    }
    cfg.observable(&model, block.observable.as_ref())?;
    match block.task {
        SweepTask::Classify => {
            let label = block
                .fixed_point
                .as_deref()
                .ok_or_else(|| CliError::Config("classify sweeps need `fixed_point`".into()))?;
            let known: Vec<&str> = model
                .entry
                .known_fixed_points
                .iter()
                .map(|k| k.label.as_str())
                .collect();
            if !known.contains(&label) {
                return config_err(format!(
                    "unknown fixed point '{label}' (known at base parameters: {})",
                    known.join(", ")
                ));
            }
        }
        SweepTask::TransientTime => {
            let init = block
                .initial
                .as_ref()
                .ok_or_else(|| CliError::Config("transient_time sweeps need `initial`".into()))?;
            if init.len() != model.map.dim() {
                return config_err("`initial` has the wrong dimension");
            }
            match block.threshold {
                Some(s) if s > 0.0 && s.is_finite() => {}
                _ => return config_err("transient_time sweeps need a positive `threshold`"),
            }
            if block.horizon == 0 {
                return config_err("`horizon` must be at least 1");
            }
        }
    }
    Ok(axes)
}

fn run_cell(cfg: &RunConfig, block: &SweepBlock, values: &[f64], seed: u64) -> CellOutcome {
    let mut cell_cfg = cfg.clone();
    for (axis, v) in block.axes.iter().zip(values) {
        cell_cfg.params.insert(axis.name.clone(), *v);
    }
    let model = match cell_cfg.build_model() {
        Ok(m) => m,
        Err(e) => {
            return CellOutcome {
                derived: Vec::new(),
                results: failure(block.task, "InvalidParams", &e.to_string()),
            }
        }
    };
    let derived = derived_quantities(&model.entry);
    let v = match cell_cfg.observable(&model, block.observable.as_ref()) {
        Ok(v) => v,
        Err(e) => {
            return CellOutcome {
                derived,
                results: failure(block.task, "Config", &e.to_string()),
            }
        }
    };
    let results = match block.task {
        SweepTask::Classify => {
            let label = block.fixed_point.as_deref().unwrap_or_default();
            match model.entry.fixed_point(label) {
                None => failure(block.task, "MissingFixedPoint", label),
                Some(loc) => match FixedPoint::at(&model.map, loc) {
                    Err(e) => failure(block.task, e.kind(), &e.to_string()),
                    Ok(fp) => {
                        let opts = ClassifyOptions {
                            empirical: block.empirical.then(|| EmpiricalOptions {
                                seed,
                                ..EmpiricalOptions::default()
                            }),
                            seed,
                            ..ClassifyOptions::default()
                        };
                        let verdict = classify(&model.map, &fp, &v, &opts);
                        vec![
                            "ok".into(),
                            format!("{:?}", verdict.decision),
                            format!("{:?}", verdict.criterion),
                            fmt_f64(fp.spectral.spectral_radius),
                            format!("{:?}", fp.stability),
                            String::new(),
                        ]
                    }
                },
            }
        }
        SweepTask::TransientTime => {
            let init = block.initial.as_deref().unwrap_or_default();
            let s = block.threshold.unwrap_or(f64::NAN);
            match transient_time(&model.map, &v, init, s, block.horizon) {
                Ok(r) => vec![
                    format!("{:?}", r.status),
                    r.time.map(|t| t.to_string()).unwrap_or_default(),
                    r.trigger_delta.map(fmt_f64).unwrap_or_default(),
                    String::new(),
                ],
                Err(e) => failure(block.task, e.kind(), &e.to_string()),
            }
        }
    };
    CellOutcome { derived, results }
}

/// Runs the sweep on a pool of `jobs` workers and returns the CSV text.
pub fn run_sweep(cfg: &RunConfig, block: &SweepBlock, jobs: usize, seed: u64) -> CliResult<String> {
    let axes = validate(cfg, block)?;
    let base = cfg.build_model()?;
    let derived_names: Vec<String> = derived_quantities(&base.entry)
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let cells = grid_cells(&axes);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))?;
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        cells
            .par_iter()
            .map(|values| run_cell(cfg, block, values, seed))
            .collect()
    });

    let mut header: Vec<String> = block.axes.iter().map(|a| a.name.clone()).collect();
    header.extend(derived_names.iter().cloned());
    header.extend(result_columns(block.task).iter().map(|s| s.to_string()));
    let mut out = header.join(",");
    out.push('\n');
    for (values, outcome) in cells.iter().zip(outcomes) {
        let mut row: Vec<String> = values.iter().map(|v| fmt_f64(*v)).collect();
        for name in &derived_names {
            row.push(
                outcome
                    .derived
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| fmt_f64(*v))
                    .unwrap_or_default(),
            );
        }
        row.extend(outcome.results);
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_in_row_major_order() {
        let cells = grid_cells(&[vec![1.0, 2.0], vec![10.0, 20.0, 30.0]]);
        assert_eq!(cells.len(), 6);
        assert_eq!(cells[0], vec![1.0, 10.0]);
        assert_eq!(cells[1], vec![1.0, 20.0]);
        assert_eq!(cells[3], vec![2.0, 10.0]);
        assert!(grid_cells(&[vec![], vec![1.0]]).is_empty());
    }

    fn cfg(text: &str) -> (RunConfig, SweepBlock) {
        let cfg = RunConfig::parse(text).unwrap();
        let block = cfg.sweep.clone().unwrap();
        (cfg, block)
    }

    #[test]
    fn empty_grid_gives_header_only() {
        let (cfg, block) = cfg(
            "model = \"streipert_pp\"\nobservable = \"y\"\n[sweep]\ntask = \"classify\"\nfixed_point = \"EK\"\naxes = [{ name = \"d\", values = [] }]\n",
        );
        let csv = run_sweep(&cfg, &block, 2, 0).unwrap();
        assert_eq!(csv, "d,D,status,decision,criterion,spectral_radius,stability,detail\n");
    }

    #[test]
    fn invalid_cells_recorded_in_row() {
        let (cfg, block) = cfg(
            "model = \"streipert_pp\"\nobservable = \"y\"\n[sweep]\ntask = \"classify\"\nfixed_point = \"EK\"\naxes = [{ name = \"d\", values = [-1.0, 1.0] }]\n",
        );
        let csv = run_sweep(&cfg, &block, 2, 0).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].contains("InvalidParams"));
        assert!(lines[2].contains(",ok,Center,GradientEigvecH2,"));
    }

    #[test]
    fn unknown_axis_rejected() {
        let (cfg, block) = cfg(
            "model = \"streipert_pp\"\n[sweep]\ntask = \"classify\"\nfixed_point = \"EK\"\naxes = [{ name = \"q\", values = [1.0] }]\n",
        );
        assert_eq!(run_sweep(&cfg, &block, 1, 0).unwrap_err().exit_code(), 2);
    }
}
