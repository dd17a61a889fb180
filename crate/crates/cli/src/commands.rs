//! Subcommand implementations. Each reads its block from the run
//! configuration, writes its artifacts under the output directory and
//! returns the paths written.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use log::{info, warn};
use serde::Serialize;
use transient_core::criteria::{classify, find_fixed_points, ClassifyOptions, FixedPoint};
use transient_core::dynamics::{iterate, transient_time, TransientPointClass, TransientTimeResult};
use transient_core::empirical::{
    escape_profile, honeymoon_scaling, transient_point_search, write_scaling_csv,
    write_transient_points_csv, EmpiricalOptions,
};
use transient_core::portrait::{compute_portrait, export_portrait, PortraitGrids};
use transient_core::zoo::{self, Model, ModelId};
use transient_core::Error as CoreError;

use crate::config::{ClassifyBlock, RunConfig, SearchBlock};
use crate::error::{config_err, CliError, CliResult};
use crate::plot::{delta_chart, states_chart};
use crate::sweep::run_sweep;

/// Prints a line to stdout, ignoring a closed pipe (e.g. `| head`).
#[macro_export]
macro_rules! emit {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
}

impl Context {
    /// Command-line values win over the configuration, which wins over the
    /// built-in defaults (seed 0, directory `out`).
    pub fn resolve(cfg: &RunConfig, out: Option<PathBuf>, seed: Option<u64>, jobs: usize) -> Self {
        Self {
            out: out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out")),
            seed: seed.or(cfg.seed).unwrap_or(0),
            jobs: jobs.max(1),
        }
    }

    fn path(&self, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }

    fn create(&self, name: &str) -> CliResult<(PathBuf, BufWriter<File>)> {
        let path = self.path(name)?;
        let file = File::create(&path)?;
        Ok((path, BufWriter::new(file)))
    }
}

fn finish(path: PathBuf, mut w: BufWriter<File>) -> CliResult<PathBuf> {
    w.flush()?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn write_json<T: Serialize>(ctx: &Context, name: &str, value: &T) -> CliResult<PathBuf> {
    let (path, mut w) = ctx.create(name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    finish(path, w)
}

fn require<'a, T>(block: Option<&'a T>, name: &str) -> CliResult<&'a T> {
    block.ok_or_else(|| CliError::Config(format!("configuration has no [{name}] block")))
}

/// Rejects states of the wrong dimension or outside the model's domain.
fn check_initial(model: &Model, x: &[f64], what: &str) -> CliResult<()> {
    if x.len() != model.map.dim() {
        return config_err(format!(
            "{what} has dimension {}, model dimension is {}",
            x.len(),
            model.map.dim()
        ));
    }
    if x.iter().any(|c| !c.is_finite()) || !model.map.domain().contains(x) {
        return config_err(format!("{what} {x:?} lies outside the model domain"));
    }
    Ok(())
}

fn check_threshold(s: f64) -> CliResult<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        config_err(format!("threshold must be positive and finite, got {s}"))
    }
}

pub fn simulate(cfg: &RunConfig, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let block = require(cfg.simulate.as_ref(), "simulate")?;
    let model = cfg.build_model()?;
    let v = cfg.observable(&model, block.observable.as_ref())?;
    if block.steps == 0 {
        return config_err("`steps` must be at least 1");
    }
    if block.initial.is_empty() {
        return config_err("`initial` lists no states");
    }
    if let Some(s) = block.threshold {
        check_threshold(s)?;
    }
    for (k, x) in block.initial.iter().enumerate() {
        check_initial(&model, x, &format!("initial state {}", k + 1))?;
    }

    let multiple = block.initial.len() > 1;
    let mut written = Vec::new();
    let mut runs = Vec::new();
    let mut halt: Option<CoreError> = None;
    for (k, x) in block.initial.iter().enumerate() {
        let name = if multiple {
            format!("traj_{}.csv", k + 1)
        } else {
            "traj.csv".to_string()
        };
        let traj = match iterate(&model.map, x, block.steps, &v) {
            Ok(traj) => traj,
            Err(halted) => {
                warn!("run {} halted: {halted}", k + 1);
                halt.get_or_insert(halted.cause);
                halted.partial
            }
        };
        let (path, mut w) = ctx.create(&name)?;
        traj.write_csv(&mut w)?;
        written.push(finish(path, w)?);
        runs.push(traj);
    }
    if block.plot {
        let title = format!("{} orbit", model.entry.model_id);
        let (path, mut w) = ctx.create("states.svg")?;
        w.write_all(states_chart(&title, &runs).render().as_bytes())?;
        written.push(finish(path, w)?);
        let (path, mut w) = ctx.create("delta.svg")?;
        let chart = delta_chart(&format!("{title}: increments of {}", v.name()), v.name(), &runs, block.threshold);
        w.write_all(chart.render().as_bytes())?;
        written.push(finish(path, w)?);
    }
    match halt {
        Some(cause) => Err(cause.into()),
        None => Ok(written),
    }
}

#[derive(Serialize)]
struct TransientTimeReport<'a> {
    model: ModelId,
    observable: &'a str,
    initial: &'a [f64],
    #[serde(flatten)]
    result: &'a TransientTimeResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_time: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    classification: Option<TransientPointClass>,
}

pub fn transient_time_cmd(cfg: &RunConfig, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let block = require(cfg.transient_time.as_ref(), "transient_time")?;
    let model = cfg.build_model()?;
    let v = cfg.observable(&model, block.observable.as_ref())?;
    check_initial(&model, &block.initial, "initial state")?;
    check_threshold(block.threshold)?;
    if block.horizon == 0 {
        return config_err("`horizon` must be at least 1");
    }
    if let Some(t) = block.min_time {
        if block.horizon <= t {
            return config_err(format!("`horizon` ({}) must exceed `min_time` ({t})", block.horizon));
        }
    }
    let result = transient_time(&model.map, &v, &block.initial, block.threshold, block.horizon)?;
    let report = TransientTimeReport {
        model: model.entry.model_id,
        observable: v.name(),
        initial: &block.initial,
        result: &result,
        min_time: block.min_time,
        classification: block.min_time.map(|t| TransientPointClass::from_result(&result, t)),
    };
    emit!("{}", serde_json::to_string_pretty(&report)?);
    Ok(vec![write_json(ctx, "transient_time.json", &report)?])
}

fn empirical_options(
    radii: Option<&Vec<f64>>,
    horizon: Option<usize>,
    samples: Option<usize>,
    seed: u64,
) -> CliResult<EmpiricalOptions> {
    let defaults = EmpiricalOptions::default();
    let opts = EmpiricalOptions {
        radii: radii.cloned().unwrap_or(defaults.radii),
        horizon: horizon.unwrap_or(defaults.horizon),
        samples: samples.unwrap_or(defaults.samples),
        seed,
    };
    opts.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(opts)
}

fn region_or_default(model: &Model, region: Option<&Vec<[f64; 2]>>) -> CliResult<Vec<(f64, f64)>> {
    let region: Vec<(f64, f64)> = match region {
        Some(r) => r.iter().map(|b| (b[0], b[1])).collect(),
        None => model.entry.default_region.clone(),
    };
    if region.len() != model.map.dim() {
        return config_err(format!(
            "region has {} intervals, model dimension is {}",
            region.len(),
            model.map.dim()
        ));
    }
    if region.iter().any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
        return config_err("every region interval needs finite lower < upper");
    }
    Ok(region)
}

#[derive(Serialize)]
struct ClassifiedPoint<'a> {
    fixed_point: &'a FixedPoint,
    observable: &'a str,
    verdict: transient_core::criteria::CenterVerdict,
}

/// Default nodes per dimension for the fixed-point search.
const DEFAULT_SEARCH_GRID: usize = 21;

pub fn classify_cmd(cfg: &RunConfig, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let default_block = ClassifyBlock::default();
    let block = cfg.classify.as_ref().unwrap_or(&default_block);
    let model = cfg.build_model()?;
    let v = cfg.observable(&model, block.observable.as_ref())?;
    let n = model.map.dim();
    let region = region_or_default(&model, block.region.as_ref())?;
    let grid = block.grid.clone().unwrap_or_else(|| vec![DEFAULT_SEARCH_GRID; n]);
    if grid.len() != n || grid.iter().any(|&g| g == 0) {
        return config_err(format!("`grid` needs {n} positive entries"));
    }
    if !(block.tol > 0.0) {
        return config_err("`tol` must be positive");
    }
    let empirical = if block.empirical {
        Some(empirical_options(block.radii.as_ref(), block.horizon, block.samples, ctx.seed)?)
    } else {
        None
    };
    let report = find_fixed_points(&model.map, &region, &grid, block.tol)?;
    if report.dropped_seeds > 0 {
        info!("{} Newton seeds did not converge", report.dropped_seeds);
    }
    let opts = ClassifyOptions {
        empirical,
        seed: ctx.seed,
        ..ClassifyOptions::default()
    };
    let mut out = Vec::new();
    for fp in &report.fixed_points {
        let verdict = classify(&model.map, fp, &v, &opts);
        emit!(
            "{:?}: {:?} via {:?} ({:?}, rho = {:.6})",
            fp.location, verdict.decision, verdict.criterion, fp.stability, fp.spectral.spectral_radius
        );
        out.push(ClassifiedPoint {
            fixed_point: fp,
            observable: v.name(),
            verdict,
        });
    }
    if out.is_empty() {
        warn!("no fixed points found in {region:?}");
    }
    Ok(vec![write_json(ctx, "verdicts.json", &out)?])
}

pub fn search(cfg: &RunConfig, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let block = require(cfg.search.as_ref(), "search")?;
    let model = cfg.build_model()?;
    match block {
        SearchBlock::EscapeProfile {
            candidate,
            radii,
            horizon,
            samples,
            observable,
        } => {
            let v = cfg.observable(&model, observable.as_ref())?;
            check_initial(&model, candidate, "candidate")?;
            let opts = empirical_options(radii.as_ref(), *horizon, *samples, ctx.seed)?;
            let profile = escape_profile(&model.map, &v, candidate, &opts)?;
            let verdict = profile.verdict();
            emit!("{:?} via {:?}", verdict.decision, verdict.criterion);
            let (path, mut w) = ctx.create("escape_profile.csv")?;
            profile.write_csv(&mut w)?;
            Ok(vec![finish(path, w)?])
        }
        SearchBlock::TransientPoints {
            region,
            threshold,
            min_time,
            horizon,
            budget,
            observable,
        } => {
            let v = cfg.observable(&model, observable.as_ref())?;
            let region = region_or_default(&model, Some(region))?;
            check_threshold(*threshold)?;
            if horizon <= min_time {
                return config_err(format!("`horizon` ({horizon}) must exceed `min_time` ({min_time})"));
            }
            let hits = transient_point_search(
                &model.map, &v, &region, *threshold, *min_time, *horizon, *budget, ctx.seed,
            )?;
            emit!("{} transient points out of {budget} samples", hits.len());
            let (path, mut w) = ctx.create("transient_points.csv")?;
            write_transient_points_csv(&mut w, model.map.dim(), &hits)?;
            Ok(vec![finish(path, w)?])
        }
        SearchBlock::Honeymoon {
            candidate,
            direction,
            epsilons,
            threshold,
            horizon,
            observable,
        } => {
            let v = cfg.observable(&model, observable.as_ref())?;
            check_initial(&model, candidate, "candidate")?;
            check_threshold(*threshold)?;
            if *horizon == 0 {
                return config_err("`horizon` must be at least 1");
            }
            if direction.len() != model.map.dim() || direction.iter().all(|d| *d == 0.0) {
                return config_err("`direction` must be a nonzero vector of the model dimension");
            }
            if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
                return config_err("`epsilons` must be positive");
            }
            let rows = honeymoon_scaling(&model.map, &v, candidate, direction, epsilons, *threshold, *horizon)?;
            for row in &rows {
                emit!("epsilon {:e}: {} {:?}", row.epsilon, row.status(), row.time());
            }
            let (path, mut w) = ctx.create("honeymoon.csv")?;
            write_scaling_csv(&mut w, &rows)?;
            Ok(vec![finish(path, w)?])
        }
    }
}

pub fn portrait(cfg: &RunConfig, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let model = cfg.build_model()?;
    if model.map.dim() != 2 {
        return config_err(format!(
            "portraits need a planar model; {} has dimension {}",
            model.entry.model_id,
            model.map.dim()
        ));
    }
    let block = cfg.portrait.clone().unwrap_or(crate::config::PortraitBlock {
        region: None,
        grid: None,
        sign_grid: None,
        arrow_grid: None,
        fixed_points: true,
    });
    let region = match block.region {
        Some(r) => [(r[0][0], r[0][1]), (r[1][0], r[1][1])],
        None => [model.entry.default_region[0], model.entry.default_region[1]],
    };
    if region.iter().any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
        return config_err("every region interval needs finite lower < upper");
    }
    let defaults = PortraitGrids::default();
    let pick = |g: Option<[usize; 2]>, d: (usize, usize), min: usize| -> CliResult<(usize, usize)> {
        let g = g.map_or(d, |g| (g[0], g[1]));
        if g.0 < min || g.1 < min {
            return config_err(format!("portrait grids need at least {min} points per axis"));
        }
        Ok(g)
    };
    let grids = PortraitGrids {
        contour: pick(block.grid, defaults.contour, 2)?,
        signs: pick(block.sign_grid, defaults.signs, 1)?,
        arrows: pick(block.arrow_grid, defaults.arrows, 1)?,
    };
    let fixed_points: Vec<[f64; 2]> = if block.fixed_points {
        let region_vec = vec![region[0], region[1]];
        find_fixed_points(&model.map, &region_vec, &[DEFAULT_SEARCH_GRID, DEFAULT_SEARCH_GRID], 1e-12)?
            .fixed_points
            .iter()
            .map(|fp| [fp.location[0], fp.location[1]])
            .collect()
    } else {
        Vec::new()
    };
    let data = compute_portrait(&model.map, region, grids, &fixed_points)?;
    let written = export_portrait(&data, &ctx.path("portrait")?)?;
    for p in &written {
        info!("wrote {}", p.display());
    }
    Ok(written)
}

pub fn sweep(cfg: &RunConfig, ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let block = require(cfg.sweep.as_ref(), "sweep")?;
    let csv = run_sweep(cfg, block, ctx.jobs, ctx.seed)?;
    let (path, mut w) = ctx.create("sweep.csv")?;
    w.write_all(csv.as_bytes())?;
    Ok(vec![finish(path, w)?])
}

/// JSON for `zoo list`.
pub fn zoo_list() -> CliResult<String> {
    Ok(serde_json::to_string_pretty(&zoo::catalog())?)
}

/// JSON for `zoo show <id>`, with parameter overrides applied.
pub fn zoo_show(id: &str, params: &[(String, f64)]) -> CliResult<String> {
    let id: ModelId = id
        .parse()
        .map_err(|_| CliError::Config(format!("unknown model '{id}'")))?;
    let model = zoo::build(id, params).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(serde_json::to_string_pretty(&model.entry)?)
}

