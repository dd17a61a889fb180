//! Augmented phase portraits for planar maps: nullclines, next-iterate
//! operators and their root curves, sign fields and direction fields.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::MapSystem;
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_rows};

/// Bisection iterations per sign-changing cell edge.
pub const BISECTION_ITERATIONS: usize = 60;
/// A refined crossing must satisfy `|field| ≤ ZERO_TOL·max(|f(a)|, |f(b)|)`;
/// larger residuals indicate a discontinuity, not a root.
pub const ZERO_TOL: f64 = 1e-8;

pub type Region = [(f64, f64); 2];
pub type Polyline = Vec<[f64; 2]>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Key {
    Node(usize, usize),
    /// Edge from node (i, j) to (i+1, j).
    H(usize, usize),
    /// Edge from node (i, j) to (i, j+1).
    V(usize, usize),
}

fn node_coord(region: &Region, grid: (usize, usize), i: usize, j: usize) -> [f64; 2] {
    let (nx, ny) = grid;
    let (x0, x1) = region[0];
    let (y0, y1) = region[1];
    [
        x0 + (x1 - x0) * i as f64 / (nx - 1) as f64,
        y0 + (y1 - y0) * j as f64 / (ny - 1) as f64,
    ]
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn bisect<F: Fn([f64; 2]) -> f64>(field: &F, mut a: [f64; 2], mut fa: f64, mut b: [f64; 2], mut fb: f64) -> Option<[f64; 2]> {
    let scale = fa.abs().max(fb.abs());
    for _ in 0..BISECTION_ITERATIONS {
        let m = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
        if m == a || m == b {
            break;
        }
        let fm = field(m);
        if !fm.is_finite() {
            return None;
        }
        if fm == 0.0 {
            return Some(m);
        }
        if sign(fm) == sign(fa) {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    let (p, fp) = if fa.abs() <= fb.abs() { (a, fa) } else { (b, fb) };
    (fp.abs() <= ZERO_TOL * scale).then_some(p)
}

/// Zero set of `field` over `region`, sampled on an `nx × ny` node grid:
/// sign changes along cell edges are refined by bisection and linked into
/// polylines (closed loops repeat their first vertex). Nodes where the
/// field is not finite mask their cells.
pub fn trace_zero_set<F>(field: F, region: Region, grid: (usize, usize)) -> Vec<Polyline>
where
    F: Fn([f64; 2]) -> f64 + Sync,
{
    let (nx, ny) = grid;
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let values: Vec<Vec<Option<f64>>> = (0..ny)
        .into_par_iter()
        .map(|j| {
            (0..nx)
                .map(|i| {
                    let v = field(node_coord(&region, grid, i, j));
                    v.is_finite().then_some(v)
                })
                .collect()
        })
        .collect();
    let val = |i: usize, j: usize| values[j][i];

    let mut points: HashMap<Key, [f64; 2]> = HashMap::new();
    let mut crossings: HashMap<Key, Option<[f64; 2]>> = HashMap::new();
    let mut segments: BTreeSet<(Key, Key)> = BTreeSet::new();
    let mut add_segment = |a: Key, b: Key| {
        if a != b {
            segments.insert(if a < b { (a, b) } else { (b, a) });
        }
    };

    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let vals: Vec<f64> = match corners.iter().map(|&(a, b)| val(a, b)).collect() {
                Some(v) => v,
                None => continue,
            };
            let edge_keys = [Key::H(i, j), Key::V(i + 1, j), Key::H(i, j + 1), Key::V(i, j)];
            let mut cell_points: Vec<Key> = Vec::new();
            for k in 0..4 {
                let (ci, cj) = corners[k];
                if vals[k] == 0.0 {
                    let key = Key::Node(ci, cj);
                    points.insert(key, node_coord(&region, grid, ci, cj));
                    cell_points.push(key);
                }
                let k2 = (k + 1) % 4;
                if sign(vals[k]) * sign(vals[k2]) < 0 {
                    let key = edge_keys[k];
                    let found = *crossings.entry(key).or_insert_with(|| {
                        let (di, dj) = corners[k2];
                        bisect(
                            &field,
                            node_coord(&region, grid, ci, cj),
                            vals[k],
                            node_coord(&region, grid, di, dj),
                            vals[k2],
                        )
                    });
                    if let Some(p) = found {
                        points.insert(key, p);
                        cell_points.push(key);
                    }
                }
            }
            // edges lying in the zero set
            for k in 0..4 {
                let k2 = (k + 1) % 4;
                if vals[k] == 0.0 && vals[k2] == 0.0 {
                    add_segment(
                        Key::Node(corners[k].0, corners[k].1),
                        Key::Node(corners[k2].0, corners[k2].1),
                    );
                }
            }
            let is_node = |k: &Key| matches!(k, Key::Node(..));
            match cell_points.len() {
                2 => add_segment(cell_points[0], cell_points[1]),
                3 => {
                    let nodes: Vec<Key> = cell_points.iter().copied().filter(is_node).collect();
                    let edges: Vec<Key> = cell_points.iter().copied().filter(|k| !is_node(k)).collect();
                    if edges.len() == 2 {
                        add_segment(edges[0], edges[1]);
                    } else if let Some(e) = edges.first() {
                        let pe = points[e];
                        let dist = |k: &Key| {
                            let p = points[k];
                            (p[0] - pe[0]).hypot(p[1] - pe[1])
                        };
                        let nearest = nodes
                            .iter()
                            .copied()
                            .min_by(|a, b| dist(a).total_cmp(&dist(b)))
                            .expect("two nodes");
                        add_segment(*e, nearest);
                    }
                }
                4 if !cell_points.iter().all(is_node) => {
                    // saddle: the center value decides which sign connects
                    let arc_sign = (0..4)
                        .find(|&k| {
                            vals[k] != 0.0 && position_between(k, &cell_points, &edge_keys, &corners)
                        })
                        .map(|k| sign(vals[k]));
                    let (a, b) = (
                        node_coord(&region, grid, i, j),
                        node_coord(&region, grid, i + 1, j + 1),
                    );
                    let c = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                    let center_sign = sign(field(c));
                    if arc_sign.is_some() && arc_sign == Some(center_sign) {
                        add_segment(cell_points[1], cell_points[2]);
                        add_segment(cell_points[3], cell_points[0]);
                    } else {
                        add_segment(cell_points[0], cell_points[1]);
                        add_segment(cell_points[2], cell_points[3]);
                    }
                }
                _ => {}
            }
        }
    }
    for (a, b) in &segments {
        for key in [a, b] {
            if let Key::Node(i, j) = key {
                points.entry(*key).or_insert_with(|| node_coord(&region, grid, *i, *j));
            }
        }
    }
    link(&segments, &points)
}

/// True when corner `k` lies on the boundary arc strictly between the first
/// two cell points (in the cell's cyclic corner/edge order).
fn position_between(k: usize, cell_points: &[Key], edge_keys: &[Key; 4], corners: &[(usize, usize); 4]) -> bool {
    // cyclic positions: corner k at 2k, edge k at 2k+1
    let pos = |key: &Key| -> usize {
        if let Some(e) = edge_keys.iter().position(|x| x == key) {
            return 2 * e + 1;
        }
        match key {
            Key::Node(i, j) => 2 * corners.iter().position(|c| c == &(*i, *j)).expect("cell corner"),
            _ => unreachable!(),
        }
    };
    let (a, b) = (pos(&cell_points[0]), pos(&cell_points[1]));
    let p = 2 * k;
    a < p && p < b
}

fn link(segments: &BTreeSet<(Key, Key)>, points: &HashMap<Key, [f64; 2]>) -> Vec<Polyline> {
    let mut adjacency: BTreeMap<Key, Vec<Key>> = BTreeMap::new();
    for (a, b) in segments {
        adjacency.entry(*a).or_default().push(*b);
        adjacency.entry(*b).or_default().push(*a);
    }
    let mut used: BTreeSet<(Key, Key)> = BTreeSet::new();
    let edge = |a: Key, b: Key| if a < b { (a, b) } else { (b, a) };
    let mut starts: Vec<Key> = adjacency
        .iter()
        .filter(|(_, n)| n.len() != 2)
        .map(|(k, _)| *k)
        .collect();
    starts.extend(adjacency.keys().copied());
    let mut lines = Vec::new();
    for start in starts {
        loop {
            let next = adjacency[&start]
                .iter()
                .copied()
                .find(|n| !used.contains(&edge(start, *n)));
            let Some(mut nxt) = next else { break };
            let mut line = vec![points[&start]];
            let mut cur = start;
            loop {
                used.insert(edge(cur, nxt));
                line.push(points[&nxt]);
                cur = nxt;
                match adjacency[&cur]
                    .iter()
                    .copied()
                    .find(|n| !used.contains(&edge(cur, *n)))
                {
                    Some(n) => nxt = n,
                    None => break,
                }
            }
            lines.push(line);
        }
    }
    lines
}

/// Signed functions locating the next iterate relative to a nullcline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NextIterateOperator {
    /// `L(x, y) = y₁ − N(x₁)` with the prey nullcline `N(x) = (r/α)(1 − x/K)`.
    PreyN,
    /// `J(x, y) = x₁ − D` with the predator nullcline `D = d/γ`.
    PredatorD,
    /// `I₁ − h(S₁)` with the susceptible nullcline `h(S) = (b − pS)/(αS)`.
    SusceptibleH,
    /// `S₁ − 1/α`, the infected nullcline being `S = 1/α`.
    InfectedLine,
}

fn param(map: &MapSystem, name: &str) -> Result<f64> {
    map.param(name)
        .ok_or_else(|| Error::NotApplicable(format!("map {} has no parameter {name}", map.name())))
}

fn require_model(map: &MapSystem, model: &str) -> Result<()> {
    if map.name() == model && map.dim() == 2 {
        Ok(())
    } else {
        Err(Error::NotApplicable(format!(
            "operator needs the {model} model, got {}",
            map.name()
        )))
    }
}

impl NextIterateOperator {
    pub fn model(self) -> &'static str {
        match self {
            Self::PreyN | Self::PredatorD => "streipert_pp",
            Self::SusceptibleH | Self::InfectedLine => "epidemic",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::PreyN => "L",
            Self::PredatorD => "J",
            Self::SusceptibleH => "H",
            Self::InfectedLine => "M",
        }
    }
}

/// Evaluates a next-iterate operator; positive means the next iterate lies
/// above (for curves `y = g(x)`) or right of (for vertical lines) the
/// associated nullcline.
pub fn next_iterate_operator(map: &MapSystem, op: NextIterateOperator, point: [f64; 2]) -> Result<f64> {
    require_model(map, op.model())?;
    let next = map.eval_finite(&point)?;
    let value = match op {
        NextIterateOperator::PreyN => {
            let (r, k, alpha) = (param(map, "r")?, param(map, "K")?, param(map, "alpha")?);
            next[1] - (r / alpha) * (1.0 - next[0] / k)
        }
        NextIterateOperator::PredatorD => next[0] - param(map, "d")? / param(map, "gamma")?,
        NextIterateOperator::SusceptibleH => {
            let (b, p, alpha) = (param(map, "b")?, param(map, "p")?, param(map, "alpha")?);
            next[1] - (b - p * next[0]) / (alpha * next[0])
        }
        NextIterateOperator::InfectedLine => next[0] - 1.0 / param(map, "alpha")?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteState { step: 1 })
    }
}

/// Quadrant arrow at a grid node. `sx`, `sy` are the true signs of the
/// increments; plotting treats zero as positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    pub x: f64,
    pub y: f64,
    pub dx: f64,
    pub dy: f64,
    pub sx: i8,
    pub sy: i8,
}

/// Signs of `Δx`, `Δy` on an `nx × ny` node grid; nodes whose image is not
/// finite are omitted.
pub fn direction_field(map: &MapSystem, region: Region, grid: (usize, usize)) -> Result<Vec<Arrow>> {
    if map.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: map.dim(),
        });
    }
    let (nx, ny) = grid;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 nodes per axis".into()));
    }
    let rows: Vec<Vec<Arrow>> = (0..ny)
        .into_par_iter()
        .map(|j| {
            (0..nx)
                .filter_map(|i| {
                    let p = node_coord(&region, grid, i, j);
                    let next = map.eval_finite(&p).ok()?;
                    let (dx, dy) = (next[0] - p[0], next[1] - p[1]);
                    Some(Arrow {
                        x: p[0],
                        y: p[1],
                        dx,
                        dy,
                        sx: sign(dx),
                        sy: sign(dy),
                    })
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPolyline {
    pub label: String,
    pub points: Polyline,
}

/// Operator signs at a cell center; 0 where the operator vanishes or
/// cannot be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignCell {
    pub i: usize,
    pub j: usize,
    pub cx: f64,
    pub cy: f64,
    pub sign_l: i8,
    pub sign_j: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortraitData {
    pub title: String,
    pub region: Region,
    pub grid: (usize, usize),
    pub nullclines: Vec<LabeledPolyline>,
    pub root_curves: Vec<LabeledPolyline>,
    /// Names of the two operators in `sign_field` (first → `sign_l`).
    pub operators: Vec<String>,
    pub sign_field: Vec<SignCell>,
    pub direction_field: Vec<Arrow>,
    pub guard_curves: Vec<LabeledPolyline>,
    pub fixed_points: Vec<[f64; 2]>,
}

impl PortraitData {
    pub fn empty(title: &str, region: Region) -> Self {
        Self {
            title: title.into(),
            region,
            grid: (0, 0),
            nullclines: Vec::new(),
            root_curves: Vec::new(),
            operators: Vec::new(),
            sign_field: Vec::new(),
            direction_field: Vec::new(),
            guard_curves: Vec::new(),
            fixed_points: Vec::new(),
        }
    }
}

/// Resolution settings for [`compute_portrait`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortraitGrids {
    /// Nodes of the contour grid.
    pub contour: (usize, usize),
    /// Cells of the sign grid.
    pub signs: (usize, usize),
    /// Nodes of the arrow grid.
    pub arrows: (usize, usize),
}

impl Default for PortraitGrids {
    fn default() -> Self {
        Self {
            contour: (241, 161),
            signs: (12, 8),
            arrows: (20, 15),
        }
    }
}

fn labeled(label: &str, lines: Vec<Polyline>) -> impl Iterator<Item = LabeledPolyline> + '_ {
    lines.into_iter().map(move |points| LabeledPolyline {
        label: label.into(),
        points,
    })
}

/// Builds the augmented portrait of a planar map. Predator–prey and
/// epidemic models get their next-iterate operators, root curves and sign
/// field; the epidemic model also gets the guard curve `S₁ = 0`. Any other
/// planar map gets nullclines and the direction field.
pub fn compute_portrait(
    map: &MapSystem,
    region: Region,
    grids: PortraitGrids,
    fixed_points: &[[f64; 2]],
) -> Result<PortraitData> {
    if map.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: map.dim(),
        });
    }
    if region.iter().any(|(lo, hi)| !(lo < hi)) {
        return Err(Error::InvalidArgument("region needs lower < upper".into()));
    }
    let mut region = region;
    let ops = match map.name() {
        "streipert_pp" => Some([NextIterateOperator::PreyN, NextIterateOperator::PredatorD]),
        "epidemic" => {
            // the susceptible nullcline has a pole at S = 0
            if let (Some(b), Some(p)) = (map.param("b"), map.param("p")) {
                if p > 0.0 {
                    region[0].0 = region[0].0.max(1e-6 * b / p);
                }
            }
            Some([NextIterateOperator::SusceptibleH, NextIterateOperator::InfectedLine])
        }
        _ => None,
    };
    let names: [&str; 2] = match map.name() {
        "streipert_pp" => ["prey", "predator"],
        "epidemic" => ["susceptible", "infected"],
        _ => ["dx1", "dx2"],
    };
    let increment = |k: usize| {
        move |p: [f64; 2]| match map.eval_finite(&p) {
            Ok(next) => next[k] - p[k],
            Err(_) => f64::NAN,
        }
    };
    let mut data = PortraitData::empty(map.name(), region);
    data.grid = grids.contour;
    data.fixed_points = fixed_points.to_vec();
    for (k, name) in names.iter().enumerate() {
        data.nullclines
            .extend(labeled(name, trace_zero_set(increment(k), region, grids.contour)));
    }
    if let Some(ops) = ops {
        for op in ops {
            let lines = trace_zero_set(
                |p| next_iterate_operator(map, op, p).unwrap_or(f64::NAN),
                region,
                grids.contour,
            );
            data.root_curves.extend(labeled(op.label(), lines));
        }
        data.operators = ops.iter().map(|o| o.label().to_string()).collect();
        let (cx, cy) = grids.signs;
        let cell_grid = (cx + 1, cy + 1);
        for j in 0..cy {
            for i in 0..cx {
                let a = node_coord(&region, cell_grid, i, j);
                let b = node_coord(&region, cell_grid, i + 1, j + 1);
                let c = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                let s = |op| next_iterate_operator(map, op, c).map(sign).unwrap_or(0);
                data.sign_field.push(SignCell {
                    i,
                    j,
                    cx: c[0],
                    cy: c[1],
                    sign_l: s(ops[0]),
                    sign_j: s(ops[1]),
                });
            }
        }
    }
    if map.name() == "epidemic" {
        data.guard_curves.extend(labeled(
            "guard",
            trace_zero_set(
                |p| map.eval_finite(&p).map(|n| n[0]).unwrap_or(f64::NAN),
                region,
                grids.contour,
            ),
        ));
    }
    data.direction_field = direction_field(map, region, grids.arrows)?;
    Ok(data)
}

fn polyline_rows(lines: &[LabeledPolyline]) -> Vec<Vec<String>> {
    let mut counters: BTreeMap<&str, usize> = BTreeMap::new();
    let mut rows = Vec::new();
    for line in lines {
        let k = counters.entry(line.label.as_str()).or_default();
        let id = format!("{}:{}", line.label, k);
        *k += 1;
        for p in &line.points {
            rows.push(vec![id.clone(), fmt_f64(p[0]), fmt_f64(p[1])]);
        }
    }
    rows
}

/// Writes the four CSV layers and the SVG next to `basename`; returns the
/// paths written.
pub fn export_portrait(data: &PortraitData, basename: &Path) -> io::Result<Vec<PathBuf>> {
    let with_ext = |ext: &str| {
        let mut s = basename.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    let mut written = Vec::new();
    let mut write = |ext: &str, body: Vec<u8>| -> io::Result<()> {
        let path = with_ext(ext);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };

    let mut buf = Vec::new();
    write_rows(&mut buf, "curve_id,x,y", polyline_rows(&data.nullclines))?;
    write(".nullclines.csv", buf)?;

    let mut roots = data.root_curves.clone();
    roots.extend(data.guard_curves.iter().cloned());
    let mut buf = Vec::new();
    write_rows(&mut buf, "curve_id,x,y", polyline_rows(&roots))?;
    write(".rootcurves.csv", buf)?;

    let mut buf = Vec::new();
    write_rows(
        &mut buf,
        "i,j,cx,cy,sign_L,sign_J",
        data.sign_field.iter().map(|c| {
            vec![
                c.i.to_string(),
                c.j.to_string(),
                fmt_f64(c.cx),
                fmt_f64(c.cy),
                c.sign_l.to_string(),
                c.sign_j.to_string(),
            ]
        }),
    )?;
    write(".signs.csv", buf)?;

    let mut buf = Vec::new();
    write_rows(
        &mut buf,
        "x,y,sx,sy",
        data.direction_field.iter().map(|a| {
            vec![fmt_f64(a.x), fmt_f64(a.y), a.sx.to_string(), a.sy.to_string()]
        }),
    )?;
    write(".arrows.csv", buf)?;

    write(".svg", render_svg(data).into_bytes())?;
    Ok(written)
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 600.0;

const NULLCLINE_COLORS: [&str; 2] = ["#d62728", "#1f77b4"];
const ROOT_COLORS: [&str; 2] = ["#2ca02c", "#9467bd"];
const GUARD_COLOR: &str = "#ff7f0e";

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static SVG of every layer; the region maps linearly onto the 800×600
/// viewport (y up).
pub fn render_svg(data: &PortraitData) -> String {
    let [(x0, x1), (y0, y1)] = data.region;
    let sx = |x: f64| (x - x0) / (x1 - x0) * SVG_WIDTH;
    let sy = |y: f64| SVG_HEIGHT - (y - y0) / (y1 - y0) * SVG_HEIGHT;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="600" viewBox="0 0 800 600" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape_xml(&data.title));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="800" height="600" fill="white" stroke="black"/>"#);

    // axes ticks
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (px, py) = (t * SVG_WIDTH, SVG_HEIGHT - t * SVG_HEIGHT);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="600" x2="{px:.2}" y2="592" stroke="black"/><text x="{tx:.2}" y="588" font-size="11" text-anchor="middle">{v}</text>"##,
            tx = px.clamp(20.0, 780.0),
            v = tick(x0 + t * (x1 - x0)),
        );
        let _ = writeln!(
            s,
            r##"<line x1="0" y1="{py:.2}" x2="8" y2="{py:.2}" stroke="black"/><text x="11" y="{ty:.2}" font-size="11">{v}</text>"##,
            ty = (py + 4.0).clamp(12.0, 584.0),
            v = tick(y0 + t * (y1 - y0)),
        );
    }

    for c in &data.sign_field {
        let _ = writeln!(
            s,
            r##"<text x="{:.2}" y="{:.2}" font-size="10" fill="#888888" text-anchor="middle">{}{}</text>"##,
            sx(c.cx),
            sy(c.cy),
            sign_char(c.sign_l),
            sign_char(c.sign_j),
        );
    }

    for a in &data.direction_field {
        let ux = if a.sx >= 0 { 1.0 } else { -1.0 };
        let uy = if a.sy >= 0 { 1.0 } else { -1.0 };
        let (px, py) = (sx(a.x), sy(a.y));
        let len = 7.0;
        let (qx, qy) = (px + ux * len, py - uy * len);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{py:.2}" x2="{qx:.2}" y2="{qy:.2}" stroke="black" stroke-width="1"/><circle cx="{qx:.2}" cy="{qy:.2}" r="1.6" fill="black"/>"#
        );
    }

    let path = |pts: &Polyline| {
        pts.iter()
            .enumerate()
            .map(|(k, p)| format!("{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, sx(p[0]), sy(p[1])))
            .collect::<String>()
    };
    let mut legend: Vec<(String, String, &str)> = Vec::new();
    let mut layer = |s: &mut String, lines: &[LabeledPolyline], colors: &dyn Fn(usize) -> &'static str, dash: &'static str, kind: &str| {
        let mut labels: Vec<&str> = Vec::new();
        for line in lines {
            if !labels.contains(&line.label.as_str()) {
                labels.push(&line.label);
            }
        }
        for (k, label) in labels.iter().enumerate() {
            let color = colors(k);
            for line in lines.iter().filter(|l| &l.label == label) {
                let _ = writeln!(
                    s,
                    r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/>"#,
                    path(&line.points)
                );
            }
            legend.push((format!("{kind} {label}"), color.to_string(), dash));
        }
    };
    layer(&mut s, &data.nullclines, &|k| NULLCLINE_COLORS[k % 2], "8,5", "nullcline");
    layer(&mut s, &data.root_curves, &|k| ROOT_COLORS[k % 2], "none", "root curve");
    layer(&mut s, &data.guard_curves, &|_| GUARD_COLOR, "10,4,2,4", "guard");

    for p in &data.fixed_points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="black"/>"#,
            sx(p[0]),
            sy(p[1])
        );
    }

    if !legend.is_empty() {
        let h = 10.0 + 18.0 * legend.len() as f64;
        let _ = writeln!(
            s,
            r##"<rect x="590" y="10" width="200" height="{h:.0}" fill="white" fill-opacity="0.85" stroke="#444444"/>"##
        );
        for (k, (label, color, dash)) in legend.iter().enumerate() {
            let y = 26.0 + 18.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<line x1="600" y1="{y:.0}" x2="640" y2="{y:.0}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/><text x="648" y="{:.0}" font-size="12">{}</text>"#,
                y + 4.0,
                escape_xml(label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn sign_char(v: i8) -> &'static str {
    match v {
        1 => "+",
        -1 => "\u{2212}",
        _ => "0",
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zoo::{build, ModelId};

    fn pp() -> MapSystem {
        build(ModelId::StreipertPp, &[]).unwrap().map
    }

    fn hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
        let d = |p: &[f64; 2], set: &[[f64; 2]]| {
            set.iter()
                .map(|q| (p[0] - q[0]).hypot(p[1] - q[1]))
                .fold(f64::INFINITY, f64::min)
        };
        let ab = a.iter().map(|p| d(p, b)).fold(0.0, f64::max);
        let ba = b.iter().map(|p| d(p, a)).fold(0.0, f64::max);
        ab.max(ba)
    }

    #[test]
    fn predator_increment_zero_set_is_vertical_line() {
        let map = pp();
        let lines = trace_zero_set(
            |p| {
                let n = map.eval_finite(&p).unwrap();
                n[1] - p[1]
            },
            [(0.0, 2.0), (0.01, 1.0)],
            (41, 23),
        );
        assert_eq!(lines.len(), 1);
        for p in &lines[0] {
            assert!((p[0] - 0.25).abs() < 1e-12, "{p:?}");
        }
        assert!(lines[0].len() >= 20);
    }

    #[test]
    fn constant_field_has_empty_zero_set() {
        assert!(trace_zero_set(|_| 1.0, [(0.0, 1.0), (0.0, 1.0)], (10, 10)).is_empty());
    }

    #[test]
    fn circle_traces_a_closed_loop() {
        let lines = trace_zero_set(
            |p| p[0] * p[0] + p[1] * p[1] - 0.5,
            [(-1.0, 1.0), (-1.0, 1.0)],
            (33, 33),
        );
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert_eq!(l.first(), l.last());
        for p in l {
            assert!((p[0].hypot(p[1]) - 0.5_f64.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn pole_is_not_a_root() {
        let lines = trace_zero_set(|p| 1.0 / (p[0] - 0.333), [(0.0, 1.0), (0.0, 1.0)], (11, 11));
        assert!(lines.is_empty());
    }

    #[test]
    fn prey_nullcline_follows_closed_form() {
        let map = pp();
        let lines = trace_zero_set(
            |p| {
                let n = map.eval_finite(&p).unwrap();
                n[0] - p[0]
            },
            [(0.05, 1.0), (0.0, 0.5)],
            (60, 40),
        );
        let pts: Vec<_> = lines.iter().flatten().collect();
        assert!(!pts.is_empty());
        for p in pts {
            assert!((p[1] - 0.5 * (1.0 - p[0])).abs() < 1e-8, "{p:?}");
        }
    }

    #[test]
    fn refinement_is_stable() {
        let f = |p: [f64; 2]| p[1] - (p[0] * 3.0).sin() * 0.3 - 0.5;
        let region = [(0.0, 2.0), (0.0, 1.0)];
        let coarse: Vec<_> = trace_zero_set(f, region, (21, 11)).concat();
        let fine: Vec<_> = trace_zero_set(f, region, (41, 21)).concat();
        let diag = (0.1_f64).hypot(0.1);
        assert!(hausdorff(&coarse, &fine) <= diag);
    }

    #[test]
    fn operator_on_prey_nullcline() {
        let map = pp();
        let x = 0.5;
        let l = next_iterate_operator(&map, NextIterateOperator::PreyN, [x, 0.5 * (1.0 - x)]).unwrap();
        assert!((l - 0.125).abs() < 1e-12);
        let j = next_iterate_operator(&map, NextIterateOperator::PredatorD, [0.25, 0.0]).unwrap();
        assert!(j > 0.0);
        let l_star = next_iterate_operator(&map, NextIterateOperator::PreyN, [0.25, 0.375]).unwrap();
        assert!(l_star.abs() < 1e-12);
        let epi = build(ModelId::Epidemic, &[]).unwrap().map;
        assert!(next_iterate_operator(&epi, NextIterateOperator::PreyN, [1.0, 1.0]).is_err());
    }

    #[test]
    fn direction_field_quadrants() {
        let map = pp();
        let arrows = direction_field(&map, [(0.1, 0.25), (0.05, 0.375)], (2, 2)).unwrap();
        let a = arrows[0];
        assert_eq!((a.x, a.y), (0.1, 0.05));
        assert_eq!((a.sx, a.sy), (1, -1));
        let fixed = arrows[3];
        assert_eq!((fixed.sx, fixed.sy), (0, 0));

        let epi = build(ModelId::Epidemic, &[]).unwrap().map;
        let arrows = direction_field(&epi, [(5e4, 6e4), (1.0, 2.0)], (2, 2)).unwrap();
        assert!(arrows.iter().all(|a| a.sx == -1 && a.sy == 1));
    }

    #[test]
    fn export_writes_all_layers() {
        let map = pp();
        let grids = PortraitGrids {
            contour: (31, 21),
            signs: (4, 3),
            arrows: (5, 4),
        };
        let data = compute_portrait(&map, [(0.0, 1.2), (0.0, 0.8)], grids, &[[0.25, 0.375]]).unwrap();
        assert!(!data.nullclines.is_empty());
        assert!(!data.root_curves.is_empty());
        assert_eq!(data.sign_field.len(), 12);
        let dir = tempfile::tempdir().unwrap();
        let files = export_portrait(&data, &dir.path().join("fig")).unwrap();
        assert_eq!(files.len(), 5);
        let nc = fs::read_to_string(dir.path().join("fig.nullclines.csv")).unwrap();
        assert!(nc.starts_with("curve_id,x,y\n"));
        let signs = fs::read_to_string(dir.path().join("fig.signs.csv")).unwrap();
        assert!(signs.starts_with("i,j,cx,cy,sign_L,sign_J\n"));
        let svg = fs::read_to_string(dir.path().join("fig.svg")).unwrap();
        assert!(svg.contains(r#"width="800" height="600""#));
        assert!(svg.contains("stroke-dasharray=\"8,5\""));
    }

    #[test]
    fn epidemic_portrait_has_guard_curve() {
        let map = build(
            ModelId::Epidemic,
            &[("p".into(), 0.3), ("alpha".into(), 0.8), ("b".into(), 1.0)],
        )
        .unwrap()
        .map;
        let grids = PortraitGrids {
            contour: (41, 31),
            signs: (4, 3),
            arrows: (5, 4),
        };
        let data = compute_portrait(&map, [(0.0, 5.0), (0.0, 3.0)], grids, &[]).unwrap();
        assert!(data.region[0].0 > 0.0);
        assert!(!data.guard_curves.is_empty());
        for p in data.guard_curves.iter().flat_map(|l| &l.points) {
            let expected = (0.7 * p[0] + 1.0) / (0.8 * p[0]);
            assert!((p[1] - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn empty_portrait_is_valid_svg() {
        let svg = render_svg(&PortraitData::empty("empty", [(0.0, 1.0), (0.0, 1.0)]));
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("<path"));
    }

    #[test]
    fn non_planar_map_rejected() {
        let cubic = build(ModelId::Cubic1d, &[]).unwrap().map;
        assert!(compute_portrait(&cubic, [(0.0, 1.0), (0.0, 1.0)], PortraitGrids::default(), &[]).is_err());
    }
}
