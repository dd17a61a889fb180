//! Static SVG line charts for trajectory time series.

use std::fmt::Write as _;

use transient_core::dynamics::Trajectory;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Reference line: `(value, label)`.
pub type Rule = (f64, String);

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Dashed horizontal rules.
    pub h_rules: Vec<Rule>,
    /// Dash-dot vertical rules.
    pub v_rules: Vec<Rule>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    }
}

impl Chart {
    pub fn render(&self) -> String {
        let finite = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite();
        let xs = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().filter(finite).map(|p| p.0))
            .chain(self.v_rules.iter().map(|r| r.0));
        let ys = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().filter(finite).map(|p| p.1))
            .chain(self.h_rules.iter().map(|r| r.0));
        let (mut x0, mut x1) = bounds(xs);
        let (mut y0, mut y1) = bounds(ys);
        if x0 == x1 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y0 == y1 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="24" font-size="15" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for k in 0..=5 {
            let t = k as f64 / 5.0;
            let xv = x0 + t * (x1 - x0);
            let yv = y0 + t * (y1 - y0);
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
                px(xv),
                HEIGHT - MARGIN_BOTTOM + 16.0,
                fmt_tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 6.0,
                py(yv) + 4.0,
                fmt_tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            MARGIN_TOP + ph / 2.0,
            MARGIN_TOP + ph / 2.0,
            escape(&self.y_label)
        );

        let mut legend: Vec<(String, &str, &str)> = Vec::new();
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let mut d = String::new();
            let mut pen_down = false;
            for p in &series.points {
                if !(p.0.is_finite() && p.1.is_finite()) {
                    pen_down = false;
                    continue;
                }
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, px(p.0), py(p.1));
                pen_down = true;
            }
            let _ = writeln!(
                s,
                r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                d.trim_end()
            );
            legend.push((series.label.clone(), color, "none"));
        }
        for (value, label) in &self.h_rules {
            let _ = writeln!(
                s,
                r#"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="6,4"/>"#,
                MARGIN_LEFT + pw,
                y = py(*value)
            );
            legend.push((label.clone(), "black", "6,4"));
        }
        for (value, label) in &self.v_rules {
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{MARGIN_TOP}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-dasharray="8,3,2,3"/>"#,
                MARGIN_TOP + ph,
                x = px(*value)
            );
            legend.push((label.clone(), "black", "8,3,2,3"));
        }
        for (k, (label, color, dash)) in legend.iter().enumerate() {
            let y = MARGIN_TOP + 14.0 + 18.0 * k as f64;
            let x = WIDTH - MARGIN_RIGHT + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
                x + 28.0,
                x + 34.0,
                y + 4.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

/// State components over time, one series per coordinate and run.
pub fn states_chart(title: &str, runs: &[Trajectory]) -> Chart {
    let mut series = Vec::new();
    for (r, traj) in runs.iter().enumerate() {
        let dim = traj.states.first().map_or(0, Vec::len);
        for i in 0..dim {
            let label = if runs.len() > 1 {
                format!("x{} (run {})", i + 1, r + 1)
            } else {
                format!("x{}", i + 1)
            };
            series.push(Series {
                label,
                points: traj
                    .states
                    .iter()
                    .enumerate()
                    .map(|(t, x)| (t as f64, x[i]))
                    .collect(),
            });
        }
    }
    Chart {
        title: title.into(),
        x_label: "t".into(),
        y_label: "state".into(),
        series,
        h_rules: Vec::new(),
        v_rules: Vec::new(),
    }
}

/// `|Δv|` over time, with the threshold rule and the transient-time
/// marker for each run that crosses it.
pub fn delta_chart(title: &str, observable: &str, runs: &[Trajectory], threshold: Option<f64>) -> Chart {
    let mut series = Vec::new();
    let mut v_rules = Vec::new();
    for (r, traj) in runs.iter().enumerate() {
        let suffix = if runs.len() > 1 {
            format!(" (run {})", r + 1)
        } else {
            String::new()
        };
        series.push(Series {
            label: format!("|\u{394}{observable}|{suffix}"),
            points: traj
                .deltas
                .iter()
                .enumerate()
                .map(|(t, d)| (t as f64, d.abs()))
                .collect(),
        });
        if let Some(s) = threshold {
            if let Some(t) = traj.deltas.iter().position(|d| d.abs() > s) {
                v_rules.push((t as f64, format!("transient time {t}{suffix}")));
            }
        }
    }
    Chart {
        title: title.into(),
        x_label: "t".into(),
        y_label: format!("|\u{394}{observable}|"),
        series,
        h_rules: threshold
            .map(|s| vec![(s, format!("S* = {}", fmt_tick(s)))])
            .unwrap_or_default(),
        v_rules,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_chart_is_valid() {
        let chart = Chart {
            title: "empty".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            series: Vec::new(),
            h_rules: Vec::new(),
            v_rules: Vec::new(),
        };
        let svg = chart.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn rules_are_drawn() {
        let chart = Chart {
            title: "t".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "a".into(),
                points: vec![(0.0, 0.0), (1.0, f64::NAN), (2.0, 1.0)],
            }],
            h_rules: vec![(0.5, "S*".into())],
            v_rules: vec![(1.0, "T".into())],
        };
        let svg = chart.render();
        assert!(svg.contains("stroke-dasharray=\"6,4\""));
        assert!(svg.contains("stroke-dasharray=\"8,3,2,3\""));
        assert!(!svg.contains("NaN"));
    }
}
