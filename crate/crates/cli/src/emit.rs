//! Deterministic artifact emission: CSV sample tables, SVG figures, and the
//! plain-text run report. Everything here is a pure function of the data;
//! nothing reads clocks, thread ids or iteration order of unordered maps, so
//! repeated runs produce identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rhotrace_core::geodesic::GeodesicTrace;

use crate::CliError;

/// 17 significant digits: enough to round-trip any 64-bit float exactly.
pub fn float17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Sample table for one or more rays. Header `ray,k,r,S,x1..xn,u1..un`,
/// one row per sample, ordered by (ray, k).
pub fn csv_for_rays(rays: &[&GeodesicTrace]) -> String {
    assert!(!rays.is_empty(), "csv needs at least one trace");
    let dim = rays[0].dim();
    let mut out = String::from("ray,k,r,S");
    for i in 1..=dim {
        let _ = write!(out, ",x{i}");
    }
    for i in 1..=dim {
        let _ = write!(out, ",u{i}");
    }
    out.push('\n');
    for (ray, t) in rays.iter().enumerate() {
        for (k, st) in t.samples.iter().enumerate() {
            let _ = write!(out, "{ray},{k},{},{}", float17(st.r), float17(st.s));
            for c in &st.x {
                let _ = write!(out, ",{}", float17(*c));
            }
            for c in &st.u {
                let _ = write!(out, ",{}", float17(*c));
            }
            out.push('\n');
        }
    }
    out
}

/// A 2D figure: ray polylines, level-set polylines, discs, marker dots.
/// Chart coordinates throughout; the y axis is flipped only at render time.
#[derive(Debug, Default)]
pub struct Figure {
    pub rays: Vec<Vec<[f64; 2]>>,
    pub levels: Vec<Vec<[f64; 2]>>,
    /// Closed level polylines get their first point repeated at render time.
    pub closed_levels: Vec<bool>,
    pub discs: Vec<([f64; 2], f64)>,
    pub dots: Vec<[f64; 2]>,
}

impl Figure {
    pub fn push_trace(&mut self, t: &GeodesicTrace) {
        assert_eq!(t.dim(), 2, "figures are planar");
        self.rays
            .push(t.samples.iter().map(|st| [st.x[0], st.x[1]]).collect());
    }
}

fn fmt_coord(v: f64) -> String {
    // fixed decimals keep the SVG byte-stable and parser-friendly
    format!("{v:.8}")
}

/// Renders the figure as a standalone SVG. The viewBox covers the data
/// bounds plus a 5% margin; chart y points up.
pub fn svg_for_figure(fig: &Figure) -> String {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    let mut grow = |p: [f64; 2], pad: f64| {
        for a in 0..2 {
            min[a] = min[a].min(p[a] - pad);
            max[a] = max[a].max(p[a] + pad);
        }
    };
    for line in fig.rays.iter().chain(&fig.levels) {
        for &p in line {
            grow(p, 0.0);
        }
    }
    for &(c, r) in &fig.discs {
        grow(c, r);
    }
    for &p in &fig.dots {
        grow(p, 0.0);
    }
    if !(min[0].is_finite() && max[0].is_finite()) {
        min = [-1.0, -1.0];
        max = [1.0, 1.0];
    }
    let span = [(max[0] - min[0]).max(1e-9), (max[1] - min[1]).max(1e-9)];
    let margin = 0.05 * span[0].max(span[1]);
    // flip y: chart (x, y) renders at (x, -y)
    let vb = [
        min[0] - margin,
        -(max[1] + margin),
        span[0] + 2.0 * margin,
        span[1] + 2.0 * margin,
    ];
    let stroke = 0.003 * span[0].max(span[1]);
    let dot_r = 2.0 * stroke;

    let mut out = String::new();
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"800\" height=\"{:.0}\">\n",
        fmt_coord(vb[0]),
        fmt_coord(vb[1]),
        fmt_coord(vb[2]),
        fmt_coord(vb[3]),
        (800.0 * vb[3] / vb[2]).max(1.0),
    );
    let _ = write!(out, "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        fmt_coord(vb[0]), fmt_coord(vb[1]), fmt_coord(vb[2]), fmt_coord(vb[3]));

    let polyline = |out: &mut String, pts: &[[f64; 2]], color: &str, width: f64, close: bool| {
        let mut attr = String::new();
        for &[x, y] in pts {
            let _ = write!(attr, "{},{} ", fmt_coord(x), fmt_coord(-y));
        }
        if close {
            if let Some(&[x, y]) = pts.first() {
                let _ = write!(attr, "{},{} ", fmt_coord(x), fmt_coord(-y));
            }
        }
        let _ = write!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{}\"/>\n",
            attr.trim_end(),
            fmt_coord(width),
        );
    };

    for ray in &fig.rays {
        polyline(&mut out, ray, "#607080", stroke, false);
    }
    for (i, level) in fig.levels.iter().enumerate() {
        let close = fig.closed_levels.get(i).copied().unwrap_or(false);
        polyline(&mut out, level, "#c03030", 1.5 * stroke, close);
    }
    for &(c, r) in &fig.discs {
        let _ = write!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"#3070c0\" stroke-width=\"{}\"/>\n",
            fmt_coord(c[0]),
            fmt_coord(-c[1]),
            fmt_coord(r),
            fmt_coord(0.75 * stroke),
        );
    }
    for &p in &fig.dots {
        let _ = write!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"#202020\"/>\n",
            fmt_coord(p[0]),
            fmt_coord(-p[1]),
            fmt_coord(dot_r),
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Plain-text run summary. Keys are emitted in sorted order so the report
/// text is deterministic; wall-clock time is deliberately not a field (the
/// caller may print it to stderr, never into an artifact).
#[derive(Debug, Clone)]
pub struct Report {
    command: String,
    entries: BTreeMap<String, String>,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("command: {}\n", self.command);
        for (k, v) in &self.entries {
            if v.contains('\n') {
                let _ = write!(out, "{k}:\n");
                for line in v.lines() {
                    let _ = writeln!(out, "  {line}");
                }
            } else {
                let _ = writeln!(out, "{k}: {v}");
            }
        }
        out
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rhotrace_core::builtin;
    use rhotrace_core::geodesic::{trace, Formulation, TraceLimit};

    #[test]
    fn float_rendering_round_trips() {
        for v in [0.1, -3.5e-7, std::f64::consts::PI, 1.0 / 3.0, 0.0] {
            let s = float17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn csv_shape_for_a_short_trace() {
        let m = builtin::euclidean(2).unwrap();
        let t = trace(&m, &[0.0, 0.0], &[1.0, 0.0], Formulation::AlphaForm, 0.5, TraceLimit::MaxR(1.5)).unwrap();
        assert_eq!(t.samples.len(), 4); // r = 0, 0.5, 1.0, 1.5
        let csv = csv_for_rays(&[&t]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "ray,k,r,S,x1,x2,u1,u2");
        assert!(lines[1].starts_with("0,0,"));
        assert!(lines[4].starts_with("0,3,"));
        // straight ray: last sample at x1 = 1.5
        let fields: Vec<&str> = lines[4].split(',').collect();
        assert_eq!(fields[4].parse::<f64>().unwrap(), 1.5);
    }

    #[test]
    fn fan_row_count_is_header_plus_samples() {
        let m = builtin::euclidean(2).unwrap();
        let fan = rhotrace_core::wavefront::trace_fan(
            &m, &[0.0, 0.0], 8, Formulation::AlphaForm, 0.1, 1.0, None,
        )
        .unwrap();
        let refs: Vec<&GeodesicTrace> = fan.traces.iter().collect();
        let csv = csv_for_rays(&refs);
        // 8 rays x 11 samples + header
        assert_eq!(csv.lines().count(), 89);
    }

    #[test]
    fn svg_covers_the_data_with_margin_and_flips_y() {
        let mut fig = Figure::default();
        fig.rays.push(vec![[0.0, 0.0], [1.0, 2.0]]);
        let svg = svg_for_figure(&fig);
        assert!(svg.starts_with("<svg "));
        // span 1 x 2, margin 0.1: viewBox x from -0.1, flipped y from -(2 + 0.1)
        assert!(svg.contains("viewBox=\"-0.10000000 -2.10000000 1.20000000 2.20000000\""), "{svg}");
        assert!(svg.contains("0.00000000,-0.00000000 1.00000000,-2.00000000"), "{svg}");
    }

    #[test]
    fn report_keys_come_out_sorted() {
        let mut r = Report::new("demo");
        r.set("zeta", 1);
        r.set("alpha", "x");
        r.set("mid", 2.5);
        assert_eq!(r.to_text(), "command: demo\nalpha: x\nmid: 2.5\nzeta: 1\n");
    }
}
