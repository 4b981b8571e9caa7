//! Self-contained SVG line charts of sweep results.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{MetricsRecord, ModelKind};

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
/// Padding on each side of the data range, as a fraction of that range.
pub const AXIS_MARGIN: f64 = 0.05;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XAxis {
    ActivatedUnits,
    Width,
    IdealFlops,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum YAxis {
    EvalMse,
    SupError,
}

impl FromStr for XAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "activated_units" => Ok(XAxis::ActivatedUnits),
            "width" => Ok(XAxis::Width),
            "ideal_flops" => Ok(XAxis::IdealFlops),
            other => Err(Error::InvalidArgument(format!("unknown x column {other:?}"))),
        }
    }
}

impl FromStr for YAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eval_mse" => Ok(YAxis::EvalMse),
            "sup_error" => Ok(YAxis::SupError),
            other => Err(Error::InvalidArgument(format!("unknown y column {other:?}"))),
        }
    }
}

impl XAxis {
    fn name(self) -> &'static str {
        match self {
            XAxis::ActivatedUnits => "activated_units",
            XAxis::Width => "width",
            XAxis::IdealFlops => "ideal_flops",
        }
    }

    fn value(self, r: &MetricsRecord) -> f64 {
        match self {
            XAxis::ActivatedUnits => r.activated_units as f64,
            XAxis::Width => r.width as f64,
            XAxis::IdealFlops => r.ideal_flops as f64,
        }
    }
}

impl YAxis {
    fn name(self) -> &'static str {
        match self {
            YAxis::EvalMse => "eval_mse",
            YAxis::SupError => "sup_error",
        }
    }

    fn value(self, r: &MetricsRecord) -> f64 {
        match self {
            YAxis::EvalMse => r.eval_mse,
            YAxis::SupError => r.sup_error,
        }
    }
}

/// One line: mean y over seeds at each distinct x, x ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub model_kind: ModelKind,
    pub sparsity: f64,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn label(&self) -> String {
        if self.model_kind == ModelKind::Dense {
            "dense".into()
        } else {
            format!("{} s={}", self.model_kind, trim_float(self.sparsity))
        }
    }
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Groups records by `(model_kind, sparsity)`, skipping points that cannot
/// go on log axes.
pub fn build_series(records: &[MetricsRecord], x: XAxis, y: YAxis) -> Vec<Series> {
    let mut keyed: Vec<(ModelKind, f64, f64, f64)> = records
        .iter()
        .map(|r| (r.model_kind, r.sparsity, x.value(r), y.value(r)))
        .filter(|&(_, _, xv, yv)| xv > 0.0 && yv > 0.0 && xv.is_finite() && yv.is_finite())
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let mut out: Vec<Series> = Vec::new();
    let mut i = 0;
    while i < keyed.len() {
        let (kind, sparsity, xv, _) = keyed[i];
        let mut j = i;
        let mut sum = 0.0;
        while j < keyed.len() && keyed[j].0 == kind && keyed[j].1 == sparsity && keyed[j].2 == xv {
            sum += keyed[j].3;
            j += 1;
        }
        let point = (xv, sum / (j - i) as f64);
        match out.last_mut() {
            Some(s) if s.model_kind == kind && s.sparsity == sparsity => s.points.push(point),
            _ => out.push(Series {
                model_kind: kind,
                sparsity,
                points: vec![point],
            }),
        }
        i = j;
    }
    out
}

/// Padded range in log space.
fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if span == 0.0 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo - AXIS_MARGIN * span, hi + AXIS_MARGIN * span)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// The chart as an SVG document: log2 x axis, log10 y axis, one polyline
/// per series and a legend.
pub fn render_svg(records: &[MetricsRecord], x: XAxis, y: YAxis) -> Result<String> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let series = build_series(records, x, y);
    if series.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no positive finite ({}, {}) pairs to plot on log axes",
            x.name(),
            y.name()
        )));
    }
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x_lo, x_hi) = log_range(all().map(|p| p.0.log2()));
    let (y_lo, y_hi) = log_range(all().map(|p| p.1.log10()));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |v: f64| LEFT + (v.log2() - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |v: f64| TOP + (y_hi - v.log10()) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for e in (x_lo.ceil() as i64)..=(x_hi.floor() as i64) {
        let xv = 2f64.powi(e as i32);
        let sx = px(xv);
        let _ = writeln!(
            svg,
            r##"<line x1="{sx:.2}" y1="{TOP}" x2="{sx:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            TOP + plot_h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{sx:.2}" y="{:.2}" text-anchor="middle">2^{e}</text>"#,
            TOP + plot_h + 18.0
        );
    }
    for e in (y_lo.ceil() as i64)..=(y_hi.floor() as i64) {
        let sy = py(10f64.powi(e as i32));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{sy:.2}" x2="{:.2}" y2="{sy:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
            LEFT - 6.0,
            sy + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{} (log2)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        x.name()
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{} (log10)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        y.name()
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(a, b)| format!("{:.2},{:.2}", px(a), py(b))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for &(a, b) in &s.points {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(a), py(b));
        }
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(&s.label())
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
