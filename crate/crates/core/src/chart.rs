//! Deterministic SVG line charts for sweep results.
//!
//! Rendering is pure string assembly: fixed palette, fixed two-decimal
//! coordinate formatting, no timestamps, series drawn in input order. The
//! same input therefore always yields byte-identical SVG, which the golden
//! test pins down.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("chart has no plottable points")]
    NoData,
    #[error("non-finite value in series {0:?}")]
    NonFinite(String),
    #[error("cannot write chart: {0}")]
    Io(#[from] std::io::Error),
}

/// One plotted line: `(x, y, ci)` triples where `ci` is the half-width of
/// the confidence band around `y` (0 for none).
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSeries {
    pub name: String,
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: u32,
    pub height: u32,
    /// Draw translucent ±ci bands around each line.
    pub show_ci: bool,
}

impl Default for ChartSpec {
    fn default() -> Self {
        ChartSpec {
            title: String::new(),
            x_label: "x".into(),
            y_label: "y".into(),
            width: 720,
            height: 480,
            show_ci: true,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1b6ca8", "#d1495b", "#2e933c", "#8338ec", "#e07a10", "#0f8b8d", "#774936", "#5c677d",
];

const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 142.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;

fn fmt2(v: f64) -> String {
    // normalize negative zero so coordinates are stable
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Option<Range> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo.is_finite() && hi.is_finite() {
            Some(Range { lo, hi })
        } else {
            None
        }
    }

    fn padded(mut self, frac: f64) -> Range {
        if self.lo == self.hi {
            let pad = if self.lo == 0.0 { 1.0 } else { self.lo.abs() * 0.5 };
            self.lo -= pad;
            self.hi += pad;
        } else {
            let pad = (self.hi - self.lo) * frac;
            self.lo -= pad;
            self.hi += pad;
        }
        self
    }

    fn map(&self, v: f64, out_lo: f64, out_hi: f64) -> f64 {
        out_lo + (v - self.lo) / (self.hi - self.lo) * (out_hi - out_lo)
    }
}

/// Renders the chart as a standalone SVG document.
pub fn render_chart(series: &[ChartSeries], spec: &ChartSpec) -> Result<String, ChartError> {
    let mut any = false;
    for s in series {
        for &(x, y, ci) in &s.points {
            if !(x.is_finite() && y.is_finite() && ci.is_finite()) {
                return Err(ChartError::NonFinite(s.name.clone()));
            }
            any = true;
        }
    }
    if !any {
        return Err(ChartError::NoData);
    }

    let w = spec.width as f64;
    let h = spec.height as f64;
    let plot_l = MARGIN_L;
    let plot_r = w - MARGIN_R;
    let plot_t = MARGIN_T;
    let plot_b = h - MARGIN_B;

    let xr = Range::of(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)))
        .ok_or(ChartError::NoData)?
        .padded(0.04);
    let band = |p: &(f64, f64, f64)| if spec.show_ci { p.2 } else { 0.0 };
    let yr = Range::of(series.iter().flat_map(|s| {
        s.points
            .iter()
            .flat_map(move |p| [p.1 - band(p), p.1 + band(p)])
    }))
    .ok_or(ChartError::NoData)?
    .padded(0.08);

    let px = |v: f64| xr.map(v, plot_l, plot_r);
    let py = |v: f64| yr.map(v, plot_b, plot_t);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" font-family=\"Helvetica, Arial, sans-serif\">",
        spec.width, spec.height, spec.width, spec.height
    );
    let _ = writeln!(svg, "<rect width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>", spec.width, spec.height);
    if !spec.title.is_empty() {
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"22\" font-size=\"15\" text-anchor=\"middle\" fill=\"#222222\">{}</text>",
            fmt2((plot_l + plot_r) / 2.0),
            escape(&spec.title)
        );
    }

    // gridlines and ticks
    let ticks = 5usize;
    for i in 0..=ticks {
        let t = i as f64 / ticks as f64;
        let xv = xr.lo + t * (xr.hi - xr.lo);
        let yv = yr.lo + t * (yr.hi - yr.lo);
        let xp = px(xv);
        let yp = py(yv);
        let _ = writeln!(
            svg,
            "<line x1=\"{x}\" y1=\"{t}\" x2=\"{x}\" y2=\"{b}\" stroke=\"#e4e4e4\" stroke-width=\"1\"/>",
            x = fmt2(xp),
            t = fmt2(plot_t),
            b = fmt2(plot_b)
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{l}\" y1=\"{y}\" x2=\"{r}\" y2=\"{y}\" stroke=\"#e4e4e4\" stroke-width=\"1\"/>",
            l = fmt2(plot_l),
            r = fmt2(plot_r),
            y = fmt2(yp)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#555555\">{v}</text>",
            x = fmt2(xp),
            y = fmt2(plot_b + 16.0),
            v = fmt_tick(xv)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" font-size=\"11\" text-anchor=\"end\" fill=\"#555555\">{v}</text>",
            x = fmt2(plot_l - 6.0),
            y = fmt2(yp + 4.0),
            v = fmt_tick(yv)
        );
    }

    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"#333333\" stroke-width=\"1.5\"/>",
        l = fmt2(plot_l),
        r = fmt2(plot_r),
        b = fmt2(plot_b)
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"#333333\" stroke-width=\"1.5\"/>",
        l = fmt2(plot_l),
        t = fmt2(plot_t),
        b = fmt2(plot_b)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{x}\" y=\"{y}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#222222\">{v}</text>",
        x = fmt2((plot_l + plot_r) / 2.0),
        y = fmt2(h - 14.0),
        v = escape(&spec.x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"18\" y=\"{y}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#222222\" transform=\"rotate(-90 18 {y})\">{v}</text>",
        y = fmt2((plot_t + plot_b) / 2.0),
        v = escape(&spec.y_label)
    );

    // series bands, lines, markers
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = s.points.clone();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if spec.show_ci && pts.iter().any(|p| p.2 > 0.0) {
            let mut poly = String::new();
            for p in &pts {
                let _ = write!(poly, "{},{} ", fmt2(px(p.0)), fmt2(py(p.1 + p.2)));
            }
            for p in pts.iter().rev() {
                let _ = write!(poly, "{},{} ", fmt2(px(p.0)), fmt2(py(p.1 - p.2)));
            }
            let _ = writeln!(
                svg,
                "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.14\" stroke=\"none\"/>",
                poly.trim_end(),
                color
            );
        }
        let mut line = String::new();
        for p in &pts {
            let _ = write!(line, "{},{} ", fmt2(px(p.0)), fmt2(py(p.1)));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
            line.trim_end(),
            color
        );
        for p in &pts {
            let _ = writeln!(
                svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\"/>",
                fmt2(px(p.0)),
                fmt2(py(p.1)),
                color
            );
        }
    }

    // legend
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = plot_t + 8.0 + i as f64 * 18.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{c}\" stroke-width=\"2\"/>",
            x1 = fmt2(plot_r + 10.0),
            x2 = fmt2(plot_r + 30.0),
            y = fmt2(y),
            c = color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" font-size=\"11\" fill=\"#222222\">{v}</text>",
            x = fmt2(plot_r + 36.0),
            y = fmt2(y + 4.0),
            v = escape(&s.name)
        );
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Renders and writes the chart to `path`.
pub fn write_chart(
    path: &Path,
    series: &[ChartSeries],
    spec: &ChartSpec,
) -> Result<(), ChartError> {
    let svg = render_chart(series, spec)?;
    std::fs::write(path, svg)?;
    Ok(())
}
