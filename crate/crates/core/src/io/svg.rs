//! Standalone SVG plots with a fixed layout and palette.
//!
//! Output depends only on the input data: coordinates are printed with two
//! decimals and no timestamps or random ids are emitted.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const W: f64 = 480.0;
const H: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 48.0;
const TICKS: usize = 5;

const INK: &str = "#222222";
const GRIDLINE: &str = "#dddddd";
const PRIMARY: &str = "#1f77b4";
const SECONDARY: &str = "#d62728";
const BAND: &str = "#aec7e8";
/// Colour ramp for heatmaps, low to high.
const RAMP: [(u8, u8, u8); 5] = [(68, 1, 84), (59, 82, 139), (33, 145, 140), (94, 201, 98), (253, 231, 37)];

#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl Axes {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self { title: title.into(), x_label: x_label.into(), y_label: y_label.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plot {
    /// `values[i * ys.len() + j]` is drawn at `(xs[i], ys[j])`.
    Heatmap { axes: Axes, xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64> },
    Histogram { axes: Axes, samples: Vec<f64>, bins: usize },
    /// Points listed in `highlight` are drawn as stars.
    Scatter { axes: Axes, points: Vec<(f64, f64)>, highlight: Vec<usize> },
    /// A line with an optional symmetric band of half-widths.
    LineBand { axes: Axes, xs: Vec<f64>, ys: Vec<f64>, band: Option<Vec<f64>> },
    /// Cumulative return of a successful (x) against a failing (y) episode, with the diagonal.
    RaceCurve { axes: Axes, points: Vec<(f64, f64)> },
    /// Before/after pairs: an empty circle at the start, a filled one at the end.
    Arrows { axes: Axes, pairs: Vec<((f64, f64), (f64, f64))> },
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn check(values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite("plot data"))
    }
}

fn extent(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

struct Doc {
    out: String,
}

impl Doc {
    fn new() -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">"
        );
        let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"#ffffff\"/>");
        Self { out }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, extra: &str) {
        let _ = writeln!(
            self.out,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\"{extra}/>"
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, body: &str, extra: &str) {
        let _ = writeln!(
            self.out,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" text-anchor=\"{anchor}\" fill=\"{INK}\"{extra}>{}</text>",
            escape(body)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, extra: &str) {
        if pts.is_empty() {
            return;
        }
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"{extra}/>",
            coords.join(" ")
        );
    }

    fn axes(&mut self, f: &Frame, axes: &Axes) {
        for k in 0..TICKS {
            let t = k as f64 / (TICKS - 1) as f64;
            let xv = f.x.0 + t * (f.x.1 - f.x.0);
            let yv = f.y.0 + t * (f.y.1 - f.y.0);
            let (x, y) = (f.px(xv), f.py(yv));
            self.line(x, TOP, x, H - BOTTOM, GRIDLINE, "");
            self.line(LEFT, y, W - RIGHT, y, GRIDLINE, "");
            self.text(x, H - BOTTOM + 14.0, "middle", &tick_label(xv), "");
            self.text(LEFT - 4.0, y + 4.0, "end", &tick_label(yv), "");
        }
        let _ = writeln!(
            self.out,
            "<rect x=\"{LEFT:.2}\" y=\"{TOP:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"{INK}\"/>",
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        self.text(W / 2.0, 18.0, "middle", &axes.title, " font-size=\"13\"");
        self.text((LEFT + W - RIGHT) / 2.0, H - 12.0, "middle", &axes.x_label, "");
        let cy = (TOP + H - BOTTOM) / 2.0;
        self.text(14.0, cy, "middle", &axes.y_label, &format!(" transform=\"rotate(-90 14 {cy:.2})\""));
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (t.floor() as usize).min(RAMP.len() - 2);
    let f = t - i as f64;
    let mix = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Half-spacing of a sorted coordinate axis, used as the cell half-width.
fn half_step(v: &[f64]) -> f64 {
    if v.len() < 2 {
        0.5
    } else {
        (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64 / 2.0
    }
}

fn heatmap(axes: &Axes, xs: &[f64], ys: &[f64], values: &[f64]) -> Result<String> {
    check(xs.iter().chain(ys).chain(values).copied())?;
    if values.len() != xs.len() * ys.len() {
        return Err(Error::Dimension { expected: xs.len() * ys.len(), got: values.len() });
    }
    let (hx, hy) = (half_step(xs), half_step(ys));
    let f = Frame {
        x: extent(xs.iter().flat_map(|x| [x - hx, x + hx])),
        y: extent(ys.iter().flat_map(|y| [y - hy, y + hy])),
    };
    let (lo, hi) = extent(values.iter().copied());
    let mut d = Doc::new();
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let v = values[i * ys.len() + j];
            let (x0, x1) = (f.px(x - hx), f.px(x + hx));
            let (y0, y1) = (f.py(y + hy), f.py(y - hy));
            let _ = writeln!(
                d.out,
                "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                x1 - x0,
                y1 - y0,
                ramp((v - lo) / (hi - lo))
            );
        }
    }
    d.axes(&f, axes);
    Ok(d.finish())
}

fn histogram(axes: &Axes, samples: &[f64], bins: usize) -> Result<String> {
    check(samples.iter().copied())?;
    let bins = bins.max(1);
    let (lo, hi) = extent(samples.iter().copied());
    let constant = samples.first().is_some_and(|a| samples.iter().all(|b| b == a));
    let nb = if constant { 1 } else { bins };
    let width = (hi - lo) / nb as f64;
    let mut counts = vec![0usize; nb];
    for &s in samples {
        let k = (((s - lo) / width).floor() as usize).min(nb - 1);
        counts[k] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let f = Frame { x: (lo, hi), y: (0.0, top) };
    let mut d = Doc::new();
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let (x0, x1) = (f.px(lo + k as f64 * width), f.px(lo + (k + 1) as f64 * width));
        let y0 = f.py(c as f64);
        let _ = writeln!(
            d.out,
            "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{PRIMARY}\" stroke=\"#ffffff\" stroke-width=\"0.5\"/>",
            x1 - x0,
            f.py(0.0) - y0
        );
    }
    d.axes(&f, axes);
    Ok(d.finish())
}

fn star(cx: f64, cy: f64, r: f64) -> String {
    let pts: Vec<String> = (0..10)
        .map(|k| {
            let rad = if k % 2 == 0 { r } else { r * 0.45 };
            let a = std::f64::consts::PI * (k as f64 / 5.0 - 0.5);
            format!("{:.2},{:.2}", cx + rad * a.cos(), cy + rad * a.sin())
        })
        .collect();
    format!("<polygon points=\"{}\" fill=\"{SECONDARY}\" stroke=\"{INK}\" stroke-width=\"0.5\"/>", pts.join(" "))
}

fn scatter(axes: &Axes, points: &[(f64, f64)], highlight: &[usize]) -> Result<String> {
    check(points.iter().flat_map(|p| [p.0, p.1]))?;
    let f = Frame { x: extent(points.iter().map(|p| p.0)), y: extent(points.iter().map(|p| p.1)) };
    let mut d = Doc::new();
    d.axes(&f, axes);
    for (i, &(x, y)) in points.iter().enumerate() {
        if highlight.contains(&i) {
            let _ = writeln!(d.out, "{}", star(f.px(x), f.py(y), 7.0));
        } else {
            let _ = writeln!(
                d.out,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{PRIMARY}\" fill-opacity=\"0.7\"/>",
                f.px(x),
                f.py(y)
            );
        }
    }
    Ok(d.finish())
}

fn line_band(axes: &Axes, xs: &[f64], ys: &[f64], band: Option<&[f64]>) -> Result<String> {
    check(xs.iter().chain(ys).chain(band.unwrap_or(&[])).copied())?;
    if xs.len() != ys.len() || band.is_some_and(|b| b.len() != ys.len()) {
        return Err(Error::Dimension { expected: xs.len(), got: ys.len() });
    }
    let lows: Vec<f64> = ys.iter().enumerate().map(|(i, y)| y - band.map_or(0.0, |b| b[i])).collect();
    let highs: Vec<f64> = ys.iter().enumerate().map(|(i, y)| y + band.map_or(0.0, |b| b[i])).collect();
    let f = Frame { x: extent(xs.iter().copied()), y: extent(lows.iter().chain(&highs).copied()) };
    let mut d = Doc::new();
    d.axes(&f, axes);
    if band.is_some() && !xs.is_empty() {
        let mut pts: Vec<String> = xs.iter().zip(&highs).map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y))).collect();
        pts.extend(xs.iter().zip(&lows).rev().map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y))));
        let _ = writeln!(d.out, "<polygon points=\"{}\" fill=\"{BAND}\" fill-opacity=\"0.6\" stroke=\"none\"/>", pts.join(" "));
    }
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (f.px(*x), f.py(*y))).collect();
    d.polyline(&pts, PRIMARY, "");
    Ok(d.finish())
}

fn race(axes: &Axes, points: &[(f64, f64)]) -> Result<String> {
    check(points.iter().flat_map(|p| [p.0, p.1]))?;
    let (lo, hi) = extent(points.iter().flat_map(|p| [p.0, p.1]).chain([0.0]));
    let f = Frame { x: (lo, hi), y: (lo, hi) };
    let mut d = Doc::new();
    d.axes(&f, axes);
    d.line(f.px(lo), f.py(lo), f.px(hi), f.py(hi), INK, " stroke-dasharray=\"4 3\"");
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| (f.px(*x), f.py(*y))).collect();
    d.polyline(&pts, SECONDARY, "");
    Ok(d.finish())
}

fn arrows(axes: &Axes, pairs: &[((f64, f64), (f64, f64))]) -> Result<String> {
    check(pairs.iter().flat_map(|(a, b)| [a.0, a.1, b.0, b.1]))?;
    let f = Frame {
        x: extent(pairs.iter().flat_map(|(a, b)| [a.0, b.0])),
        y: extent(pairs.iter().flat_map(|(a, b)| [a.1, b.1])),
    };
    let mut d = Doc::new();
    d.axes(&f, axes);
    for ((x0, y0), (x1, y1)) in pairs {
        d.line(f.px(*x0), f.py(*y0), f.px(*x1), f.py(*y1), PRIMARY, " stroke-width=\"1.2\"");
        let _ = writeln!(
            d.out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#ffffff\" stroke=\"{PRIMARY}\"/>",
            f.px(*x0),
            f.py(*y0)
        );
        let _ = writeln!(d.out, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{PRIMARY}\"/>", f.px(*x1), f.py(*y1));
    }
    Ok(d.finish())
}

/// Renders `plot` as a standalone SVG document.
pub fn emit_svg(plot: &Plot) -> Result<String> {
    match plot {
        Plot::Heatmap { axes, xs, ys, values } => heatmap(axes, xs, ys, values),
        Plot::Histogram { axes, samples, bins } => histogram(axes, samples, *bins),
        Plot::Scatter { axes, points, highlight } => scatter(axes, points, highlight),
        Plot::LineBand { axes, xs, ys, band } => line_band(axes, xs, ys, band.as_deref()),
        Plot::RaceCurve { axes, points } => race(axes, points),
        Plot::Arrows { axes, pairs } => arrows(axes, pairs),
    }
}
