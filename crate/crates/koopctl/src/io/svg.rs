//! Minimal SVG 1.1 line plots.

use std::fmt::Write;
use std::path::Path;

use super::{write_file, IoError, IoResult};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// A labeled sequence of `(x, y)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotStyle {
    pub width: u32,
    pub height: u32,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub stroke_width: f64,
}

impl Default for PlotStyle {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            title: String::new(),
            x_label: "x1".into(),
            y_label: "x2".into(),
            stroke_width: 1.5,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Rounds to four decimals; keeps the output short and stable.
fn fmt(v: f64) -> String {
    let r = (v * 1e4).round() / 1e4;
    if r == 0.0 {
        "0".into()
    } else {
        r.to_string()
    }
}

fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Renders the series as a standalone document. Non-finite points are
/// dropped.
pub fn render_svg(series: &[Series], style: &PlotStyle) -> IoResult<String> {
    if series.is_empty() {
        return Err(IoError::Empty("no series to plot"));
    }
    let finite = |&&(x, y): &&(f64, f64)| x.is_finite() && y.is_finite();
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().filter(finite).copied())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = all.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &(x, y)| (a.min(x), b.max(x), c.min(y), d.max(y)),
    );
    if all.is_empty() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    for (lo, hi) in [(&mut x0, &mut x1), (&mut y0, &mut y1)] {
        let pad = if *hi > *lo { 0.05 * (*hi - *lo) } else { 1.0 };
        *lo -= pad;
        *hi += pad;
    }

    let (w, h) = (f64::from(style.width), f64::from(style.height));
    let (left, right, top, bottom) = (70.0, 20.0, 40.0, 55.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        style.width, style.height, style.width, style.height
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, style.width, style.height);
    if !style.title.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
            fmt(w / 2.0),
            escape(&style.title)
        );
    }

    // axes and ticks
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black" stroke-width="1" fill="none"><rect x="{}" y="{}" width="{}" height="{}"/></g>"#,
        fmt(left),
        fmt(top),
        fmt(pw),
        fmt(ph)
    );
    let _ = writeln!(out, r#"<g class="ticks" font-family="sans-serif" font-size="11">"#);
    let xs = tick_step(x1 - x0);
    let mut t = (x0 / xs).ceil() * xs;
    while t <= x1 {
        let px = fmt(sx(t));
        let _ = writeln!(
            out,
            r#"<line x1="{px}" y1="{}" x2="{px}" y2="{}" stroke="black"/><text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
            fmt(top + ph),
            fmt(top + ph + 5.0),
            fmt(top + ph + 18.0),
            fmt(t)
        );
        t += xs;
    }
    let ys = tick_step(y1 - y0);
    let mut t = (y0 / ys).ceil() * ys;
    while t <= y1 {
        let py = fmt(sy(t));
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py}" x2="{}" y2="{py}" stroke="black"/><text x="{}" y="{py}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            fmt(left - 5.0),
            fmt(left),
            fmt(left - 8.0),
            fmt(t)
        );
        t += ys;
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        fmt(left + pw / 2.0),
        fmt(h - 12.0),
        escape(&style.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {})">{}</text>"#,
        fmt(top + ph / 2.0),
        fmt(top + ph / 2.0),
        escape(&style.y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(finite)
            .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="{}" points="{}"/>"#,
            fmt(style.stroke_width),
            pts.join(" ")
        );
    }

    // legend
    let _ = writeln!(out, r#"<g class="legend" font-family="sans-serif" font-size="12">"#);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}" dominant-baseline="middle">{}</text>"#,
            fmt(left + pw - 130.0),
            fmt(y),
            fmt(left + pw - 110.0),
            fmt(y),
            fmt(left + pw - 104.0),
            fmt(y),
            escape(&s.label)
        );
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_plot_svg(series: &[Series], style: &PlotStyle, path: &Path) -> IoResult<()> {
    let text = render_svg(series, style)?;
    write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(label: &str) -> Series {
        Series {
            label: label.into(),
            points: vec![(0.0, 0.0), (1.0, 2.0)],
        }
    }

    #[test]
    fn one_series_one_polyline() {
        let svg = render_svg(&[line("a")], &PlotStyle::default()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn empty_list_rejected() {
        assert!(matches!(render_svg(&[], &PlotStyle::default()), Err(IoError::Empty(_))));
    }

    #[test]
    fn deterministic_and_escaped() {
        let s = [line("open <loop>"), line("closed & done")];
        let a = render_svg(&s, &PlotStyle::default()).unwrap();
        let b = render_svg(&s, &PlotStyle::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("open &lt;loop&gt;"));
        assert!(a.contains("closed &amp; done"));
        assert_eq!(a.matches("<polyline").count(), 2);
    }

    #[test]
    fn degenerate_ranges_render() {
        let s = Series {
            label: "p".into(),
            points: vec![(1.0, 1.0), (1.0, 1.0), (f64::NAN, 0.0)],
        };
        let svg = render_svg(&[s], &PlotStyle::default()).unwrap();
        assert!(!svg.contains("NaN"));
    }
}
