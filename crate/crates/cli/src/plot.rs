//! Minimal SVG line plots.
//!
//! Coordinates are written with two decimals so figures can be compared
//! structurally in tests.

use std::fmt::Write;

pub const PANEL_WIDTH: f64 = 640.0;
pub const PANEL_HEIGHT: f64 = 120.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 24.0;
const GAP: f64 = 30.0;

pub const GRAY: &str = "#b0b0b0";
pub const BLACK: &str = "#000000";
pub const BLUE: &str = "#1f77b4";
pub const RED: &str = "#d62728";

#[derive(Debug, Clone)]
pub struct Series {
    pub values: Vec<f64>,
    pub color: &'static str,
    pub stroke_width: f64,
}

impl Series {
    pub fn new(values: Vec<f64>, color: &'static str) -> Self {
        Series {
            values,
            color,
            stroke_width: 1.0,
        }
    }

    pub fn thin(values: Vec<f64>, color: &'static str) -> Self {
        Series {
            values,
            color,
            stroke_width: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
}

impl Panel {
    pub fn new(title: impl Into<String>) -> Self {
        Panel {
            title: title.into(),
            series: Vec::new(),
        }
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    fn y_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in self.series.iter().flat_map(|s| &s.values) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        if !lo.is_finite() {
            return (-1.0, 1.0);
        }
        if hi - lo < 1e-300 {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            return (lo - pad, hi + pad);
        }
        (lo, hi)
    }
}

/// A grid of panels sharing one wavelength axis, laid out column by column.
#[derive(Debug, Clone)]
pub struct Figure {
    pub wavelengths: Vec<f64>,
    pub columns: Vec<Vec<Panel>>,
}

/// Maps data to pixel coordinates inside one panel.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub left: f64,
    pub top: f64,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Frame {
    pub fn x(&self, wavelength: f64) -> f64 {
        let (a, b) = self.x_range;
        self.left + (wavelength - a) / (b - a) * PANEL_WIDTH
    }

    pub fn y(&self, value: f64) -> f64 {
        let (lo, hi) = self.y_range;
        self.top + (hi - value) / (hi - lo) * PANEL_HEIGHT
    }
}

/// Polyline `points` attribute for one series.
pub fn polyline_points(frame: &Frame, wavelengths: &[f64], values: &[f64]) -> String {
    let mut out = String::new();
    for (i, (&w, &v)) in wavelengths.iter().zip(values).enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{:.2},{:.2}", frame.x(w), frame.y(v)).unwrap();
    }
    out
}

impl Figure {
    pub fn new(wavelengths: Vec<f64>) -> Self {
        Figure {
            wavelengths,
            columns: Vec::new(),
        }
    }

    fn column_width() -> f64 {
        MARGIN_LEFT + PANEL_WIDTH + MARGIN_RIGHT
    }

    fn row_height() -> f64 {
        MARGIN_TOP + PANEL_HEIGHT + GAP
    }

    /// Frame of the panel at (`column`, `row`).
    pub fn frame(&self, column: usize, row: usize) -> Frame {
        let panel = &self.columns[column][row];
        let first = self.wavelengths.first().copied().unwrap_or(0.0);
        let last = self.wavelengths.last().copied().unwrap_or(1.0);
        Frame {
            left: column as f64 * Self::column_width() + MARGIN_LEFT,
            top: row as f64 * Self::row_height() + MARGIN_TOP,
            x_range: if last > first {
                (first, last)
            } else {
                (first, first + 1.0)
            },
            y_range: panel.y_range(),
        }
    }

    pub fn to_svg(&self) -> String {
        let rows = self.columns.iter().map(Vec::len).max().unwrap_or(0);
        let width = self.columns.len() as f64 * Self::column_width();
        let height = rows as f64 * Self::row_height() + GAP;
        let mut s = String::new();
        writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
        )
        .unwrap();
        writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
        for (c, column) in self.columns.iter().enumerate() {
            for (r, panel) in column.iter().enumerate() {
                self.write_panel(&mut s, c, r, panel);
            }
        }
        s.push_str("</svg>\n");
        s
    }

    fn write_panel(&self, s: &mut String, column: usize, row: usize, panel: &Panel) {
        let f = self.frame(column, row);
        writeln!(s, "<g>").unwrap();
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            f.left,
            f.top - 6.0,
            escape(&panel.title)
        )
        .unwrap();
        writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{PANEL_WIDTH:.2}" height="{PANEL_HEIGHT:.2}" fill="none" stroke="{BLACK}" stroke-width="0.5"/>"#,
            f.left, f.top
        )
        .unwrap();
        let (lo, hi) = f.y_range;
        if lo < 0.0 && hi > 0.0 {
            let y0 = f.y(0.0);
            writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="{GRAY}" stroke-dasharray="3,3" stroke-width="0.5"/>"#,
                f.left,
                f.left + PANEL_WIDTH
            )
            .unwrap();
        }
        for (value, y) in [(hi, f.top + 4.0), (lo, f.top + PANEL_HEIGHT)] {
            writeln!(
                s,
                r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">{value:.3e}</text>"#,
                f.left - 4.0
            )
            .unwrap();
        }
        if row + 1 == self.columns[column].len() {
            let (a, b) = f.x_range;
            let y = f.top + PANEL_HEIGHT + 14.0;
            writeln!(s, r#"<text x="{:.2}" y="{y:.2}">{a:.0} Å</text>"#, f.left).unwrap();
            writeln!(
                s,
                r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">{b:.0} Å</text>"#,
                f.left + PANEL_WIDTH
            )
            .unwrap();
        }
        for series in &panel.series {
            writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="{}" points="{}"/>"#,
                series.color,
                series.stroke_width,
                polyline_points(&f, &self.wavelengths, &series.values)
            )
            .unwrap();
        }
        writeln!(s, "</g>").unwrap();
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Extracts the `points` of every polyline, in document order.
pub fn polylines(svg: &str) -> Vec<Vec<(f64, f64)>> {
    svg.lines()
        .filter(|l| l.starts_with("<polyline"))
        .filter_map(|l| {
            let start = l.find("points=\"")? + 8;
            let end = start + l[start..].find('"')?;
            Some(
                l[start..end]
                    .split(' ')
                    .filter_map(|p| {
                        let (x, y) = p.split_once(',')?;
                        Some((x.parse().ok()?, y.parse().ok()?))
                    })
                    .collect(),
            )
        })
        .collect()
}
