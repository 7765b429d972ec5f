//! Deterministic SVG scatter plots of gaze predictions.
//!
//! Conventions: `+` marks ground-truth dots, filled circles the network
//! predictions, a downward triangle the per-dot prediction centroid, and
//! a star the camera at the origin. Predictions share the color of their
//! dot's `+`; optional segments connect base predictions to their
//! personalized counterparts. Output is byte-deterministic for a given
//! scene.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::EvalError;

/// 16-color palette; dots are assigned by a stable hash of `dot_id`.
const PALETTE: [&str; 16] = [
    "#e6194b", "#3cb44b", "#ffe119", "#4363d8", "#f58231", "#911eb4", "#46f0f0", "#f032e6",
    "#bcf60c", "#fabebe", "#008080", "#e6beff", "#9a6324", "#800000", "#aaffc3", "#808000",
];

fn dot_color(dot_id: i64) -> &'static str {
    // FNV-1a over the little-endian bytes.
    let mut h: u32 = 0x811c9dc5;
    for b in dot_id.to_le_bytes() {
        h ^= b as u32;
        h = h.wrapping_mul(0x01000193);
    }
    PALETTE[(h % 16) as usize]
}

/// Scene contents in gaze centimeters (camera at the origin).
#[derive(Debug, Clone, Default)]
pub struct ScatterScene {
    /// Unique ground-truth dots: (dot_id, x_cm, y_cm).
    pub truths: Vec<(i64, f64, f64)>,
    /// Predictions: (dot_id, x_cm, y_cm).
    pub predictions: Vec<(i64, f64, f64)>,
    /// Optional base -> personalized correction segments.
    pub corrections: Vec<([f64; 2], [f64; 2])>,
}

impl ScatterScene {
    pub fn is_empty(&self) -> bool {
        self.truths.is_empty() && self.predictions.is_empty()
    }

    /// Arithmetic mean of predictions per dot.
    pub fn centroids(&self) -> BTreeMap<i64, (f64, f64)> {
        let mut acc: BTreeMap<i64, (f64, f64, usize)> = BTreeMap::new();
        for &(dot, x, y) in &self.predictions {
            let e = acc.entry(dot).or_insert((0.0, 0.0, 0));
            e.0 += x;
            e.1 += y;
            e.2 += 1;
        }
        acc.into_iter()
            .map(|(dot, (sx, sy, n))| (dot, (sx / n as f64, sy / n as f64)))
            .collect()
    }
}

const VIEW: f64 = 640.0;
const MARGIN: f64 = 40.0;

struct Mapper {
    scale: f64,
    x0: f64,
    y0: f64,
    cx: f64,
    cy: f64,
}

impl Mapper {
    fn new(scene: &ScatterScene) -> Mapper {
        // Bounds over every mark, always including the camera origin.
        let mut min_x: f64 = 0.0;
        let mut max_x: f64 = 0.0;
        let mut min_y: f64 = 0.0;
        let mut max_y: f64 = 0.0;
        let mut visit = |x: f64, y: f64| {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        };
        for &(_, x, y) in scene.truths.iter().chain(&scene.predictions) {
            visit(x, y);
        }
        for &(a, b) in &scene.corrections {
            visit(a[0], a[1]);
            visit(b[0], b[1]);
        }
        let span = (max_x - min_x).max(max_y - min_y).max(1e-6);
        let scale = (VIEW - 2.0 * MARGIN) / span;
        Mapper {
            scale,
            x0: (min_x + max_x) / 2.0,
            y0: (min_y + max_y) / 2.0,
            cx: VIEW / 2.0,
            cy: VIEW / 2.0,
        }
    }

    /// Gaze cm to viewport px; gaze y grows downward, as does SVG y.
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.cx + (x - self.x0) * self.scale,
            self.cy + (y - self.y0) * self.scale,
        )
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Renders the scene as an SVG 1.1 document.
pub fn render_scatter(scene: &ScatterScene) -> Result<String, EvalError> {
    if scene.is_empty() {
        return Err(EvalError::EmptyInput("render_scatter"));
    }
    let m = Mapper::new(scene);
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{VIEW}" height="{VIEW}" viewBox="0 0 {VIEW} {VIEW}">"#
    )
    .unwrap();
    writeln!(
        svg,
        r#"<rect width="{VIEW}" height="{VIEW}" fill="white"/>"#
    )
    .unwrap();

    for &(a, b) in &scene.corrections {
        let (x1, y1) = m.map(a[0], a[1]);
        let (x2, y2) = m.map(b[0], b[1]);
        writeln!(
            svg,
            r##"<line class="link" x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999999" stroke-width="0.6"/>"##,
            fmt(x1),
            fmt(y1),
            fmt(x2),
            fmt(y2)
        )
        .unwrap();
    }

    for &(dot, x, y) in &scene.predictions {
        let (px, py) = m.map(x, y);
        writeln!(
            svg,
            r#"<circle class="pred" cx="{}" cy="{}" r="2.5" fill="{}" fill-opacity="0.75"/>"#,
            fmt(px),
            fmt(py),
            dot_color(dot)
        )
        .unwrap();
    }

    for (dot, (x, y)) in scene.centroids() {
        let (px, py) = m.map(x, y);
        let s = 5.0;
        writeln!(
            svg,
            r#"<path class="centroid" d="M {} {} L {} {} L {} {} Z" fill="{}" stroke="black" stroke-width="0.5"/>"#,
            fmt(px - s),
            fmt(py - s),
            fmt(px + s),
            fmt(py - s),
            fmt(px),
            fmt(py + s),
            dot_color(dot)
        )
        .unwrap();
    }

    for &(dot, x, y) in &scene.truths {
        let (px, py) = m.map(x, y);
        let s = 5.0;
        writeln!(
            svg,
            r#"<path class="truth" d="M {} {} H {} M {} {} V {}" stroke="{}" stroke-width="1.8" fill="none"/>"#,
            fmt(px - s),
            fmt(py),
            fmt(px + s),
            fmt(px),
            fmt(py - s),
            fmt(py + s),
            dot_color(dot)
        )
        .unwrap();
    }

    // Camera star at the gaze origin.
    let (sx, sy) = m.map(0.0, 0.0);
    let star = star_path(sx, sy, 7.0, 3.0);
    writeln!(
        svg,
        r#"<path class="camera" d="{star}" fill="black"/>"#
    )
    .unwrap();

    svg.push_str("</svg>\n");
    Ok(svg)
}

fn star_path(cx: f64, cy: f64, outer: f64, inner: f64) -> String {
    let mut d = String::new();
    for i in 0..10 {
        let r = if i % 2 == 0 { outer } else { inner };
        let angle = std::f64::consts::PI * (i as f64 / 5.0) - std::f64::consts::FRAC_PI_2;
        let (x, y) = (cx + r * angle.cos(), cy + r * angle.sin());
        if i == 0 {
            write!(d, "M {} {}", fmt(x), fmt(y)).unwrap();
        } else {
            write!(d, " L {} {}", fmt(x), fmt(y)).unwrap();
        }
    }
    d.push_str(" Z");
    d
}
