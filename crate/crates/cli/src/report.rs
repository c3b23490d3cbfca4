//! Width table and SVG overlays.

use std::fmt::Write as _;

use reachzono::setalg::{outline_2d, IntervalBox, Zonotope};
use reachzono::Result;
use serde::{Deserialize, Serialize};

pub const OUTLINE_DIRECTIONS: usize = 64;
const CANVAS: f64 = 480.0;
const MARGIN: f64 = 24.0;

/// One row of the table: mean interval-hull widths and the per-step
/// coverage of the calibrated surrogate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub step: usize,
    pub mc_width: f64,
    pub model_width: f64,
    pub tf_q_width: f64,
    pub dd_width: f64,
    pub coverage: f64,
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut s = String::from("step,mc_width,model_width,tf_q_width,dd_width,coverage\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.step, r.mc_width, r.model_width, r.tf_q_width, r.dd_width, r.coverage
        );
    }
    s
}

pub struct Layer<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub set: &'a Zonotope,
}

fn plane(z: &Zonotope) -> Result<Zonotope> {
    if z.dim() == 2 {
        Ok(z.clone())
    } else {
        z.project(&[0, 1])
    }
}

struct Frame {
    lo: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        Frame {
            lo,
            scale: (CANVAS - 2.0 * MARGIN) / span,
        }
    }

    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.lo[0]) * self.scale,
            CANVAS - MARGIN - (p[1] - self.lo[1]) * self.scale,
        )
    }
}

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="16" font-family="sans-serif" font-size="12">{title}</text>"#
    );
}

/// Outlines of 2-D sets (first two output coordinates) plus sample points.
pub fn step_svg(title: &str, layers: &[Layer<'_>], points: &[Vec<f64>]) -> Result<String> {
    let outlines = layers
        .iter()
        .map(|l| outline_2d(&plane(l.set)?, OUTLINE_DIRECTIONS))
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<[f64; 2]> = points.iter().filter(|p| p.len() >= 2).map(|p| [p[0], p[1]]).collect();
    let frame = Frame::fit(outlines.iter().flatten().copied().chain(pts.iter().copied()));
    let mut s = String::new();
    header(&mut s, title);
    for p in &pts {
        let (x, y) = frame.map(*p);
        let _ = writeln!(s, r##"<circle cx="{x:.2}" cy="{y:.2}" r="1.2" fill="#888"/>"##);
    }
    for (i, (layer, outline)) in layers.iter().zip(&outlines).enumerate() {
        let coords: Vec<String> = outline
            .iter()
            .map(|p| {
                let (x, y) = frame.map(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            coords.join(" "),
            layer.color
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{}">{}</text>"#,
            CANVAS - 150.0,
            32.0 + 14.0 * i as f64,
            layer.color,
            layer.label
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// One-output systems: intervals per step, one column per layer.
pub fn interval_svg(title: &str, steps: &[usize], layers: &[(&str, &str, Vec<IntervalBox>)]) -> String {
    let lo = layers
        .iter()
        .flat_map(|(_, _, b)| b.iter().map(|i| i.lower()[0]))
        .fold(f64::INFINITY, f64::min);
    let hi = layers
        .iter()
        .flat_map(|(_, _, b)| b.iter().map(|i| i.upper()[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = (CANVAS - 2.0 * MARGIN) / (hi - lo).max(1e-12);
    let col = (CANVAS - 2.0 * MARGIN) / steps.len().max(1) as f64;
    let y = |v: f64| CANVAS - MARGIN - (v - lo) * scale;
    let mut s = String::new();
    header(&mut s, title);
    for (j, (label, color, boxes)) in layers.iter().enumerate() {
        for (i, b) in boxes.iter().enumerate() {
            let x = MARGIN + col * (i as f64 + (j as f64 + 1.0) / (layers.len() as f64 + 1.0));
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" x2="{x:.2}" y1="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="3"/>"#,
                y(b.lower()[0]),
                y(b.upper()[0])
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{label}</text>"#,
            CANVAS - 150.0,
            32.0 + 14.0 * j as f64
        );
    }
    for (i, step) in steps.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" font-family="sans-serif" font-size="10">k={step}</text>"#,
            MARGIN + col * i as f64,
            CANVAS - 6.0
        );
    }
    s.push_str("</svg>\n");
    s
}
