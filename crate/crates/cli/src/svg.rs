//! Heatmaps of scalar fields as plain SVG.

use std::fmt::Write as _;

use diffusion_core::ScalarField;

/// Number of discrete colour levels.
pub const LEVELS: usize = 16;

const LOW: [f64; 3] = [68.0, 1.0, 84.0];
const MID: [f64; 3] = [33.0, 145.0, 140.0];
const HIGH: [f64; 3] = [253.0, 231.0, 37.0];

/// Level of a value, clamped to `[0, 1]`; 1.0 maps to the top level.
pub fn level(v: f64) -> usize {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    ((v * LEVELS as f64) as usize).min(LEVELS - 1)
}

pub fn level_color(level: usize) -> String {
    let s = level as f64 / (LEVELS - 1) as f64;
    let (a, b, w) = if s < 0.5 { (LOW, MID, 2.0 * s) } else { (MID, HIGH, 2.0 * s - 1.0) };
    let c: Vec<u8> = (0..3).map(|i| (a[i] + (b[i] - a[i]) * w).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// N×N grid of rects, row `j1` drawn top to bottom, linear map over [0, 1].
pub fn render_heatmap(field: &ScalarField, cell_px: usize) -> String {
    let g = field.grid();
    let n = g.n();
    let rows = if g.dim() == 2 { n } else { 1 };
    let (w, h) = (n * cell_px, rows * cell_px);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" shape-rendering="crispEdges">"#
    )
    .unwrap();
    for (idx, v) in field.values().iter().enumerate() {
        let (r, c) = (idx / n, idx % n);
        writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{cell_px}" height="{cell_px}" fill="{}"/>"#,
            c * cell_px,
            r * cell_px,
            level_color(level(*v))
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
