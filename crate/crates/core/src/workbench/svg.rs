use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::Partition;
use crate::kernels::Dataset;
use crate::workbench::io::write_atomic;

pub const SVG_WIDTH: f64 = 640.0;
pub const SVG_HEIGHT: f64 = 480.0;
const MARGIN: f64 = 24.0;
const RADIUS: f64 = 3.0;

/// Label colors, reused cyclically past the tenth class.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Renders a 2-D scatter with one colored circle per sample.
pub fn render_scatter_svg(x: &Dataset, labels: &Partition) -> Result<String> {
    if x.features() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: x.features(),
        });
    }
    if labels.len() != x.samples() {
        return Err(Error::DimensionMismatch {
            expected: x.samples(),
            actual: labels.len(),
        });
    }
    let v = x.values();
    let range = |r: usize| {
        let row = v.row(r);
        let (lo, hi) = (row.min(), row.max());
        if hi > lo { (lo, hi - lo) } else { (lo - 0.5, 1.0) }
    };
    let (x0, xs) = range(0);
    let (y0, ys) = range(1);
    // One scale on both axes so shapes are not distorted.
    let scale = ((SVG_WIDTH - 2.0 * MARGIN) / xs).min((SVG_HEIGHT - 2.0 * MARGIN) / ys);
    let ox = (SVG_WIDTH - xs * scale) / 2.0;
    let oy = (SVG_HEIGHT - ys * scale) / 2.0;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = SVG_WIDTH,
        h = SVG_HEIGHT
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (j, &label) in labels.labels().iter().enumerate() {
        let px = ox + (v[(0, j)] - x0) * scale;
        // SVG y grows downward.
        let py = SVG_HEIGHT - (oy + (v[(1, j)] - y0) * scale);
        let _ = writeln!(
            out,
            r#"<circle cx="{px:.3}" cy="{py:.3}" r="{RADIUS}" fill="{}"/>"#,
            PALETTE[label % PALETTE.len()]
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_scatter_svg(x: &Dataset, labels: &Partition, path: &Path) -> Result<()> {
    write_atomic(path, render_scatter_svg(x, labels)?.as_bytes())
}
