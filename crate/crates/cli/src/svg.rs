//! Static scatter plot of 2-d clouds inside the ball boundary.

use std::fmt::Write;

use ndarray::ArrayView2;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;

/// One `<circle>` per point, colored by layer, over the boundary circle of radius `s`.
pub fn scatter(s: f64, layers: &[(&str, ArrayView2<f64>)]) -> String {
    let half = SIZE / 2.0;
    let scale = (half - MARGIN) / s;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(
        out,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        out,
        r##"<circle cx="{half}" cy="{half}" r="{:.3}" fill="none" stroke="#444444" stroke-width="1"/>"##,
        half - MARGIN
    );
    for (color, points) in layers {
        let _ = writeln!(out, r#"<g fill="{color}" fill-opacity="0.7">"#);
        for p in points.rows() {
            let x = half + scale * p[0];
            let y = half - scale * p[1];
            let _ = writeln!(out, r#"<circle cx="{x:.3}" cy="{y:.3}" r="2.5"/>"#);
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}
