//! Debug scatter plots of 2D point sets. Not meant for figures.

use std::fmt::Write as _;

const SIZE: f64 = 400.0;

/// Renders each `(points, color)` layer as dots in a square view of
/// `[-extent, extent]²`, y pointing up.
pub fn scatter(layers: &[(&[[f64; 2]], &str)], extent: f64) -> String {
    let to_px = |v: f64| (v + extent) / (2.0 * extent) * SIZE;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (points, color) in layers {
        let _ = writeln!(s, "<g fill=\"{color}\" fill-opacity=\"0.6\">");
        for p in points.iter() {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"1.2\"/>",
                to_px(p[0]),
                SIZE - to_px(p[1])
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
