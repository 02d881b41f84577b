//! Minimal SVG scatter plots for comparing point sets.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::motion_model::Point2;

pub const MAX_LAYERS: usize = 4;

const PALETTE: [&str; MAX_LAYERS] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];
const WIDTH: f64 = 800.0;
const MARGIN: f64 = 20.0;
const LEGEND_ROW: f64 = 18.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub label: String,
    pub points: Vec<Point2>,
}

impl Layer {
    pub fn new(label: impl Into<String>, points: Vec<Point2>) -> Self {
        Layer {
            label: label.into(),
            points,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders up to four layers, fitting the view to their common bounding box.
/// World y points up; SVG y points down, so y is flipped.
pub fn render_svg(layers: &[Layer]) -> Result<String> {
    if layers.is_empty() {
        return Err(Error::invalid("nothing to render"));
    }
    if layers.len() > MAX_LAYERS {
        return Err(Error::invalid(format!("at most {MAX_LAYERS} layers, got {}", layers.len())));
    }
    if let Some(l) = layers.iter().find(|l| l.points.is_empty()) {
        return Err(Error::invalid(format!("layer `{}` has no points", l.label)));
    }
    let all = layers.iter().flat_map(|l| l.points.iter());
    if all.clone().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::invalid("non-finite point"));
    }
    let (mut lo, mut hi) = (Point2::repeat(f64::INFINITY), Point2::repeat(f64::NEG_INFINITY));
    for p in all {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let span = (hi - lo).map(|d| d.max(1e-3));
    let scale = (WIDTH - 2.0 * MARGIN) / span.x.max(span.y);
    let legend_h = LEGEND_ROW * layers.len() as f64 + MARGIN;
    let width = WIDTH;
    let height = span.y * scale + 2.0 * MARGIN + legend_h;
    let to_px = |p: &Point2| {
        (
            MARGIN + (p.x - lo.x) * scale,
            legend_h + MARGIN + (hi.y - p.y) * scale,
        )
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.2} {height:.2}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, layer) in layers.iter().enumerate() {
        let color = PALETTE[k];
        let _ = writeln!(s, r#"<g id="layer{k}" fill="{color}" fill-opacity="0.7">"#);
        for p in &layer.points {
            let (x, y) = to_px(p);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, r#"<g id="legend" font-family="sans-serif" font-size="12">"#);
    for (k, layer) in layers.iter().enumerate() {
        let y = MARGIN + LEGEND_ROW * k as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            y - 9.0,
            PALETTE[k],
            MARGIN + 16.0,
            y,
            escape(&layer.label)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(offset: f64) -> Vec<Point2> {
        vec![
            Point2::new(offset, offset),
            Point2::new(1.0 + offset, offset),
            Point2::new(1.0 + offset, 1.0 + offset),
        ]
    }

    #[test]
    fn three_layers_with_legend() {
        let layers = [
            Layer::new("skewed", square(0.3)),
            Layer::new("deskewed", square(0.01)),
            Layer::new("truth", square(0.0)),
        ];
        let svg = render_svg(&layers).unwrap();
        assert_eq!(svg.matches("<circle").count(), 9);
        for k in 0..3 {
            assert!(svg.contains(&format!("id=\"layer{k}\"")));
        }
        assert!(svg.contains(">deskewed</text>"));
        assert_eq!(svg, render_svg(&layers).unwrap());
    }

    #[test]
    fn y_axis_is_flipped() {
        let svg = render_svg(&[Layer::new("a", vec![Point2::new(0.0, 0.0), Point2::new(0.0, 1.0)])]).unwrap();
        let ys: Vec<f64> = svg
            .lines()
            .filter(|l| l.starts_with("<circle"))
            .map(|l| l.split("cy=\"").nth(1).unwrap().split('"').next().unwrap().parse().unwrap())
            .collect();
        assert!(ys[0] > ys[1]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(render_svg(&[]).is_err());
        assert!(render_svg(&[Layer::new("e", vec![])]).is_err());
        let five: Vec<Layer> = (0..5).map(|k| Layer::new(k.to_string(), square(0.0))).collect();
        assert!(render_svg(&five).is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let svg = render_svg(&[Layer::new("a<b>&c", square(0.0))]).unwrap();
        assert!(svg.contains("a&lt;b&gt;&amp;c"));
    }
}
