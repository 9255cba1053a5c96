//! SVG heatmaps of decision features: a grid of cells under a diverging
//! color map, positive weights in red, negative in blue, zero in white,
//! scaled symmetrically about zero at the largest absolute weight.

use crate::error::{Error, Result};
use crate::interpret::DecisionFeatures;

const CELL: usize = 16;

/// Renders `features` as an `rows x cols` grid (row-major). The product of
/// the shape must equal the feature dimension.
pub fn render_heatmap(features: &DecisionFeatures, rows: usize, cols: usize) -> Result<String> {
    if rows * cols != features.dim() {
        return Err(Error::DimensionMismatch {
            expected: features.dim(),
            got: rows * cols,
        });
    }
    let scale = features
        .weights
        .iter()
        .map(|w| w.abs())
        .fold(0.0f64, f64::max);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
         viewBox=\"0 0 {} {}\">\n",
        cols * CELL,
        rows * CELL,
        cols * CELL,
        rows * CELL
    ));
    for row in 0..rows {
        for col in 0..cols {
            let value = features.weights[row * cols + col];
            let (r, g, b) = cell_color(value, scale);
            svg.push_str(&format!(
                "  <rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"rgb({r},{g},{b})\"/>\n",
                col * CELL,
                row * CELL
            ));
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// White at zero, saturating to pure red (positive) or blue (negative) at
/// the symmetric scale limit.
fn cell_color(value: f64, scale: f64) -> (u8, u8, u8) {
    if scale == 0.0 || value == 0.0 {
        return (255, 255, 255);
    }
    let t = (value.abs() / scale).min(1.0);
    let fade = (255.0 * (1.0 - t)).round() as u8;
    if value > 0.0 {
        (255, fade, fade)
    } else {
        (fade, fade, 255)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(weights: Vec<f64>) -> DecisionFeatures {
        DecisionFeatures { class: 0, weights }
    }

    #[test]
    fn all_zero_features_render_all_white() {
        let svg = render_heatmap(&features(vec![0.0; 4]), 2, 2).unwrap();
        assert_eq!(svg.matches("rgb(255,255,255)").count(), 4);
    }

    #[test]
    fn single_positive_weight_is_one_fully_red_cell() {
        let svg = render_heatmap(&features(vec![1.0, 0.0, 0.0, 0.0]), 2, 2).unwrap();
        assert_eq!(svg.matches("rgb(255,0,0)").count(), 1);
        assert_eq!(svg.matches("rgb(255,255,255)").count(), 3);
    }

    #[test]
    fn negative_weights_are_blue() {
        let svg = render_heatmap(&features(vec![-1.0, 1.0]), 1, 2).unwrap();
        assert!(svg.contains("rgb(0,0,255)"));
        assert!(svg.contains("rgb(255,0,0)"));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        assert!(render_heatmap(&features(vec![0.0; 4]), 1, 3).is_err());
    }

    #[test]
    fn output_parses_as_xml() {
        let svg = render_heatmap(&features(vec![0.5, -0.5, 0.0, 0.25]), 2, 2).unwrap();
        let doc = roxmltree::Document::parse(&svg).expect("well-formed XML");
        let root = doc.root_element();
        assert_eq!(root.tag_name().name(), "svg");
        assert_eq!(
            root.children().filter(|n| n.has_tag_name("rect")).count(),
            4
        );
    }
}
