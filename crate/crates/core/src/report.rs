//! Markdown summary table and SVG hexbin figures.

use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::LabelSource;
use crate::harness::{HexbinLayer, Method, SummaryTable};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("summary table has no {method} / {label_source} cell")]
    IncompleteTable {
        method: Method,
        label_source: LabelSource,
    },
    #[error("hexbin layer {method} / {label_source} has no bins to draw")]
    EmptyLayer {
        method: Method,
        label_source: LabelSource,
    },
    #[error("invalid plot spec: {0}")]
    InvalidSpec(String),
}

/// Methods as rows, sources as columns, four decimals.
pub fn render_summary_markdown(table: &SummaryTable) -> Result<String, ReportError> {
    let mut out = String::from("| Method |");
    for source in LabelSource::ALL {
        let _ = write!(out, " {source} |");
    }
    out.push_str("\n|:---|");
    out.push_str(&"---:|".repeat(LabelSource::ALL.len()));
    out.push('\n');
    for method in Method::ALL {
        let _ = write!(out, "| {method} |");
        for source in LabelSource::ALL {
            let cell = table
                .get(method, source)
                .ok_or(ReportError::IncompleteTable {
                    method,
                    label_source: source,
                })?;
            let _ = write!(out, " {:.4} |", cell.mean_difference);
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Square canvas side in pixels.
    pub canvas: u32,
    pub margin: f64,
    /// Axis range shared by x and y.
    pub range: (f64, f64),
    pub fill: String,
    pub identity_color: String,
}

impl PlotSpec {
    pub const MIN_CANVAS: u32 = 300;

    pub fn for_layer(layer: &HexbinLayer) -> Self {
        Self {
            title: format!("{} vs GT ({})", layer.method, layer.source),
            x_label: "GT similarity".into(),
            y_label: "predicted similarity".into(),
            canvas: 480,
            margin: 50.0,
            range: (-1.0, 1.0),
            fill: "#1f77b4".into(),
            identity_color: "#d62728".into(),
        }
    }

    fn validate(&self) -> Result<(), ReportError> {
        if self.canvas < Self::MIN_CANVAS {
            return Err(ReportError::InvalidSpec(format!(
                "canvas must be at least {}px, got {}",
                Self::MIN_CANVAS,
                self.canvas
            )));
        }
        if !(self.margin >= 0.0 && 2.0 * self.margin < self.canvas as f64) {
            return Err(ReportError::InvalidSpec(format!(
                "margin {} does not fit the canvas",
                self.margin
            )));
        }
        if self.range.0.partial_cmp(&self.range.1) != Some(std::cmp::Ordering::Less) {
            return Err(ReportError::InvalidSpec("axis range is empty".into()));
        }
        Ok(())
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One `<path class="hex">` per bin, ticks every 0.25, and a dashed
/// identity line from (P5, P5) to (P95, P95). Fill opacity is
/// `0.2 + 0.8 ln(count) / ln(max count)`.
pub fn render_hexbin_svg(layer: &HexbinLayer, spec: &PlotSpec) -> Result<String, ReportError> {
    spec.validate()?;
    if layer.bins.is_empty() {
        return Err(ReportError::EmptyLayer {
            method: layer.method,
            label_source: layer.source,
        });
    }
    let size = spec.canvas;
    let margin = spec.margin;
    let plot = size as f64 - 2.0 * margin;
    let (lo, hi) = spec.range;
    let px = |x: f64| margin + (x - lo) / (hi - lo) * plot;
    let py = |y: f64| margin + (hi - y) / (hi - lo) * plot;

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{size}\" height=\"{size}\" fill=\"#ffffff\"/>"
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        size as f64 / 2.0,
        margin / 2.0,
        xml_escape(&spec.title)
    );
    out.push_str("<g class=\"axes\" stroke=\"#000000\" stroke-width=\"1\">\n");
    let _ = writeln!(
        out,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/>",
        px(lo),
        py(lo),
        px(hi),
        py(lo)
    );
    let _ = writeln!(
        out,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/>",
        px(lo),
        py(lo),
        px(lo),
        py(hi)
    );
    out.push_str("</g>\n");

    out.push_str(
        "<g class=\"ticks\" stroke=\"#000000\" font-family=\"sans-serif\" font-size=\"10\">\n",
    );
    let ticks = ((hi - lo) / 0.25).round() as usize;
    for i in 0..=ticks {
        let t = lo + 0.25 * i as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/>",
            px(t),
            py(lo),
            px(t),
            py(lo) + 5.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" stroke=\"none\">{t:.2}</text>",
            px(t),
            py(lo) + 18.0
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\"/>",
            px(lo) - 5.0,
            py(t),
            px(lo),
            py(t)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" stroke=\"none\">{t:.2}</text>",
            px(lo) - 8.0,
            py(t) + 3.0
        );
    }
    out.push_str("</g>\n");

    let mid = (lo + hi) / 2.0;
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
        px(mid),
        size as f64 - 8.0,
        xml_escape(&spec.x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14.00\" y=\"{y:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14.00 {y:.2})\">{}</text>",
        xml_escape(&spec.y_label),
        y = py(mid)
    );

    let _ = writeln!(
        out,
        "<g class=\"bins\" fill=\"{}\" stroke=\"none\">",
        spec.fill
    );
    let radius_px = layer.hex_radius / (hi - lo) * plot;
    let half_w = radius_px * 3f64.sqrt() / 2.0;
    let max_count = layer.bins.iter().map(|b| b.count).max().unwrap_or(1);
    for bin in &layer.bins {
        let (x0, y0) = (px(bin.x), py(bin.y));
        let pts = [
            (x0, y0 - radius_px),
            (x0 + half_w, y0 - radius_px / 2.0),
            (x0 + half_w, y0 + radius_px / 2.0),
            (x0, y0 + radius_px),
            (x0 - half_w, y0 + radius_px / 2.0),
            (x0 - half_w, y0 - radius_px / 2.0),
        ];
        let opacity = if max_count <= 1 {
            1.0
        } else {
            0.2 + 0.8 * (bin.count as f64).ln() / (max_count as f64).ln()
        };
        let d = pts
            .iter()
            .map(|(a, b)| format!("{a:.2},{b:.2}"))
            .collect::<Vec<_>>()
            .join(" L");
        let _ = writeln!(
            out,
            "<path class=\"hex\" d=\"M{d} Z\" fill-opacity=\"{opacity:.3}\"/>"
        );
    }
    out.push_str("</g>\n");

    if let Some((p5, p95)) = layer.band {
        let _ = writeln!(
            out,
            "<line class=\"identity\" x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{}\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>",
            px(p5),
            py(p5),
            px(p95),
            py(p95),
            spec.identity_color
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
