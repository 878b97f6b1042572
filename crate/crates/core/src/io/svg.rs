//! Static 2-D figure of a trace: shaded density grid, training points by
//! label, the local graph, and the chosen path.
//!
//! Element classes: `density-cell` (rect), `data-point` (circle, one per
//! training row), `graph-edge` (line), `graph-vertex` (circle, one per
//! vertex), `path-edge` (line, one per path edge).

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::density::{Density, DensityModel};
use crate::error::{RecourseError, Result};
use crate::io::trace::TraceDocument;
use crate::types::{Bandwidth, Dataset};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const MARGIN: f64 = 20.0;
const GRID_X: usize = 40;
const GRID_Y: usize = 30;

struct Frame {
    x0: f64,
    y0: f64,
    sx: f64,
    sy: f64,
}

impl Frame {
    fn new(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for j in 0..2 {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        let mut span = [0.0; 2];
        for j in 0..2 {
            if !lo[j].is_finite() {
                lo[j] = -1.0;
                hi[j] = 1.0;
            }
            let pad = ((hi[j] - lo[j]) * 0.05).max(1e-6);
            lo[j] -= pad;
            hi[j] += pad;
            span[j] = hi[j] - lo[j];
        }
        Self {
            x0: lo[0],
            y0: lo[1],
            sx: (WIDTH - 2.0 * MARGIN) / span[0],
            sy: (HEIGHT - 2.0 * MARGIN) / span[1],
        }
    }

    fn px(&self, p: &[f64]) -> (f64, f64) {
        (
            MARGIN + (p[0] - self.x0) * self.sx,
            HEIGHT - MARGIN - (p[1] - self.y0) * self.sy,
        )
    }

    fn data(&self, px: f64, py: f64) -> [f64; 2] {
        [self.x0 + (px - MARGIN) / self.sx, self.y0 + (HEIGHT - MARGIN - py) / self.sy]
    }
}

/// Render the figure as an SVG string.
pub fn render_svg(doc: &TraceDocument, dataset: &Dataset) -> Result<String> {
    let dim = dataset.dim();
    if dim != 2 {
        return Err(RecourseError::UnsupportedDimension(dim));
    }
    if doc.meta.factual.len() != 2 {
        return Err(RecourseError::UnsupportedDimension(doc.meta.factual.len()));
    }
    let vertices: Vec<&[f64]> = doc
        .graph
        .as_ref()
        .map(|g| g.vertices.iter().map(|v| v.values.as_slice()).collect())
        .unwrap_or_default();
    let frame = Frame::new(
        dataset
            .points
            .rows()
            .chain(vertices.iter().copied())
            .chain(std::iter::once(doc.meta.factual.as_slice()))
            .map(|p| [p[0], p[1]]),
    );

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">"#
    );
    out.push_str("<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"#ffffff\"/>\n");

    // Grid-sampled KDE as shaded cells.
    let bandwidth = if doc.meta.bandwidth > 0.0 && doc.meta.bandwidth.is_finite() {
        Bandwidth::Fixed(doc.meta.bandwidth)
    } else {
        Bandwidth::Auto
    };
    let kde = DensityModel::fit(Arc::new(dataset.points.clone()), bandwidth)?;
    let (cw, ch) = ((WIDTH - 2.0 * MARGIN) / GRID_X as f64, (HEIGHT - 2.0 * MARGIN) / GRID_Y as f64);
    let mut cells = Vec::with_capacity(GRID_X * GRID_Y);
    for gy in 0..GRID_Y {
        for gx in 0..GRID_X {
            let (px, py) = (MARGIN + (gx as f64 + 0.5) * cw, MARGIN + (gy as f64 + 0.5) * ch);
            cells.push((gx, gy, kde.density_at(&frame.data(px, py))));
        }
    }
    let peak = cells.iter().map(|c| c.2).fold(0.0, f64::max);
    out.push_str("<g id=\"density\">\n");
    for (gx, gy, d) in cells {
        let level = if peak > 0.0 { (d / peak * 8.0).floor().min(7.0) } else { 0.0 };
        if level < 1.0 {
            continue;
        }
        let _ = writeln!(
            out,
            r##"<rect class="density-cell" x="{:.2}" y="{:.2}" width="{cw:.2}" height="{ch:.2}" fill="#8899bb" fill-opacity="{:.3}"/>"##,
            MARGIN + gx as f64 * cw,
            MARGIN + gy as f64 * ch,
            level / 8.0 * 0.5
        );
    }
    out.push_str("</g>\n<g id=\"data\">\n");
    for (p, &label) in dataset.points.rows().zip(&dataset.labels) {
        let (x, y) = frame.px(p);
        let fill = if label == 1 { "#d95f02" } else { "#1b9e77" };
        let _ = writeln!(
            out,
            r#"<circle class="data-point" data-label="{label}" cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{fill}" fill-opacity="0.6"/>"#
        );
    }
    out.push_str("</g>\n");

    if let Some(g) = &doc.graph {
        out.push_str("<g id=\"graph\">\n");
        for e in &g.edges {
            let (x1, y1) = frame.px(&g.vertices[e.a].values);
            let (x2, y2) = frame.px(&g.vertices[e.b].values);
            let _ = writeln!(
                out,
                r##"<line class="graph-edge" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#777777" stroke-width="0.8"/>"##
            );
        }
        if let Some(p) = &doc.path {
            for w in p.vertex_indices.windows(2) {
                let (x1, y1) = frame.px(&g.vertices[w[0]].values);
                let (x2, y2) = frame.px(&g.vertices[w[1]].values);
                let _ = writeln!(
                    out,
                    r##"<line class="path-edge" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#e7298a" stroke-width="3"/>"##
                );
            }
        }
        for v in &g.vertices {
            let (x, y) = frame.px(&v.values);
            let _ = writeln!(
                out,
                r##"<circle class="graph-vertex" data-index="{}" cx="{x:.2}" cy="{y:.2}" r="4" fill="#222222"/>"##,
                v.index
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_svg_plot(doc: &TraceDocument, dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let svg = render_svg(doc, dataset)?;
    std::fs::write(path.as_ref(), svg).map_err(|e| RecourseError::Io(format!("{}: {e}", path.as_ref().display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::trace::{GraphSection, PathSection, PrivacySection, TraceMeta, TraceStatus, VertexRecord};
    use crate::types::{ExplainerConfig, FeatureSchema};

    fn doc(dim: usize) -> TraceDocument {
        let vertex = |index, values: Vec<f64>| VertexRecord {
            index,
            training_id: None,
            values_raw: values.clone(),
            values,
            score: 0.0,
            density: 0.0,
        };
        TraceDocument {
            meta: TraceMeta {
                format_version: 1,
                library_version: "0".into(),
                status: TraceStatus::Success,
                failure: None,
                config: ExplainerConfig::default(),
                seed: 0,
                model_kind: "test".into(),
                model_fingerprint: 0,
                schema: FeatureSchema::identity(dim),
                n_train: 4,
                bandwidth: 0.5,
                density_threshold: None,
                retried: false,
                factual_id: None,
                factual: vec![0.0; dim],
                factual_raw: vec![0.0; dim],
                factual_score: 0.0,
            },
            explore: None,
            graph: Some(GraphSection {
                vertices: vec![vertex(0, vec![0.0; dim]), vertex(1, vec![1.0; dim])],
                edges: vec![],
            }),
            path: Some(PathSection {
                vertex_indices: vec![0, 1],
                total_weight: 1.0,
                scores: vec![0.0, 1.0],
                edge_densities: vec![0.5],
            }),
            recourse: None,
            privacy: PrivacySection {
                n_total: 4,
                explore_fraction: 0.0,
                exploit_fraction: 0.0,
                enhance_fraction: 0.0,
                total_fraction: 0.0,
                explore_ids: vec![],
                exploit_ids: vec![],
                enhance_ids: vec![],
            },
        }
    }

    fn data(dim: usize) -> Dataset {
        let raw: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64; dim]).collect();
        let names: Vec<String> = (0..dim).map(|j| format!("f{j}")).collect();
        Dataset::from_raw(&raw, vec![0, 0, 1, 1], &names).unwrap()
    }

    #[test]
    fn counts_and_determinism() {
        let (d, ds) = (doc(2), data(2));
        let a = render_svg(&d, &ds).unwrap();
        assert_eq!(a, render_svg(&d, &ds).unwrap());
        assert_eq!(a.matches("class=\"data-point\"").count(), 4);
        assert_eq!(a.matches("class=\"graph-vertex\"").count(), 2);
        assert_eq!(a.matches("class=\"path-edge\"").count(), 1);
        assert!(a.contains("viewBox=\"0 0 800 600\""));
    }

    #[test]
    fn rejects_other_dimensions() {
        assert_eq!(render_svg(&doc(5), &data(5)).unwrap_err(), RecourseError::UnsupportedDimension(5));
    }
}
