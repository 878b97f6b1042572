//! Maximum-angle-of-deviation admissibility test.
//!
//! Two balls of radius `ε` sit on anchors `x1` and `x2` (with
//! `‖x2 − x1‖ = d ≤ 2ε`). A segment from `x1` to `xt` stays inside their
//! union when the cosine between `x2 − x1` and `xt − x1` is at least
//! `(1 + d/ε) / 2` and `xt` itself lies in the ball around `x2`.

use std::f64::consts::PI;

use crate::error::{RecourseError, Result};
use crate::types::{distance, norm};

/// Normalized dot product, clamped to `[-1, 1]`.
///
/// A zero vector on either side counts as perfectly aligned (returns 1).
pub fn cosine_alignment(v: &[f64], u: &[f64]) -> f64 {
    let nv = norm(v);
    let nu = norm(u);
    if nv == 0.0 || nu == 0.0 {
        return 1.0;
    }
    let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
    (dot / (nv * nu)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationCheck {
    pub epsilon: f64,
    pub admissible: bool,
    /// Cosine of the angle at `x1` between `x2 − x1` and `xt − x1`.
    pub cos_angle: f64,
    /// Required cosine `(1 + d/ε) / 2`.
    pub bound: f64,
    /// Anchor separation `d = ‖x2 − x1‖`.
    pub anchor_distance: f64,
    /// `‖xt − x2‖`.
    pub target_distance: f64,
}

/// Required cosine for anchor separation `d`.
pub fn deviation_bound(d: f64, epsilon: f64) -> f64 {
    0.5 * (1.0 + d / epsilon)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Full admissibility test for the segment `x1 → xt`.
///
/// Besides the cosine bound, `xt` must satisfy `‖xt − x2‖ ≤ ε` and
/// `‖xt − x1‖ ≤ d + ε`. Errors when the anchors are more than `2ε` apart.
pub fn max_deviation_ok(x1: &[f64], x2: &[f64], xt: &[f64], epsilon: f64) -> Result<DeviationCheck> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(RecourseError::InvalidConfig(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let d = distance(x1, x2);
    if d > 2.0 * epsilon {
        return Err(RecourseError::DeviationHypothesis {
            distance: d,
            limit: 2.0 * epsilon,
        });
    }
    let reach = distance(x1, xt);
    if reach == 0.0 {
        return Err(RecourseError::Degenerate("segment has zero length"));
    }
    let cos_angle = cosine_alignment(&diff(x2, x1), &diff(xt, x1));
    let bound = deviation_bound(d, epsilon);
    let target_distance = distance(xt, x2);
    // past d = ε the bound exceeds 1; exact collinearity (clamped φ = 1) still passes
    let admissible =
        cos_angle >= bound.min(1.0) && target_distance <= epsilon && reach <= d + epsilon;
    Ok(DeviationCheck {
        epsilon,
        admissible,
        cos_angle,
        bound,
        anchor_distance: d,
        target_distance,
    })
}

/// Shortcut: when `d/ε ≤ π − 1`, accept whenever `‖xt − x2‖ ≤ ε`.
pub fn fast_path_ok(x1: &[f64], x2: &[f64], xt: &[f64], epsilon: f64) -> bool {
    let d = distance(x1, x2);
    d / epsilon <= PI - 1.0 && distance(xt, x2) <= epsilon
}
