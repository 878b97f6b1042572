//! Exploit stage: grow a small graph of training points from the factual
//! toward a known counterfactual.
//!
//! Each new vertex is the neighbour of the current vertex maximizing
//! `(1 + cos(x_i − v_t, x′ − v_t)) / 2 · D(v_t, x_i)`, where `D` is the
//! sampled line-average density. After insertion, edges to every earlier
//! vertex are admitted by the configured [`EdgeWeightRule`].

use crate::density::{line_average_density, line_stats, Density};
use crate::error::{RecourseError, Result, StageFailure};
use crate::geometry::{cosine_alignment, max_deviation_ok};
use crate::pipeline::apply_constraints;
use crate::spatial::SpatialIndex;
use crate::types::{
    distance, DensityWeighting, ExplainerConfig, FeatureSchema, Instance, LineSampling,
    LocalGraph, PrivacyLedger, Stage, WeightMode,
};

/// Edge admission and weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeightRule {
    pub mode: WeightMode,
    /// Absolute density threshold `T_p`.
    pub threshold: f64,
    pub samples: usize,
    pub sampling: LineSampling,
    pub weighting: DensityWeighting,
}

impl EdgeWeightRule {
    pub fn from_config(config: &ExplainerConfig, threshold: f64) -> Self {
        Self {
            mode: config.weight_mode,
            threshold,
            samples: config.line_samples,
            sampling: config.line_sampling,
            weighting: config.density_weighting,
        }
    }

    /// Whether the line `a → b` passes the density gate.
    pub fn admits<D: Density + ?Sized>(&self, a: &[f64], b: &[f64], density: &D) -> Result<bool> {
        let (mean, min) = line_stats(density, a, b, self.samples, self.sampling)?;
        Ok(match self.mode {
            WeightMode::Strict => min > self.threshold,
            WeightMode::Average => mean > self.threshold,
        })
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Direction-alignment term times line-average density.
pub fn node_score<D: Density + ?Sized>(
    candidate: &[f64],
    current: &[f64],
    target: &[f64],
    density: &D,
    samples: usize,
    sampling: LineSampling,
) -> Result<f64> {
    if candidate == current {
        return Err(RecourseError::Degenerate("candidate coincides with current vertex"));
    }
    if current == target {
        return Err(RecourseError::Degenerate("current vertex is the counterfactual"));
    }
    let align = (1.0 + cosine_alignment(&diff(candidate, current), &diff(target, current))) / 2.0;
    Ok(align * line_average_density(density, current, candidate, samples, sampling)?)
}

/// Weight of the edge between `a` and `b`, or `None` when the gate rejects it.
pub fn edge_weight<D: Density + ?Sized>(a: &[f64], b: &[f64], rule: &EdgeWeightRule, density: &D) -> Result<Option<f64>> {
    let len = distance(a, b);
    if len == 0.0 {
        return Ok(None);
    }
    let (mean, min) = line_stats(density, a, b, rule.samples, rule.sampling)?;
    let w = match rule.mode {
        WeightMode::Strict if min > rule.threshold => Some(len),
        WeightMode::Average if mean > rule.threshold => Some(match rule.weighting {
            DensityWeighting::Multiply => mean * len,
            DensityWeighting::Divide => len / mean,
        }),
        _ => None,
    };
    Ok(w.filter(|w| *w > 0.0 && w.is_finite()))
}

fn connect_to_prior<D: Density + ?Sized>(graph: &mut LocalGraph, new: usize, rule: &EdgeWeightRule, density: &D) -> Result<()> {
    let p = graph.vertex(new).values.clone();
    for i in 0..new {
        if let Some(w) = edge_weight(&graph.vertex(i).values, &p, rule, density)? {
            graph.set_edge(i, new, w)?;
        }
    }
    Ok(())
}

/// Neighbourhood of `x`: points within `radius`, capped at the `k` nearest,
/// falling back to plain k-NN when the ball is empty.
pub fn neighbourhood(index: &SpatialIndex, x: &[f64], radius: f64, k: usize) -> Result<Vec<usize>> {
    let mut hits = index.radius_query(x, radius)?;
    if hits.is_empty() {
        hits = index.knn(x, k)?;
    }
    hits.truncate(k);
    Ok(hits.into_iter().map(|h| h.id).collect())
}

/// Build the local graph from `factual` (vertex 0) to `counterfactual`
/// (the last vertex on success).
#[allow(clippy::too_many_arguments)]
pub fn build_local_graph<D: Density + ?Sized>(
    factual: &Instance,
    counterfactual: &Instance,
    index: &mut SpatialIndex,
    density: &D,
    rule: &EdgeWeightRule,
    config: &ExplainerConfig,
    schema: &FeatureSchema,
    ledger: &mut PrivacyLedger,
) -> Result<LocalGraph, StageFailure<LocalGraph>> {
    let mut graph = LocalGraph::new(factual.clone());
    if factual.values == counterfactual.values {
        return Err(StageFailure::new(
            RecourseError::Degenerate("factual and counterfactual coincide"),
            graph,
        ));
    }
    match grow(&mut graph, factual, counterfactual, index, density, rule, config, schema, ledger) {
        Ok(()) => Ok(graph),
        Err(e) => Err(StageFailure::new(e, graph)),
    }
}

#[allow(clippy::too_many_arguments)]
fn grow<D: Density + ?Sized>(
    graph: &mut LocalGraph,
    factual: &Instance,
    target: &Instance,
    index: &mut SpatialIndex,
    density: &D,
    rule: &EdgeWeightRule,
    config: &ExplainerConfig,
    schema: &FeatureSchema,
    ledger: &mut PrivacyLedger,
) -> Result<()> {
    let radius = config.epsilon;
    let x_prime = target.as_slice();
    let mut current = 0usize;
    for _ in 0..config.max_exploit_iters {
        let cur = graph.vertex(current).values.clone();
        if distance(&cur, x_prime) <= radius && edge_weight(&cur, x_prime, rule, density)?.is_some() {
            let t = graph.add_vertex(target.clone());
            connect_to_prior(graph, t, rule, density)?;
            return Ok(());
        }

        let ids = neighbourhood(index, &cur, radius, config.k_neighbors)?;
        ledger.record_all(Stage::Exploit, ids.iter().copied());
        let pairs: Vec<(&[f64], usize)> = ids.iter().map(|&id| (index.point(id), id)).collect();
        let kept = apply_constraints(&pairs, &factual.values, schema);

        // (score, distance, id) with the synthetic candidate as id None
        let mut best: Option<(f64, f64, Option<usize>, Vec<f64>)> = None;
        let mut consider = |s: f64, d: f64, id: Option<usize>, p: &[f64]| {
            let better = match &best {
                None => true,
                Some((bs, bd, bid, _)) => s
                    .total_cmp(bs)
                    .then(bd.total_cmp(&d))
                    .then(bid.map_or(usize::MAX, |v| v).cmp(&id.map_or(usize::MAX, |v| v)))
                    .is_gt(),
            };
            if better {
                best = Some((s, d, id, p.to_vec()));
            }
        };
        for &(p, id) in &kept {
            if p == cur.as_slice() {
                continue;
            }
            let s = node_score(p, &cur, x_prime, density, rule.samples, rule.sampling)?;
            consider(s, distance(p, &cur), Some(id), p);
        }
        if config.synthetic_vertices {
            if let Some(p) = synthetic_candidate(&cur, x_prime, &kept, config.epsilon) {
                let s = node_score(&p, &cur, x_prime, density, rule.samples, rule.sampling)?;
                consider(s, distance(&p, &cur), None, &p);
            }
        }
        let Some((_, _, id, point)) = best else {
            return Err(RecourseError::EmptyNeighbourhood { vertex: current });
        };
        let vertex = match id {
            Some(id) => {
                index.deactivate(id)?;
                Instance::training(point, id)?
            }
            None => Instance::new(point)?,
        };
        current = graph.add_vertex(vertex);
        connect_to_prior(graph, current, rule, density)?;
    }
    Err(RecourseError::MaxIterations {
        stage: Stage::Exploit,
        limit: config.max_exploit_iters,
    })
}

/// Point `ε` along the straight line toward `target`, kept only if the
/// segment from `current` is admissible against some nearby data point.
fn synthetic_candidate(current: &[f64], target: &[f64], nearby: &[(&[f64], usize)], eps: f64) -> Option<Vec<f64>> {
    let gap = distance(current, target);
    if gap == 0.0 {
        return None;
    }
    let t = (eps / gap).min(1.0);
    let p: Vec<f64> = current.iter().zip(target).map(|(c, x)| c + t * (x - c)).collect();
    let ok = nearby.iter().any(|(anchor, _)| {
        max_deviation_ok(current, anchor, &p, eps)
            .map(|c| c.admissible)
            .unwrap_or(false)
    });
    ok.then_some(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::tests::Constant;
    use crate::density::DensityModel;
    use crate::types::{Bandwidth, PointMatrix};
    use std::sync::Arc;

    fn rule(mode: WeightMode, threshold: f64) -> EdgeWeightRule {
        EdgeWeightRule {
            mode,
            threshold,
            samples: 32,
            sampling: LineSampling::Interpolated,
            weighting: DensityWeighting::Multiply,
        }
    }

    fn gap_kde() -> DensityModel {
        let mut rows = Vec::new();
        for i in 0..25 {
            let t = i as f64 * 0.01;
            rows.push(vec![-1.5 + t, 0.0]);
            rows.push(vec![1.5 - t, 0.0]);
        }
        DensityModel::fit(Arc::new(PointMatrix::from_rows(&rows).unwrap()), Bandwidth::Fixed(0.3)).unwrap()
    }

    #[test]
    fn node_score_terms() {
        let c = Constant(0.5);
        let s = node_score(&[1.0, 0.0], &[0.0, 0.0], &[2.0, 0.0], &c, 8, LineSampling::Interpolated).unwrap();
        assert_eq!(s, 0.5);
        let s = node_score(&[-1.0, 0.0], &[0.0, 0.0], &[2.0, 0.0], &c, 8, LineSampling::Interpolated).unwrap();
        assert_eq!(s, 0.0);
        let c = Constant(0.8);
        let s = node_score(&[0.0, 1.0], &[0.0, 0.0], &[2.0, 0.0], &c, 8, LineSampling::Interpolated).unwrap();
        assert!((s - 0.4).abs() < 1e-15);
        assert!(node_score(&[0.0, 0.0], &[0.0, 0.0], &[2.0, 0.0], &c, 8, LineSampling::Interpolated).is_err());
    }

    #[test]
    fn edge_weight_cases() {
        let c = Constant(1.0);
        let w = edge_weight(&[0.0, 0.0], &[2.0, 0.0], &rule(WeightMode::Strict, 0.5), &c).unwrap();
        assert_eq!(w, Some(2.0));
        let c = Constant(0.6);
        let w = edge_weight(&[0.0, 0.0], &[2.0, 0.0], &rule(WeightMode::Average, 0.5), &c).unwrap();
        assert!((w.unwrap() - 1.2).abs() < 1e-12);
        let mut div = rule(WeightMode::Average, 0.5);
        div.weighting = DensityWeighting::Divide;
        let w = edge_weight(&[0.0, 0.0], &[2.0, 0.0], &div, &c).unwrap();
        assert!((w.unwrap() - 2.0 / 0.6).abs() < 1e-12);
        let w = edge_weight(&[0.0, 0.0], &[2.0, 0.0], &rule(WeightMode::Average, 0.7), &c).unwrap();
        assert_eq!(w, None);
    }

    #[test]
    fn strict_rejects_interior_gap_with_dense_endpoints() {
        let kde = gap_kde();
        let a = [-1.4, 0.0];
        let b = [1.4, 0.0];
        let mid = kde.density_at(&[0.0, 0.0]);
        let tp = mid * 10.0;
        assert!(kde.density_at(&a) > tp && kde.density_at(&b) > tp);
        assert_eq!(edge_weight(&a, &b, &rule(WeightMode::Strict, tp), &kde).unwrap(), None);
    }

    #[test]
    fn minimal_graph_has_one_edge() {
        let pts = PointMatrix::from_rows(&[vec![10.0, 10.0]]).unwrap();
        let mut index = SpatialIndex::build(pts).unwrap();
        let x = Instance::new(vec![0.0, 0.0]).unwrap();
        let xp = Instance::new(vec![0.3, 0.0]).unwrap();
        let cfg = ExplainerConfig::default();
        let mut ledger = PrivacyLedger::new(1);
        let r = rule(WeightMode::Strict, 0.5);
        let g = build_local_graph(&x, &xp, &mut index, &Constant(1.0), &r, &cfg, &FeatureSchema::identity(2), &mut ledger).unwrap();
        assert_eq!(g.n_vertices(), 2);
        assert_eq!(g.n_edges(), 1);
        assert!((g.weight(0, 1).unwrap() - 0.3).abs() < 1e-12);
        assert!(ledger.exploit.is_empty());
    }

    #[test]
    fn walks_along_a_line_of_points() {
        let rows: Vec<Vec<f64>> = (1..=20).map(|i| vec![i as f64 * 0.1, 0.0]).collect();
        let pts = Arc::new(PointMatrix::from_rows(&rows).unwrap());
        let kde = DensityModel::fit(Arc::clone(&pts), Bandwidth::Fixed(0.2)).unwrap();
        let mut index = SpatialIndex::build((*pts).clone()).unwrap();
        let x = Instance::new(vec![0.0, 0.0]).unwrap();
        let xp = Instance::new(vec![2.05, 0.0]).unwrap();
        let cfg = ExplainerConfig {
            epsilon: 0.25,
            k_neighbors: 5,
            ..Default::default()
        };
        let tp = kde.density_at(&[3.0, 0.0]);
        let r = rule(WeightMode::Average, tp);
        let mut ledger = PrivacyLedger::new(20);
        let g = build_local_graph(&x, &xp, &mut index, &kde, &r, &cfg, &FeatureSchema::identity(2), &mut ledger).unwrap();
        assert_eq!(g.vertices().last().unwrap(), &xp);
        for v in &g.vertices()[1..g.n_vertices() - 1] {
            assert!(ledger.exploit.contains(&v.id.unwrap()));
        }
        for (_, _, w) in g.edges() {
            assert!(w > 0.0);
        }
    }

    #[test]
    fn neighbourhood_falls_back_to_knn() {
        let pts = PointMatrix::from_rows(&[vec![5.0], vec![6.0], vec![0.1]]).unwrap();
        let index = SpatialIndex::build(pts).unwrap();
        assert_eq!(neighbourhood(&index, &[0.0], 0.5, 2).unwrap(), vec![2]);
        assert_eq!(neighbourhood(&index, &[3.0], 0.5, 2).unwrap(), vec![0, 2]);
    }
}
