//! Self-contained JSON record of one explanation, and its verifier.
//!
//! Top-level keys: `meta`, `explore`, `graph`, `path`, `recourse`,
//! `privacy`. A document carries enough to re-check reconstruction, edge
//! gates, path weights and ledger bookkeeping without the training data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::{line_stats, Density};
use crate::error::{RecourseError, Result};
use crate::explore::{momentum, ExploreTrace};
use crate::model::score;
use crate::pipeline::{ExplainFailure, Explainer, RecourseResult};
use crate::types::{
    distance, DensityWeighting, ExplainerConfig, FeatureSchema, Instance, LocalGraph, PrivacyLedger,
    Stage, WeightMode,
};

pub const TRACE_FORMAT_VERSION: u32 = 1;

/// Absolute tolerance for coordinate comparisons.
const COORD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceStatus {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureInfo {
    pub stage: Stage,
    pub message: String,
    pub connectivity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub format_version: u32,
    pub library_version: String,
    pub status: TraceStatus,
    pub failure: Option<FailureInfo>,
    pub config: ExplainerConfig,
    pub seed: u64,
    pub model_kind: String,
    pub model_fingerprint: u64,
    pub schema: FeatureSchema,
    pub n_train: usize,
    pub bandwidth: f64,
    pub density_threshold: Option<f64>,
    pub retried: bool,
    pub factual_id: Option<usize>,
    pub factual: Vec<f64>,
    pub factual_raw: Vec<f64>,
    pub factual_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexRecord {
    pub index: usize,
    pub training_id: Option<usize>,
    pub values: Vec<f64>,
    pub values_raw: Vec<f64>,
    pub score: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
    pub length: f64,
    pub line_mean: f64,
    pub line_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSection {
    pub vertices: Vec<VertexRecord>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSection {
    pub vertex_indices: Vec<usize>,
    pub total_weight: f64,
    pub scores: Vec<f64>,
    pub edge_densities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseSection {
    pub k: usize,
    pub origin: Vec<f64>,
    pub steps: Vec<Vec<f64>>,
    pub steps_raw: Vec<Vec<f64>>,
    pub counterfactual: Vec<f64>,
    pub counterfactual_raw: Vec<f64>,
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacySection {
    pub n_total: usize,
    pub explore_fraction: f64,
    pub exploit_fraction: f64,
    pub enhance_fraction: f64,
    pub total_fraction: f64,
    pub explore_ids: Vec<usize>,
    pub exploit_ids: Vec<usize>,
    pub enhance_ids: Vec<usize>,
}

impl From<&PrivacyLedger> for PrivacySection {
    fn from(l: &PrivacyLedger) -> Self {
        Self {
            n_total: l.n_total,
            explore_fraction: l.fraction(Stage::Explore),
            exploit_fraction: l.fraction(Stage::Exploit),
            enhance_fraction: l.fraction(Stage::Enhance),
            total_fraction: l.total_fraction(),
            explore_ids: l.explore.iter().copied().collect(),
            exploit_ids: l.exploit.iter().copied().collect(),
            enhance_ids: l.enhance.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub meta: TraceMeta,
    pub explore: Option<ExploreTrace>,
    pub graph: Option<GraphSection>,
    pub path: Option<PathSection>,
    pub recourse: Option<RecourseSection>,
    pub privacy: PrivacySection,
}

struct Context<'a> {
    explainer: &'a Explainer,
    config: &'a ExplainerConfig,
}

impl Context<'_> {
    fn score(&self, x: &[f64]) -> Result<f64> {
        score(self.explainer.target_model(self.config.target).as_ref(), x)
    }

    fn raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.explainer.dataset().schema.inverse_standardize(x)
    }

    fn meta(
        &self,
        status: TraceStatus,
        failure: Option<FailureInfo>,
        factual: &Instance,
        density_threshold: Option<f64>,
        retried: bool,
    ) -> Result<TraceMeta> {
        let model = self.explainer.model();
        Ok(TraceMeta {
            format_version: TRACE_FORMAT_VERSION,
            library_version: env!("CARGO_PKG_VERSION").to_owned(),
            status,
            failure,
            config: self.config.clone(),
            seed: self.config.seed,
            model_kind: model.kind().to_owned(),
            model_fingerprint: model.fingerprint(),
            schema: self.explainer.dataset().schema.clone(),
            n_train: self.explainer.dataset().n(),
            bandwidth: self.explainer.density().model.bandwidth(),
            density_threshold,
            retried,
            factual_id: factual.id,
            factual: factual.values.clone(),
            factual_raw: self.raw(&factual.values)?,
            factual_score: self.score(&factual.values)?,
        })
    }

    fn graph(&self, graph: &LocalGraph) -> Result<GraphSection> {
        let density = &self.explainer.density().model;
        let mut vertices = Vec::with_capacity(graph.n_vertices());
        for (index, v) in graph.vertices().iter().enumerate() {
            vertices.push(VertexRecord {
                index,
                training_id: if index == 0 { None } else { v.id },
                values: v.values.clone(),
                values_raw: self.raw(&v.values)?,
                score: self.score(&v.values)?,
                density: density.density_at(&v.values),
            });
        }
        let mut edges = Vec::with_capacity(graph.n_edges());
        for (a, b, weight) in graph.edges() {
            let (pa, pb) = (&graph.vertex(a).values, &graph.vertex(b).values);
            let (line_mean, line_min) = line_stats(density, pa, pb, self.config.line_samples, self.config.line_sampling)?;
            edges.push(EdgeRecord {
                a,
                b,
                weight,
                length: distance(pa, pb),
                line_mean,
                line_min,
            });
        }
        Ok(GraphSection { vertices, edges })
    }
}

impl TraceDocument {
    pub fn from_result(explainer: &Explainer, config: &ExplainerConfig, result: &RecourseResult) -> Result<Self> {
        let cx = Context { explainer, config };
        let schema = &explainer.dataset().schema;
        let steps_raw = result
            .recourse
            .steps
            .iter()
            .map(|s| schema.step_to_raw(s))
            .collect::<Result<Vec<_>>>()?;
        let cf = &result.counterfactual.values;
        Ok(Self {
            meta: cx.meta(
                TraceStatus::Success,
                None,
                &result.factual,
                Some(result.density_threshold).filter(|t| t.is_finite()),
                result.retried,
            )?,
            explore: result.explore.clone(),
            graph: Some(cx.graph(&result.graph)?),
            path: Some(PathSection {
                vertex_indices: result.path.vertex_indices.clone(),
                total_weight: result.path.total_weight,
                scores: result.path_scores.clone(),
                edge_densities: result.path_densities.clone(),
            }),
            recourse: Some(RecourseSection {
                k: result.recourse.k(),
                origin: result.recourse.origin.values.clone(),
                steps: result.recourse.steps.clone(),
                steps_raw,
                counterfactual: cf.clone(),
                counterfactual_raw: cx.raw(cf)?,
                final_score: *result.path_scores.last().expect("path has at least one vertex"),
            }),
            privacy: PrivacySection::from(&result.ledger),
        })
    }

    /// Partial document for a failed run.
    pub fn from_failure(
        explainer: &Explainer,
        config: &ExplainerConfig,
        factual: &Instance,
        failure: &ExplainFailure,
    ) -> Result<Self> {
        let cx = Context { explainer, config };
        let info = FailureInfo {
            stage: failure.stage,
            message: failure.error.to_string(),
            connectivity: failure.error.is_connectivity_failure(),
        };
        let graph = failure.graph.as_ref().map(|g| cx.graph(g)).transpose()?;
        Ok(Self {
            meta: cx.meta(
                TraceStatus::Failure,
                Some(info),
                factual,
                failure.density_threshold,
                failure.retried,
            )?,
            explore: failure.explore.clone(),
            graph,
            path: None,
            recourse: None,
            privacy: PrivacySection::from(&failure.ledger),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()?)
            .map_err(|e| RecourseError::Io(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let s = std::fs::read_to_string(path.as_ref())
            .map_err(|e| RecourseError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&s)
    }

    /// Number of recourse steps (0 for failures).
    pub fn n_steps(&self) -> usize {
        self.recourse.as_ref().map_or(0, |r| r.k)
    }
}

/// Outcome of [`verify`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub status: TraceStatus,
    pub checks: usize,
    pub violations: Vec<String>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

struct Checker {
    checks: usize,
    violations: Vec<String>,
}

impl Checker {
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations.push(msg());
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= COORD_TOL * (1.0 + a.abs().max(b.abs()))
}

fn all_close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= COORD_TOL)
}

/// Re-check every invariant the document makes claims about.
pub fn verify(doc: &TraceDocument) -> VerifyReport {
    let mut c = Checker {
        checks: 0,
        violations: Vec::new(),
    };
    let meta = &doc.meta;
    let cfg = &meta.config;
    let tf = cfg.decision_threshold;
    c.check(meta.format_version == TRACE_FORMAT_VERSION, || {
        format!("unsupported format version {}", meta.format_version)
    });
    c.check(cfg.validate().is_ok(), || "config does not validate".into());
    c.check(meta.factual.len() == meta.schema.dim(), || "factual dimension differs from schema".into());
    c.check(
        (meta.status == TraceStatus::Failure) == meta.failure.is_some(),
        || "status and failure fields disagree".into(),
    );

    verify_privacy(&mut c, &doc.privacy);
    if let Some(ex) = &doc.explore {
        verify_explore(&mut c, ex, doc);
    }
    if let Some(g) = &doc.graph {
        verify_graph(&mut c, g, doc);
    }

    if meta.status == TraceStatus::Success {
        let (Some(g), Some(p), Some(r)) = (&doc.graph, &doc.path, &doc.recourse) else {
            c.check(false, || "successful trace lacks graph, path or recourse".into());
            return finish(c, meta.status);
        };
        verify_path(&mut c, g, p, doc);
        c.check(all_close(&r.origin, &meta.factual), || "recourse origin differs from factual".into());
        c.check(r.k == r.steps.len() && r.k == r.steps_raw.len(), || "step counts disagree".into());
        let mut end = r.origin.clone();
        for s in &r.steps {
            c.check(s.len() == end.len(), || "step dimension mismatch".into());
            for (e, d) in end.iter_mut().zip(s) {
                *e += d;
            }
        }
        c.check(all_close(&end, &r.counterfactual), || {
            format!("origin plus steps {end:?} differs from counterfactual {:?}", r.counterfactual)
        });
        c.check(r.final_score >= tf, || format!("final score {} below threshold {tf}", r.final_score));
        for (i, (s, raw)) in r.steps.iter().zip(&r.steps_raw).enumerate() {
            match meta.schema.step_to_raw(s) {
                Ok(want) => c.check(all_close(&want, raw), || format!("raw step {i} inconsistent with schema")),
                Err(e) => c.check(false, || format!("raw step {i}: {e}")),
            }
        }
        if let Ok(want) = meta.schema.inverse_standardize(&r.counterfactual) {
            c.check(all_close(&want, &r.counterfactual_raw), || "raw counterfactual inconsistent".into());
        }

        // Path vertices reconstruct the steps one by one.
        let pts: Vec<&[f64]> = p
            .vertex_indices
            .iter()
            .filter_map(|&i| g.vertices.get(i).map(|v| v.values.as_slice()))
            .collect();
        let mut diffs = Vec::new();
        for w in pts.windows(2) {
            let d: Vec<f64> = w[1].iter().zip(w[0]).map(|(a, b)| a - b).collect();
            if d.iter().any(|v| *v != 0.0) {
                diffs.push(d);
            }
        }
        c.check(
            diffs.len() == r.steps.len() && diffs.iter().zip(&r.steps).all(|(a, b)| all_close(a, b)),
            || "steps do not match path vertex differences".into(),
        );
        if let (Some(last), Some(&vi)) = (p.scores.last(), p.vertex_indices.last()) {
            c.check(*last == r.final_score, || "final score differs from path score".into());
            if let Some(v) = g.vertices.get(vi) {
                c.check(all_close(&v.values, &r.counterfactual), || "path ends away from counterfactual".into());
            }
        }

        // Actionability constraints hold at every path vertex.
        for &vi in &p.vertex_indices {
            if let Some(v) = g.vertices.get(vi) {
                let ok = meta
                    .schema
                    .features
                    .iter()
                    .zip(meta.factual.iter().zip(&v.values))
                    .all(|(f, (&x, &y))| f.constraint.permits(x, y));
                c.check(ok, || format!("path vertex {vi} violates a feature constraint"));
            }
        }
    } else {
        c.check(doc.recourse.is_none(), || "failed trace carries a recourse".into());
    }
    finish(c, meta.status)
}

fn finish(c: Checker, status: TraceStatus) -> VerifyReport {
    VerifyReport {
        status,
        checks: c.checks,
        violations: c.violations,
    }
}

fn sorted_unique(ids: &[usize]) -> bool {
    ids.windows(2).all(|w| w[0] < w[1])
}

fn verify_privacy(c: &mut Checker, p: &PrivacySection) {
    let n = p.n_total;
    c.check(n > 0, || "privacy ledger has no population".into());
    let frac = |len: usize| if n == 0 { 0.0 } else { len as f64 / n as f64 };
    for (name, ids, f) in [
        ("explore", &p.explore_ids, p.explore_fraction),
        ("exploit", &p.exploit_ids, p.exploit_fraction),
        ("enhance", &p.enhance_ids, p.enhance_fraction),
    ] {
        c.check(sorted_unique(ids), || format!("{name} ids not sorted and unique"));
        c.check(ids.iter().all(|&i| i < n), || format!("{name} ids out of range"));
        c.check(f == frac(ids.len()), || format!("{name} fraction {f} disagrees with id count"));
    }
    let mut union: Vec<usize> = p
        .explore_ids
        .iter()
        .chain(&p.exploit_ids)
        .chain(&p.enhance_ids)
        .copied()
        .collect();
    union.sort_unstable();
    union.dedup();
    c.check(p.total_fraction == frac(union.len()), || "total fraction disagrees with union".into());
    c.check(p.total_fraction <= 1.0, || "total fraction exceeds 1".into());
}

fn verify_explore(c: &mut Checker, ex: &ExploreTrace, doc: &TraceDocument) {
    let cfg = &doc.meta.config;
    let t = ex.selected_ids.len();
    c.check(
        ex.positions.len() == t + 1 && ex.scores.len() == t + 1 && ex.momenta.len() == t,
        || "explore trace lengths disagree".into(),
    );
    let accesses_ok = ex.new_accesses.len() == t || ex.new_accesses.len() == t + 1;
    c.check(accesses_ok, || "explore access counts have the wrong length".into());
    if let Some(first) = ex.positions.first() {
        c.check(all_close(first, &doc.meta.factual), || "explore does not start at the factual".into());
    }
    for (i, &n) in ex.new_accesses.iter().enumerate() {
        c.check(n <= cfg.k_neighbors, || format!("explore step {i} touched {n} > k new points"));
    }
    let total: usize = ex.new_accesses.iter().sum();
    c.check(total == doc.privacy.explore_ids.len(), || {
        format!("explore accesses sum to {total} but ledger holds {}", doc.privacy.explore_ids.len())
    });
    for id in &ex.selected_ids {
        c.check(doc.privacy.explore_ids.binary_search(id).is_ok(), || {
            format!("selected id {id} missing from explore ledger")
        });
    }
    let steps = ex.steps();
    let dim = doc.meta.factual.len();
    for (i, b) in ex.momenta.iter().enumerate() {
        let want = momentum(&steps[..i.min(steps.len())], cfg.momentum_window, dim);
        c.check(all_close(&want, b), || format!("momentum at step {i} is not the window mean"));
    }
    if doc.meta.status == TraceStatus::Success {
        c.check(
            ex.scores.last().is_some_and(|s| *s >= cfg.decision_threshold),
            || "explore ended below the decision threshold".into(),
        );
        if let (Some(r), Some(last)) = (&doc.recourse, ex.positions.last()) {
            c.check(all_close(last, &r.counterfactual), || "explore endpoint differs from counterfactual".into());
        }
    }
}

fn expected_weight(cfg: &ExplainerConfig, length: f64, mean: f64) -> f64 {
    match (cfg.weight_mode, cfg.density_weighting) {
        (WeightMode::Strict, _) => length,
        (WeightMode::Average, DensityWeighting::Multiply) => mean * length,
        (WeightMode::Average, DensityWeighting::Divide) => length / mean,
    }
}

fn verify_graph(c: &mut Checker, g: &GraphSection, doc: &TraceDocument) {
    let cfg = &doc.meta.config;
    let n = g.vertices.len();
    c.check(n >= 1, || "graph has no vertices".into());
    if let Some(v0) = g.vertices.first() {
        c.check(all_close(&v0.values, &doc.meta.factual), || "graph vertex 0 is not the factual".into());
    }
    for (i, v) in g.vertices.iter().enumerate() {
        c.check(v.index == i, || format!("vertex {i} carries index {}", v.index));
        if let Ok(raw) = doc.meta.schema.inverse_standardize(&v.values) {
            c.check(all_close(&raw, &v.values_raw), || format!("vertex {i} raw values inconsistent"));
        }
        if let Some(id) = v.training_id {
            let in_ledger = doc.privacy.exploit_ids.binary_search(&id).is_ok()
                || doc.privacy.explore_ids.binary_search(&id).is_ok();
            c.check(in_ledger || i + 1 == n, || format!("vertex {i} (training id {id}) missing from ledger"));
        }
    }
    let tp = doc.meta.density_threshold;
    let mut last = None;
    for e in &g.edges {
        c.check(e.a < e.b && e.b < n, || format!("edge ({}, {}) out of range", e.a, e.b));
        c.check(last < Some((e.a, e.b)), || "edges not sorted and unique".into());
        last = Some((e.a, e.b));
        c.check(e.weight > 0.0 && e.weight.is_finite(), || format!("edge ({}, {}) weight not positive", e.a, e.b));
        if e.b < n {
            let len = distance(&g.vertices[e.a].values, &g.vertices[e.b].values);
            c.check(close(len, e.length), || format!("edge ({}, {}) length inconsistent", e.a, e.b));
        }
        c.check(close(e.weight, expected_weight(cfg, e.length, e.line_mean)), || {
            format!("edge ({}, {}) weight does not follow the weighting rule", e.a, e.b)
        });
        if let Some(tp) = tp {
            let passes = match cfg.weight_mode {
                WeightMode::Strict => e.line_min > tp,
                WeightMode::Average => e.line_mean > tp,
            };
            c.check(passes, || format!("edge ({}, {}) fails the density gate", e.a, e.b));
        }
    }
}

fn verify_path(c: &mut Checker, g: &GraphSection, p: &PathSection, doc: &TraceDocument) {
    let n = g.vertices.len();
    c.check(p.vertex_indices.first() == Some(&0), || "path does not start at vertex 0".into());
    c.check(p.vertex_indices.last() == Some(&(n - 1)), || "path does not end at the last vertex".into());
    c.check(p.scores.len() == p.vertex_indices.len(), || "path score count mismatch".into());
    c.check(p.edge_densities.len() + 1 == p.vertex_indices.len(), || "path density count mismatch".into());
    let mut total = 0.0;
    for (j, w) in p.vertex_indices.windows(2).enumerate() {
        let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
        match g.edges.binary_search_by(|e| (e.a, e.b).cmp(&(a, b))) {
            Ok(ix) => {
                let e = &g.edges[ix];
                total += e.weight;
                if let Some(d) = p.edge_densities.get(j) {
                    c.check(close(*d, e.line_mean), || format!("path density {j} differs from edge record"));
                }
            }
            Err(_) => c.check(false, || format!("path uses missing edge ({a}, {b})")),
        }
    }
    c.check(close(total, p.total_weight), || {
        format!("path weight {} differs from edge sum {total}", p.total_weight)
    });
    for (&vi, s) in p.vertex_indices.iter().zip(&p.scores) {
        if let Some(v) = g.vertices.get(vi) {
            c.check(v.score == *s, || format!("path score at vertex {vi} differs from vertex record"));
        }
    }
    for &vi in p.vertex_indices.iter().skip(1) {
        if let Some(id) = g.vertices.get(vi).and_then(|v| v.training_id) {
            c.check(doc.privacy.enhance_ids.binary_search(&id).is_ok(), || {
                format!("path vertex {vi} (training id {id}) missing from enhance ledger")
            });
        }
    }
}
