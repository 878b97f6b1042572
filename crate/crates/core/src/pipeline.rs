//! Explore → exploit → enhance orchestration.
//!
//! An [`Explainer`] holds the read-only pieces shared across explanations
//! (dataset, model, density estimate, base KD-tree). Each explanation runs
//! in its own [`Session`], which owns the privacy ledger and gives every
//! search stage a fresh active-set view of the tree.

use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::density::{line_average_density, quantile_of_sorted, Density, DensityModel};
use crate::enhance::{path_to_recourse, shortest_path, PathResult};
use crate::error::{RecourseError, Result, StageFailure};
use crate::exploit::{build_local_graph, EdgeWeightRule};
use crate::explore::{find_counterfactual, ExploreTrace, ScoreCache};
use crate::model::{score, Negated, ScoringModel};
use crate::spatial::{KdTree, SpatialIndex};
use crate::types::{
    Bandwidth, Dataset, DensityThreshold, ExplainerConfig, FeatureSchema, Instance, LocalGraph,
    PrivacyLedger, RecourseMatrix, Stage, Target,
};

/// Drop candidates that break an immutable or bounded feature relative to
/// the factual.
pub fn apply_constraints<'a>(
    candidates: &[(&'a [f64], usize)],
    factual: &[f64],
    schema: &FeatureSchema,
) -> Vec<(&'a [f64], usize)> {
    if !schema.has_constraints() {
        return candidates.to_vec();
    }
    candidates
        .iter()
        .filter(|(p, _)| {
            schema
                .features
                .iter()
                .zip(factual.iter().zip(p.iter()))
                .all(|(f, (&x, &v))| f.constraint.permits(x, v))
        })
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub n_total: usize,
    pub explore: f64,
    pub exploit: f64,
    pub enhance: f64,
    pub total: f64,
    pub accessed: usize,
}

pub fn privacy_report(ledger: &PrivacyLedger) -> PrivacyReport {
    PrivacyReport {
        n_total: ledger.n_total,
        explore: ledger.fraction(Stage::Explore),
        exploit: ledger.fraction(Stage::Exploit),
        enhance: ledger.fraction(Stage::Enhance),
        total: ledger.total_fraction(),
        accessed: ledger.union().len(),
    }
}

/// Successful explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct RecourseResult {
    pub factual: Instance,
    pub counterfactual: Instance,
    pub recourse: RecourseMatrix,
    pub graph: LocalGraph,
    pub path: PathResult,
    /// Decision-function value at every path vertex.
    pub path_scores: Vec<f64>,
    /// Line-average density along every path edge.
    pub path_densities: Vec<f64>,
    pub ledger: PrivacyLedger,
    /// `None` when the counterfactual was supplied or the factual was already positive.
    pub explore: Option<ExploreTrace>,
    /// Absolute density threshold the final graph was built with.
    pub density_threshold: f64,
    pub retried: bool,
}

/// Failed explanation, with whatever was produced before the failure.
#[derive(Debug, Clone)]
pub struct ExplainFailure {
    pub stage: Stage,
    pub error: RecourseError,
    pub explore: Option<ExploreTrace>,
    pub counterfactual: Option<Instance>,
    pub graph: Option<LocalGraph>,
    pub ledger: PrivacyLedger,
    pub density_threshold: Option<f64>,
    pub retried: bool,
}

impl std::fmt::Display for ExplainFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for ExplainFailure {}

/// Density estimate plus the sorted training densities used for quantile
/// thresholds.
#[derive(Debug)]
pub struct DensityContext {
    pub model: DensityModel,
    sorted: Vec<f64>,
    bandwidth: Bandwidth,
}

impl DensityContext {
    pub fn fit(dataset: &Dataset, bandwidth: Bandwidth) -> Result<Self> {
        let model = DensityModel::fit(Arc::new(dataset.points.clone()), bandwidth)?;
        let mut sorted: Vec<f64> = dataset.points.rows().map(|p| model.density_at(p)).collect();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            model,
            sorted,
            bandwidth,
        })
    }

    pub fn threshold(&self, spec: DensityThreshold) -> Result<f64> {
        match spec {
            DensityThreshold::Absolute(t) => Ok(t),
            DensityThreshold::Quantile(q) => quantile_of_sorted(&self.sorted, q),
        }
    }
}

/// Shared, read-only state for explaining many factuals.
#[derive(Clone)]
pub struct Explainer {
    dataset: Arc<Dataset>,
    model: Arc<dyn ScoringModel>,
    density: Arc<DensityContext>,
    tree: Arc<KdTree>,
}

impl Explainer {
    pub fn new(dataset: Dataset, model: Arc<dyn ScoringModel>, bandwidth: Bandwidth) -> Result<Self> {
        if model.dim() != dataset.dim() {
            return Err(RecourseError::DimensionMismatch {
                expected: dataset.dim(),
                got: model.dim(),
            });
        }
        let density = Arc::new(DensityContext::fit(&dataset, bandwidth)?);
        let tree = Arc::new(KdTree::build(Arc::clone(density.model.centers())));
        Ok(Self {
            dataset: Arc::new(dataset),
            model,
            density,
            tree,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn model(&self) -> &Arc<dyn ScoringModel> {
        &self.model
    }

    pub fn density(&self) -> &DensityContext {
        &self.density
    }

    /// The decision function an explanation toward `target` climbs.
    pub fn target_model(&self, target: Target) -> Arc<dyn ScoringModel> {
        match target {
            Target::Positive => Arc::clone(&self.model),
            Target::Negative => Arc::new(Negated(Arc::clone(&self.model))),
        }
    }

    /// Start a session for one factual.
    pub fn session(&self, config: ExplainerConfig) -> Result<Session> {
        config.validate()?;
        let density = if config.kde_bandwidth == self.density.bandwidth {
            Arc::clone(&self.density)
        } else {
            Arc::new(DensityContext::fit(&self.dataset, config.kde_bandwidth)?)
        };
        let model = self.target_model(config.target);
        Ok(Session {
            dataset: Arc::clone(&self.dataset),
            model,
            density,
            tree: Arc::clone(&self.tree),
            ledger: PrivacyLedger::new(self.dataset.n()),
            cache: ScoreCache::new(self.dataset.n()),
            config,
        })
    }

    /// Convenience: one session, one factual.
    pub fn explain(
        &self,
        factual: &Instance,
        counterfactual: Option<&Instance>,
        config: &ExplainerConfig,
    ) -> std::result::Result<RecourseResult, ExplainFailure> {
        let session = self.session(config.clone()).map_err(|e| ExplainFailure {
            stage: Stage::Explore,
            error: e,
            explore: None,
            counterfactual: None,
            graph: None,
            ledger: PrivacyLedger::new(self.dataset.n()),
            density_threshold: None,
            retried: false,
        })?;
        session.explain(factual, counterfactual)
    }

    /// Explain several factuals on worker threads; output order matches input.
    pub fn explain_batch(
        &self,
        factuals: &[Instance],
        config: &ExplainerConfig,
        threads: usize,
    ) -> Vec<std::result::Result<RecourseResult, ExplainFailure>> {
        let threads = threads.max(1);
        let chunk = factuals.len().div_ceil(threads).max(1);
        std::thread::scope(|scope| {
            let handles: Vec<_> = factuals
                .chunks(chunk)
                .map(|part| scope.spawn(move || part.iter().map(|f| self.explain(f, None, config)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("explanation worker panicked"))
                .collect()
        })
    }
}

/// State of one explanation.
pub struct Session {
    dataset: Arc<Dataset>,
    model: Arc<dyn ScoringModel>,
    density: Arc<DensityContext>,
    tree: Arc<KdTree>,
    ledger: PrivacyLedger,
    cache: ScoreCache,
    config: ExplainerConfig,
}

impl Session {
    pub fn config(&self) -> &ExplainerConfig {
        &self.config
    }

    pub fn ledger(&self) -> &PrivacyLedger {
        &self.ledger
    }

    /// Fresh active-set view with the factual's own row removed.
    fn view(&self, factual: &Instance) -> Result<SpatialIndex> {
        let mut index = SpatialIndex::view(Arc::clone(&self.tree));
        if let Some(id) = factual.id {
            index.deactivate(id)?;
        }
        Ok(index)
    }

    /// Run all three stages. Supplying `counterfactual` skips explore.
    pub fn explain(
        mut self,
        factual: &Instance,
        counterfactual: Option<&Instance>,
    ) -> std::result::Result<RecourseResult, ExplainFailure> {
        let mut failure = FailureBuilder::default();
        macro_rules! bail {
            ($stage:expr, $err:expr) => {
                return Err(failure.build($stage, $err, self.ledger.clone()))
            };
        }

        if factual.dim() != self.dataset.dim() {
            bail!(
                Stage::Explore,
                RecourseError::DimensionMismatch {
                    expected: self.dataset.dim(),
                    got: factual.dim(),
                }
            );
        }
        let tf = self.config.decision_threshold;
        let f0 = match score(self.model.as_ref(), &factual.values) {
            Ok(s) => s,
            Err(e) => bail!(Stage::Explore, e),
        };
        if f0 >= tf && counterfactual.is_none() {
            return Ok(self.trivial(factual, f0));
        }

        let (cf, explore) = match counterfactual {
            Some(cf) => {
                match score(self.model.as_ref(), &cf.values) {
                    Ok(s) if s >= tf => {}
                    Ok(s) => bail!(
                        Stage::Explore,
                        RecourseError::InvalidConfig(format!(
                            "supplied counterfactual scores {s}, below the threshold {tf}"
                        ))
                    ),
                    Err(e) => bail!(Stage::Explore, e),
                }
                (cf.clone(), None)
            }
            None => {
                let mut index = match self.view(factual) {
                    Ok(i) => i,
                    Err(e) => bail!(Stage::Explore, e),
                };
                match find_counterfactual(
                    factual,
                    self.model.as_ref(),
                    &mut index,
                    &self.config,
                    &self.dataset.schema,
                    &mut self.ledger,
                    &mut self.cache,
                ) {
                    Ok((cf, trace)) => (cf, Some(trace)),
                    Err(StageFailure { error, partial }) => {
                        failure.explore = Some(partial);
                        bail!(Stage::Explore, error);
                    }
                }
            }
        };
        failure.explore = explore.clone();
        failure.counterfactual = Some(cf.clone());
        if cf.values == factual.values {
            return Ok(self.trivial(factual, f0));
        }

        let mut threshold = match self.density.threshold(self.config.density_threshold) {
            Ok(t) => t,
            Err(e) => bail!(Stage::Exploit, e),
        };
        let relaxed = match self.config.retry_quantile.map(|q| self.density.threshold(DensityThreshold::Quantile(q))) {
            Some(Ok(t)) if t < threshold => Some(t),
            Some(Err(e)) => bail!(Stage::Exploit, e),
            _ => None,
        };

        let mut retried = false;
        let (graph, path) = loop {
            failure.density_threshold = Some(threshold);
            failure.retried = retried;
            let attempt = self.connect(factual, &cf, threshold);
            match attempt {
                Ok(found) => break found,
                Err((stage, error, graph)) => {
                    failure.graph = graph;
                    match relaxed {
                        Some(lower) if !retried && error.is_connectivity_failure() => {
                            warn!(
                                "{stage} stage failed ({error}); retrying once with density threshold {lower:.6} (was {threshold:.6})"
                            );
                            threshold = lower;
                            retried = true;
                        }
                        _ => bail!(stage, error),
                    }
                }
            }
        };

        let recourse = match path_to_recourse(&graph, &path) {
            Ok(z) => z,
            Err(e) => bail!(Stage::Enhance, e),
        };
        self.ledger
            .record_all(Stage::Enhance, path.vertex_indices.iter().skip(1).filter_map(|&i| graph.vertex(i).id));
        let mut path_scores = Vec::with_capacity(path.vertex_indices.len());
        for &i in &path.vertex_indices {
            match score(self.model.as_ref(), &graph.vertex(i).values) {
                Ok(s) => path_scores.push(s),
                Err(e) => bail!(Stage::Enhance, e),
            }
        }
        let mut path_densities = Vec::with_capacity(path.n_edges());
        for w in path.vertex_indices.windows(2) {
            match line_average_density(
                &self.density.model,
                &graph.vertex(w[0]).values,
                &graph.vertex(w[1]).values,
                self.config.line_samples,
                self.config.line_sampling,
            ) {
                Ok(d) => path_densities.push(d),
                Err(e) => bail!(Stage::Enhance, e),
            }
        }
        debug!(
            "explained with {} steps, {} graph vertices, {:.4} of training data accessed",
            recourse.k(),
            graph.n_vertices(),
            self.ledger.total_fraction()
        );
        Ok(RecourseResult {
            factual: factual.clone(),
            counterfactual: cf,
            recourse,
            graph,
            path,
            path_scores,
            path_densities,
            ledger: self.ledger,
            explore,
            density_threshold: threshold,
            retried,
        })
    }

    /// Exploit then enhance at a fixed threshold.
    #[allow(clippy::type_complexity)]
    fn connect(
        &mut self,
        factual: &Instance,
        cf: &Instance,
        threshold: f64,
    ) -> std::result::Result<(LocalGraph, PathResult), (Stage, RecourseError, Option<LocalGraph>)> {
        let mut index = self.view(factual).map_err(|e| (Stage::Exploit, e, None))?;
        let rule = EdgeWeightRule::from_config(&self.config, threshold);
        let graph = build_local_graph(
            factual,
            cf,
            &mut index,
            &self.density.model,
            &rule,
            &self.config,
            &self.dataset.schema,
            &mut self.ledger,
        )
        .map_err(|StageFailure { error, partial }| (Stage::Exploit, error, Some(partial)))?;
        let target = graph.n_vertices() - 1;
        match shortest_path(&graph, 0, target) {
            Ok(path) => Ok((graph, path)),
            Err(e) => Err((Stage::Enhance, e, Some(graph))),
        }
    }

    fn trivial(self, factual: &Instance, f0: f64) -> RecourseResult {
        let threshold = self.density.threshold(self.config.density_threshold).unwrap_or(f64::NAN);
        RecourseResult {
            factual: factual.clone(),
            counterfactual: factual.clone(),
            recourse: RecourseMatrix::empty(factual.clone()),
            graph: LocalGraph::new(factual.clone()),
            path: PathResult {
                vertex_indices: vec![0],
                total_weight: 0.0,
            },
            path_scores: vec![f0],
            path_densities: Vec::new(),
            ledger: self.ledger,
            explore: None,
            density_threshold: threshold,
            retried: false,
        }
    }
}

#[derive(Default)]
struct FailureBuilder {
    explore: Option<ExploreTrace>,
    counterfactual: Option<Instance>,
    graph: Option<LocalGraph>,
    density_threshold: Option<f64>,
    retried: bool,
}

impl FailureBuilder {
    fn build(&mut self, stage: Stage, error: RecourseError, ledger: PrivacyLedger) -> ExplainFailure {
        ExplainFailure {
            stage,
            error,
            explore: self.explore.take(),
            counterfactual: self.counterfactual.take(),
            graph: self.graph.take(),
            ledger,
            density_threshold: self.density_threshold,
            retried: self.retried,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Constraint;

    fn schema_with(constraints: &[Constraint]) -> FeatureSchema {
        let mut s = FeatureSchema::identity(constraints.len());
        for (j, c) in constraints.iter().enumerate() {
            s.set_constraint(j, *c).unwrap();
        }
        s
    }

    #[test]
    fn constraint_filter_examples() {
        let schema = schema_with(&[
            Constraint::Immutable,
            Constraint::Bounded {
                lower_delta: -1.0,
                upper_delta: 1.0,
            },
        ]);
        let factual = [0.5, 0.0];
        let same = [0.5, 0.3];
        let moved = [0.51, 0.3];
        let far = [0.5, 1.5];
        let cands: Vec<(&[f64], usize)> = vec![(&same, 0), (&moved, 1), (&far, 2)];
        let kept = apply_constraints(&cands, &factual, &schema);
        assert_eq!(kept.iter().map(|c| c.1).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn untouched_ledger_reports_zero() {
        let r = privacy_report(&PrivacyLedger::new(100));
        assert_eq!((r.explore, r.exploit, r.enhance, r.total), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn explore_fraction_counting_bound() {
        let mut l = PrivacyLedger::new(1000);
        for s in 0..4 {
            l.record_all(Stage::Explore, (s * 30..s * 30 + 50).collect::<Vec<_>>());
        }
        let r = privacy_report(&l);
        assert!(r.explore <= 50.0 * 4.0 / 1000.0);
        assert!(r.total <= 1.0);
    }
}
