//! Shared domain types: instances, feature schemas, datasets, recourse
//! matrices, local graphs, configuration and the privacy ledger.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{RecourseError, Result};

/// Squared Euclidean distance between two equal-length slices.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[inline]
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A point in standardized feature space.
///
/// `id` is set when the point is a training row; synthetic positions
/// (search iterates, user-supplied factuals) carry `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<usize>,
}

impl Instance {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values, 0)?;
        if values.is_empty() {
            return Err(RecourseError::Empty("instance has no features"));
        }
        Ok(Self { values, id: None })
    }

    pub fn training(values: Vec<f64>, id: usize) -> Result<Self> {
        let mut inst = Self::new(values)?;
        inst.id = Some(id);
        Ok(inst)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn distance_to(&self, other: &Instance) -> f64 {
        distance(&self.values, &other.values)
    }
}

fn check_finite(values: &[f64], row: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(column) => Err(RecourseError::NonFinite { row, column }),
        None => Ok(()),
    }
}

/// Dense row-major `n × d` matrix of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMatrix {
    data: Vec<f64>,
    dim: usize,
}

impl PointMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(RecourseError::Empty("no rows"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(RecourseError::Empty("rows have no columns"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(RecourseError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            check_finite(row, r)?;
            data.extend_from_slice(row);
        }
        Ok(Self { data, dim })
    }

    pub fn from_flat(data: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() {
            return Err(RecourseError::Empty("matrix is empty"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(RecourseError::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        for (r, row) in data.chunks(dim).enumerate() {
            check_finite(row, r)?;
        }
        Ok(Self { data, dim })
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(|r| r.to_vec()).collect()
    }
}

/// Actionability constraint on a single feature.
///
/// Bounded deltas are in standardized units relative to the factual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    Immutable,
    Bounded {
        lower_delta: f64,
        upper_delta: f64,
    },
    #[default]
    Free,
}

impl Constraint {
    /// Whether moving a feature from `factual` to `value` is allowed.
    pub fn permits(&self, factual: f64, value: f64) -> bool {
        match *self {
            Constraint::Free => true,
            Constraint::Immutable => value == factual,
            Constraint::Bounded {
                lower_delta,
                upper_delta,
            } => value >= factual + lower_delta && value <= factual + upper_delta,
        }
    }

    /// Nearest permitted value to `value`.
    pub fn project(&self, factual: f64, value: f64) -> f64 {
        match *self {
            Constraint::Free => value,
            Constraint::Immutable => factual,
            Constraint::Bounded {
                lower_delta,
                upper_delta,
            } => value.clamp(factual + lower_delta, factual + upper_delta),
        }
    }
}

/// Per-column standardization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: f64,
    pub std_dev: f64,
    /// The raw column was constant; `std_dev` was forced to 1.
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub mean: f64,
    pub std_dev: f64,
    #[serde(default)]
    pub constant: bool,
    #[serde(default)]
    pub constraint: Constraint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(names: &[String], stats: &[ColumnStats]) -> Result<Self> {
        if names.len() != stats.len() {
            return Err(RecourseError::DimensionMismatch {
                expected: stats.len(),
                got: names.len(),
            });
        }
        let features = names
            .iter()
            .zip(stats)
            .map(|(name, s)| {
                if !(s.std_dev > 0.0 && s.std_dev.is_finite()) || !s.mean.is_finite() {
                    return Err(RecourseError::InvalidConstraint {
                        feature: name.clone(),
                        reason: format!("std_dev must be positive, got {}", s.std_dev),
                    });
                }
                Ok(FeatureSpec {
                    name: name.clone(),
                    mean: s.mean,
                    std_dev: s.std_dev,
                    constant: s.constant,
                    constraint: Constraint::Free,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { features })
    }

    /// Identity schema (mean 0, std 1) with generated names `x0, x1, ...`.
    pub fn identity(dim: usize) -> Self {
        let names: Vec<String> = (0..dim).map(|j| format!("x{j}")).collect();
        let stats = vec![
            ColumnStats {
                mean: 0.0,
                std_dev: 1.0,
                constant: false
            };
            dim
        ];
        Self::new(&names, &stats).expect("identity schema is valid")
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| RecourseError::UnknownFeature(name.to_string()))
    }

    pub fn constraints(&self) -> Vec<Constraint> {
        self.features.iter().map(|f| f.constraint).collect()
    }

    pub fn has_constraints(&self) -> bool {
        self.features
            .iter()
            .any(|f| f.constraint != Constraint::Free)
    }

    /// Set a constraint given in standardized units.
    pub fn set_constraint(&mut self, index: usize, constraint: Constraint) -> Result<()> {
        let dim = self.dim();
        let spec = self
            .features
            .get_mut(index)
            .ok_or(RecourseError::DimensionMismatch {
                expected: dim,
                got: index,
            })?;
        if let Constraint::Bounded {
            lower_delta,
            upper_delta,
        } = constraint
        {
            if !(lower_delta <= 0.0 && upper_delta >= 0.0)
                || !lower_delta.is_finite()
                || !upper_delta.is_finite()
            {
                return Err(RecourseError::InvalidConstraint {
                    feature: spec.name.clone(),
                    reason: format!(
                        "bounded deltas must satisfy lower <= 0 <= upper, got [{lower_delta}, {upper_delta}]"
                    ),
                });
            }
        }
        spec.constraint = constraint;
        Ok(())
    }

    /// Set a bounded constraint given in raw feature units.
    pub fn set_bounded_raw(&mut self, name: &str, lower_raw: f64, upper_raw: f64) -> Result<()> {
        let j = self.index_of(name)?;
        let s = self.features[j].std_dev;
        self.set_constraint(
            j,
            Constraint::Bounded {
                lower_delta: lower_raw / s,
                upper_delta: upper_raw / s,
            },
        )
    }

    pub fn set_immutable(&mut self, name: &str) -> Result<()> {
        let j = self.index_of(name)?;
        self.set_constraint(j, Constraint::Immutable)
    }

    /// Map a raw vector into standardized space.
    pub fn standardize_point(&self, raw: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(raw.len())?;
        check_finite(raw, 0)?;
        Ok(raw
            .iter()
            .zip(&self.features)
            .map(|(v, f)| (v - f.mean) / f.std_dev)
            .collect())
    }

    /// Map a standardized vector back into raw units.
    pub fn inverse_standardize(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(point.len())?;
        Ok(point
            .iter()
            .zip(&self.features)
            .map(|(z, f)| z * f.std_dev + f.mean)
            .collect())
    }

    /// Scale a standardized step (difference) into raw units.
    pub fn step_to_raw(&self, step: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(step.len())?;
        Ok(step
            .iter()
            .zip(&self.features)
            .map(|(z, f)| z * f.std_dev)
            .collect())
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(RecourseError::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

/// Output of [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub points: PointMatrix,
    pub stats: Vec<ColumnStats>,
}

/// Z-score each column with the population standard deviation.
///
/// Constant columns get `std_dev = 1` and are flagged.
pub fn standardize(raw: &[Vec<f64>]) -> Result<Standardized> {
    let matrix = PointMatrix::from_rows(raw)?;
    let n = matrix.n() as f64;
    let stats: Vec<ColumnStats> = (0..matrix.dim())
        .map(|j| {
            let mean = matrix.column(j).sum::<f64>() / n;
            let var = matrix.column(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std_dev = var.sqrt();
            if std_dev > 0.0 && std_dev.is_finite() {
                ColumnStats {
                    mean,
                    std_dev,
                    constant: false,
                }
            } else {
                ColumnStats {
                    mean,
                    std_dev: 1.0,
                    constant: true,
                }
            }
        })
        .collect();
    let dim = matrix.dim();
    let data: Vec<f64> = matrix
        .rows()
        .flat_map(|r| {
            r.iter()
                .zip(&stats)
                .map(|(v, s)| (v - s.mean) / s.std_dev)
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(Standardized {
        points: PointMatrix::from_flat(data, dim)?,
        stats,
    })
}

/// Labelled training data in standardized space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: PointMatrix,
    pub labels: Vec<u8>,
    pub schema: FeatureSchema,
}

impl Dataset {
    pub fn new(points: PointMatrix, labels: Vec<u8>, schema: FeatureSchema) -> Result<Self> {
        if labels.len() != points.n() {
            return Err(RecourseError::DimensionMismatch {
                expected: points.n(),
                got: labels.len(),
            });
        }
        if schema.dim() != points.dim() {
            return Err(RecourseError::DimensionMismatch {
                expected: points.dim(),
                got: schema.dim(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(RecourseError::InvalidConfig(format!(
                "labels must be 0 or 1, found {bad}"
            )));
        }
        Ok(Self {
            points,
            labels,
            schema,
        })
    }

    /// Standardize raw rows and build a dataset.
    pub fn from_raw(raw: &[Vec<f64>], labels: Vec<u8>, names: &[String]) -> Result<Self> {
        let Standardized { points, stats } = standardize(raw)?;
        let schema = FeatureSchema::new(names, &stats)?;
        Self::new(points, labels, schema)
    }

    /// Apply an existing schema to raw rows (used when a model was fit elsewhere).
    pub fn from_raw_with_schema(
        raw: &[Vec<f64>],
        labels: Vec<u8>,
        schema: FeatureSchema,
    ) -> Result<Self> {
        let rows = raw
            .iter()
            .map(|r| schema.standardize_point(r))
            .collect::<Result<Vec<_>>>()?;
        Self::new(PointMatrix::from_rows(&rows)?, labels, schema)
    }

    pub fn n(&self) -> usize {
        self.points.n()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn instance(&self, id: usize) -> Result<Instance> {
        if id >= self.n() {
            return Err(RecourseError::UnknownId(id));
        }
        Instance::training(self.points.row(id).to_vec(), id)
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }
}

/// Ordered step vectors whose cumulative sum moves `origin` to the
/// counterfactual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseMatrix {
    pub origin: Instance,
    pub steps: Vec<Vec<f64>>,
}

impl RecourseMatrix {
    pub fn empty(origin: Instance) -> Self {
        Self {
            origin,
            steps: Vec::new(),
        }
    }

    /// Difference consecutive positions; zero-length steps are dropped.
    pub fn from_positions(origin: Instance, positions: &[&[f64]]) -> Result<Self> {
        let dim = origin.dim();
        let mut steps = Vec::new();
        let mut prev: &[f64] = origin.as_slice();
        for p in positions {
            if p.len() != dim {
                return Err(RecourseError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            let step: Vec<f64> = p.iter().zip(prev).map(|(a, b)| a - b).collect();
            if step.iter().any(|&s| s != 0.0) {
                steps.push(step);
            }
            prev = p;
        }
        Ok(Self { origin, steps })
    }

    pub fn k(&self) -> usize {
        self.steps.len()
    }

    /// `origin + Σ steps`.
    pub fn endpoint(&self) -> Vec<f64> {
        let mut x = self.origin.values.clone();
        for s in &self.steps {
            for (xi, si) in x.iter_mut().zip(s) {
                *xi += si;
            }
        }
        x
    }

    /// Largest per-coordinate gap between the reconstructed endpoint and `target`.
    pub fn reconstruction_error(&self, target: &[f64]) -> f64 {
        self.endpoint()
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Undirected weighted graph over locally collected vertices.
///
/// Vertex 0 is the factual. Missing edges stand for zero weight.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalGraph {
    vertices: Vec<Instance>,
    edges: BTreeMap<(usize, usize), f64>,
}

impl LocalGraph {
    pub fn new(origin: Instance) -> Self {
        Self {
            vertices: vec![origin],
            edges: BTreeMap::new(),
        }
    }

    pub fn add_vertex(&mut self, v: Instance) -> usize {
        self.vertices.push(v);
        self.vertices.len() - 1
    }

    /// Store an edge; non-positive weights and self-loops are rejected.
    pub fn set_edge(&mut self, a: usize, b: usize, weight: f64) -> Result<()> {
        if a == b {
            return Err(RecourseError::Degenerate("self-edge"));
        }
        if a >= self.vertices.len() || b >= self.vertices.len() {
            return Err(RecourseError::UnknownId(a.max(b)));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(RecourseError::Degenerate("edge weight must be positive"));
        }
        self.edges.insert((a.min(b), a.max(b)), weight);
        Ok(())
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.edges.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn vertices(&self) -> &[Instance] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Instance {
        &self.vertices[i]
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(a, b, weight)` with `a < b`, in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (a, b, w) in self.edges() {
            adj[a].push((b, w));
            adj[b].push((a, w));
        }
        for list in &mut adj {
            list.sort_by_key(|&(v, _)| v);
        }
        adj
    }

    pub fn training_ids(&self) -> BTreeSet<usize> {
        self.vertices.iter().filter_map(|v| v.id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Explore,
    Exploit,
    Enhance,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Explore => "explore",
            Stage::Exploit => "exploit",
            Stage::Enhance => "enhance",
        })
    }
}

/// Edge admission rule for the local graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Every sampled density along the edge must exceed the threshold.
    Strict,
    /// The mean sampled density must exceed the threshold.
    #[default]
    Average,
}

/// How the average-mode weight uses the line density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DensityWeighting {
    /// `D · ‖vi − vj‖`
    #[default]
    Multiply,
    /// `‖vi − vj‖ / D`
    Divide,
}

/// Placement of the `q + 1` quadrature samples along a line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LineSampling {
    /// Coefficients `(q−i+1)/(q+1)` and `i/(q+1)`: starts at `a`, stops short of `b`.
    #[default]
    Interpolated,
    /// Coefficients `(q−i)/q` and `i/q`: covers both endpoints.
    EndpointInclusive,
}

/// Density threshold, either absolute or as a quantile of training densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum DensityThreshold {
    Absolute(f64),
    Quantile(f64),
}

impl Default for DensityThreshold {
    fn default() -> Self {
        DensityThreshold::Quantile(0.2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Bandwidth {
    /// Scott's rule `n^(−1/(d+4))`.
    #[default]
    Auto,
    Fixed(f64),
}

/// Which class the explanation should reach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Reach `f(x) ≥ T_f`.
    #[default]
    Positive,
    /// Reach `1 − f(x) ≥ T_f`.
    Negative,
}

/// Tunables of a single explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainerConfig {
    pub k_neighbors: usize,
    pub momentum_window: usize,
    pub epsilon: f64,
    pub decision_threshold: f64,
    pub density_threshold: DensityThreshold,
    /// Lower quantile tried once when the graph cannot connect.
    pub retry_quantile: Option<f64>,
    pub line_samples: usize,
    pub line_sampling: LineSampling,
    pub weight_mode: WeightMode,
    pub density_weighting: DensityWeighting,
    pub max_explore_iters: usize,
    pub max_exploit_iters: usize,
    pub kde_bandwidth: Bandwidth,
    /// Deactivate the training point each explore step moved toward.
    pub deactivate_selected: bool,
    /// Accept explore steps through the ball-around-anchor shortcut.
    pub fast_path: bool,
    /// Allow a synthetic vertex toward the counterfactual during graph building.
    pub synthetic_vertices: bool,
    pub target: Target,
    pub seed: u64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 50,
            momentum_window: 5,
            epsilon: 0.5,
            decision_threshold: 0.75,
            density_threshold: DensityThreshold::default(),
            retry_quantile: Some(0.05),
            line_samples: 32,
            line_sampling: LineSampling::default(),
            weight_mode: WeightMode::default(),
            density_weighting: DensityWeighting::default(),
            max_explore_iters: 200,
            max_exploit_iters: 50,
            kde_bandwidth: Bandwidth::Auto,
            deactivate_selected: true,
            fast_path: false,
            synthetic_vertices: false,
            target: Target::Positive,
            seed: 0,
        }
    }
}

impl ExplainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RecourseError::InvalidConfig(msg));
        if self.k_neighbors == 0 {
            return bad("k_neighbors must be positive".into());
        }
        if self.momentum_window == 0 {
            return bad("momentum_window must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return bad(format!(
                "decision_threshold must lie in (0, 1), got {}",
                self.decision_threshold
            ));
        }
        match self.density_threshold {
            DensityThreshold::Absolute(t) if !(t >= 0.0 && t.is_finite()) => {
                return bad(format!("absolute density threshold must be >= 0, got {t}"));
            }
            DensityThreshold::Quantile(q) if !(q > 0.0 && q < 1.0) => {
                return bad(format!("density quantile must lie in (0, 1), got {q}"));
            }
            _ => {}
        }
        if let Some(q) = self.retry_quantile {
            if !(q > 0.0 && q < 1.0) {
                return bad(format!("retry quantile must lie in (0, 1), got {q}"));
            }
        }
        if self.line_samples < 2 {
            return bad(format!("line_samples must be >= 2, got {}", self.line_samples));
        }
        if self.max_explore_iters == 0 || self.max_exploit_iters == 0 {
            return bad("iteration limits must be positive".into());
        }
        if let Bandwidth::Fixed(h) = self.kde_bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(RecourseError::InvalidBandwidth(h));
            }
        }
        Ok(())
    }
}

/// Record of every training id touched, per stage.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub explore: BTreeSet<usize>,
    pub exploit: BTreeSet<usize>,
    pub enhance: BTreeSet<usize>,
    pub n_total: usize,
}

impl PrivacyLedger {
    pub fn new(n_total: usize) -> Self {
        Self {
            n_total,
            ..Self::default()
        }
    }

    /// Record an access; returns true if the id was new for that stage.
    pub fn record(&mut self, stage: Stage, id: usize) -> bool {
        self.stage_mut(stage).insert(id)
    }

    pub fn record_all(&mut self, stage: Stage, ids: impl IntoIterator<Item = usize>) -> usize {
        let set = self.stage_mut(stage);
        let before = set.len();
        set.extend(ids);
        set.len() - before
    }

    pub fn stage(&self, stage: Stage) -> &BTreeSet<usize> {
        match stage {
            Stage::Explore => &self.explore,
            Stage::Exploit => &self.exploit,
            Stage::Enhance => &self.enhance,
        }
    }

    fn stage_mut(&mut self, stage: Stage) -> &mut BTreeSet<usize> {
        match stage {
            Stage::Explore => &mut self.explore,
            Stage::Exploit => &mut self.exploit,
            Stage::Enhance => &mut self.enhance,
        }
    }

    pub fn union(&self) -> BTreeSet<usize> {
        self.explore
            .iter()
            .chain(&self.exploit)
            .chain(&self.enhance)
            .copied()
            .collect()
    }

    pub fn fraction(&self, stage: Stage) -> f64 {
        ratio(self.stage(stage).len(), self.n_total)
    }

    pub fn total_fraction(&self) -> f64 {
        ratio(self.union().len(), self.n_total)
    }

    pub fn contains(&self, id: usize) -> bool {
        self.explore.contains(&id) || self.exploit.contains(&id) || self.enhance.contains(&id)
    }
}

fn ratio(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}
