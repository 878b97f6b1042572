//! Scoring models: the black-box decision function and reference
//! implementations that ship with the library.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RecourseError, Result};
use crate::spatial::SpatialIndex;
use crate::types::{squared_distance, Dataset, PointMatrix};

/// A deterministic decision function with scores in `[0, 1]`.
pub trait ScoringModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Score an unchecked point. Callers go through [`score`].
    fn score_unchecked(&self, x: &[f64]) -> f64;

    fn kind(&self) -> &str;

    fn fingerprint(&self) -> u64 {
        0
    }
}

/// Score `x`, checking dimension and finiteness.
pub fn score<M: ScoringModel + ?Sized>(model: &M, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(RecourseError::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    if let Some(column) = x.iter().position(|v| !v.is_finite()) {
        return Err(RecourseError::NonFinite { row: 0, column });
    }
    Ok(model.score_unchecked(x).clamp(0.0, 1.0))
}

/// `1` iff `score(x) ≥ threshold`.
pub fn classify<M: ScoringModel + ?Sized>(model: &M, x: &[f64], threshold: f64) -> Result<u8> {
    Ok(u8::from(score(model, x)? >= threshold))
}

/// Wraps a model as `1 − f`, used to explain toward the negative class.
pub struct Negated(pub Arc<dyn ScoringModel>);

impl ScoringModel for Negated {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        1.0 - self.0.score_unchecked(x).clamp(0.0, 1.0)
    }

    fn kind(&self) -> &str {
        "negated"
    }

    fn fingerprint(&self) -> u64 {
        !self.0.fingerprint()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    KnnProbability,
    RbfLogistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub seed: u64,
    /// Neighbours voted over by the k-NN model.
    pub knn_k: usize,
    /// Number of RBF centers (capped at n).
    pub rbf_centers: usize,
    /// RBF width: `φ(x) = exp(−γ‖x − c‖²)`.
    pub rbf_gamma: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            knn_k: 15,
            rbf_centers: 64,
            rbf_gamma: 2.0,
            learning_rate: 0.5,
            epochs: 1500,
            l2: 1e-4,
        }
    }
}

/// Fraction of positive labels among the `k` nearest training points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnProbabilityModel {
    points: PointMatrix,
    labels: Vec<u8>,
    k: usize,
    #[serde(skip)]
    index: Option<Arc<SpatialIndex>>,
    fingerprint: u64,
}

impl KnnProbabilityModel {
    pub fn new(points: PointMatrix, labels: Vec<u8>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(RecourseError::InvalidConfig("knn k must be positive".into()));
        }
        let fingerprint = fingerprint_data(&points, &labels);
        let mut model = Self {
            points,
            labels,
            k,
            index: None,
            fingerprint,
        };
        model.ensure_index()?;
        Ok(model)
    }

    /// Rebuild the search tree (needed after deserialization).
    pub fn ensure_index(&mut self) -> Result<()> {
        if self.index.is_none() {
            self.index = Some(Arc::new(SpatialIndex::build(self.points.clone())?));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

impl ScoringModel for KnnProbabilityModel {
    fn dim(&self) -> usize {
        self.points.dim()
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        let index = self.index.as_ref().expect("index built at construction");
        let hits = index.knn(x, self.k).expect("model index is never exhausted");
        let positives = hits.iter().filter(|h| self.labels[h.id] == 1).count();
        positives as f64 / hits.len() as f64
    }

    fn kind(&self) -> &str {
        "knn_probability"
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

/// Logistic regression on Gaussian RBF features, fit by full-batch
/// gradient descent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RbfLogisticModel {
    centers: PointMatrix,
    gamma: f64,
    weights: Vec<f64>,
    bias: f64,
    fingerprint: u64,
}

impl RbfLogisticModel {
    pub fn fit(dataset: &Dataset, options: &FitOptions) -> Result<Self> {
        let n = dataset.n();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        order.shuffle(&mut rng);
        order.truncate(options.rbf_centers.clamp(1, n));
        order.sort_unstable();
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| dataset.points.row(i).to_vec()).collect();
        let centers = PointMatrix::from_rows(&rows)?;
        let m = centers.n();
        let gamma = options.rbf_gamma;

        let features: Vec<Vec<f64>> = dataset
            .points
            .rows()
            .map(|x| rbf_features(&centers, gamma, x))
            .collect();
        let y: Vec<f64> = dataset.labels.iter().map(|&l| f64::from(l)).collect();

        let mut weights = vec![0.0; m];
        let mut bias = 0.0;
        let mut grad = vec![0.0; m];
        for _ in 0..options.epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (phi, &yi) in features.iter().zip(&y) {
                let z = bias + dot(&weights, phi);
                let err = sigmoid(z) - yi;
                for (g, p) in grad.iter_mut().zip(phi) {
                    *g += err * p;
                }
                grad_b += err;
            }
            let scale = options.learning_rate / n as f64;
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= scale * g + options.learning_rate * options.l2 * *w;
            }
            bias -= scale * grad_b;
        }
        Ok(Self {
            centers,
            gamma,
            weights,
            bias,
            fingerprint: fingerprint_data(&dataset.points, &dataset.labels) ^ options.seed,
        })
    }
}

fn rbf_features(centers: &PointMatrix, gamma: f64, x: &[f64]) -> Vec<f64> {
    centers
        .rows()
        .map(|c| (-gamma * squared_distance(x, c)).exp())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ScoringModel for RbfLogisticModel {
    fn dim(&self) -> usize {
        self.centers.dim()
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        let z = self.bias + dot(&self.weights, &rbf_features(&self.centers, self.gamma, x));
        sigmoid(z)
    }

    fn kind(&self) -> &str {
        "rbf_logistic"
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }
}

/// Serializable union of the built-in models.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceModel {
    KnnProbability(KnnProbabilityModel),
    RbfLogistic(RbfLogisticModel),
}

impl ReferenceModel {
    /// Restore derived state after deserialization.
    pub fn prepare(&mut self) -> Result<()> {
        match self {
            ReferenceModel::KnnProbability(m) => m.ensure_index(),
            ReferenceModel::RbfLogistic(_) => Ok(()),
        }
    }
}

impl ScoringModel for ReferenceModel {
    fn dim(&self) -> usize {
        match self {
            ReferenceModel::KnnProbability(m) => m.dim(),
            ReferenceModel::RbfLogistic(m) => m.dim(),
        }
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            ReferenceModel::KnnProbability(m) => m.score_unchecked(x),
            ReferenceModel::RbfLogistic(m) => m.score_unchecked(x),
        }
    }

    fn kind(&self) -> &str {
        match self {
            ReferenceModel::KnnProbability(m) => m.kind(),
            ReferenceModel::RbfLogistic(m) => m.kind(),
        }
    }

    fn fingerprint(&self) -> u64 {
        match self {
            ReferenceModel::KnnProbability(m) => m.fingerprint(),
            ReferenceModel::RbfLogistic(m) => m.fingerprint(),
        }
    }
}

/// Fit one of the built-in models. Requires both classes to be present.
pub fn fit_reference_model(dataset: &Dataset, kind: ModelKind, options: &FitOptions) -> Result<ReferenceModel> {
    if !dataset.has_both_classes() {
        return Err(RecourseError::SingleClass);
    }
    Ok(match kind {
        ModelKind::KnnProbability => ReferenceModel::KnnProbability(KnnProbabilityModel::new(
            dataset.points.clone(),
            dataset.labels.clone(),
            options.knn_k,
        )?),
        ModelKind::RbfLogistic => ReferenceModel::RbfLogistic(RbfLogisticModel::fit(dataset, options)?),
    })
}

/// FNV-1a over the raw bits of the training data.
fn fingerprint_data(points: &PointMatrix, labels: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    };
    for row in points.rows() {
        for v in row {
            eat(&v.to_bits().to_le_bytes());
        }
    }
    eat(labels);
    h
}

/// Fraction of training rows where `classify` matches the label.
pub fn training_accuracy<M: ScoringModel + ?Sized>(model: &M, dataset: &Dataset, threshold: f64) -> Result<f64> {
    let mut hits = 0usize;
    for (x, &y) in dataset.points.rows().zip(&dataset.labels) {
        if classify(model, x, threshold)? == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.n() as f64)
}
