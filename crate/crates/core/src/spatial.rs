//! KD-tree nearest-neighbour search with per-session point deactivation.
//!
//! The tree itself is immutable and shared behind an `Arc`. Each session
//! wraps it in a [`SpatialIndex`], which owns the active flags. Deactivated
//! points stay in the tree as tombstones; once more than half of the tree is
//! tombstoned the view rebuilds a private tree over the survivors.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::error::{RecourseError, Result};
use crate::types::{squared_distance, PointMatrix};

/// A query hit: training id and Euclidean distance to the query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

#[derive(Debug, Clone)]
struct Node {
    id: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static KD-tree over (a subset of) the rows of a point matrix.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Arc<PointMatrix>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

/// Heap key ordered by `(squared distance, id)`.
#[derive(Debug, Clone, Copy)]
struct Key(f64, usize);

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl KdTree {
    pub fn build(points: Arc<PointMatrix>) -> Self {
        let ids: Vec<usize> = (0..points.n()).collect();
        Self::build_subset(points, ids)
    }

    pub fn build_subset(points: Arc<PointMatrix>, mut ids: Vec<usize>) -> Self {
        let mut nodes = Vec::with_capacity(ids.len());
        let root = Self::build_rec(&points, &mut ids, &mut nodes);
        Self {
            points,
            nodes,
            root,
        }
    }

    fn build_rec(points: &PointMatrix, ids: &mut [usize], nodes: &mut Vec<Node>) -> Option<usize> {
        if ids.is_empty() {
            return None;
        }
        let axis = widest_axis(points, ids);
        let mid = ids.len() / 2;
        ids.select_nth_unstable_by(mid, |&a, &b| {
            points.row(a)[axis]
                .total_cmp(&points.row(b)[axis])
                .then(a.cmp(&b))
        });
        let id = ids[mid];
        let slot = nodes.len();
        nodes.push(Node {
            id,
            axis,
            left: None,
            right: None,
        });
        let (lo, rest) = ids.split_at_mut(mid);
        let left = Self::build_rec(points, lo, nodes);
        let right = Self::build_rec(points, &mut rest[1..], nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        Some(slot)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn points(&self) -> &Arc<PointMatrix> {
        &self.points
    }

    fn knn_filtered(&self, query: &[f64], k: usize, active: &dyn Fn(usize) -> bool) -> Vec<Neighbor> {
        let mut heap: BinaryHeap<Key> = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.knn_rec(self.root, query, k, active, &mut heap);
        }
        let mut hits = heap.into_vec();
        hits.sort();
        hits.into_iter()
            .map(|Key(d2, id)| Neighbor {
                id,
                distance: d2.sqrt(),
            })
            .collect()
    }

    fn knn_rec(
        &self,
        node: Option<usize>,
        query: &[f64],
        k: usize,
        active: &dyn Fn(usize) -> bool,
        heap: &mut BinaryHeap<Key>,
    ) {
        let Some(slot) = node else { return };
        let node = &self.nodes[slot];
        let p = self.points.row(node.id);
        if active(node.id) {
            let key = Key(squared_distance(query, p), node.id);
            if heap.len() < k {
                heap.push(key);
            } else if key < *heap.peek().expect("heap is full") {
                heap.pop();
                heap.push(key);
            }
        }
        let diff = query[node.axis] - p[node.axis];
        let (near, far) = if diff <= 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.knn_rec(near, query, k, active, heap);
        let visit_far = heap.len() < k || diff * diff <= heap.peek().expect("non-empty").0;
        if visit_far {
            self.knn_rec(far, query, k, active, heap);
        }
    }

    fn radius_filtered(&self, query: &[f64], radius: f64, active: &dyn Fn(usize) -> bool) -> Vec<Neighbor> {
        let r2 = radius * radius;
        let mut hits = Vec::new();
        let mut stack: Vec<usize> = self.root.into_iter().collect();
        while let Some(slot) = stack.pop() {
            let node = &self.nodes[slot];
            let p = self.points.row(node.id);
            if active(node.id) {
                let d2 = squared_distance(query, p);
                if d2 <= r2 {
                    hits.push(Key(d2, node.id));
                }
            }
            let diff = query[node.axis] - p[node.axis];
            let (near, far) = if diff <= 0.0 {
                (node.left, node.right)
            } else {
                (node.right, node.left)
            };
            stack.extend(near);
            if diff * diff <= r2 {
                stack.extend(far);
            }
        }
        hits.sort();
        hits.into_iter()
            .map(|Key(d2, id)| Neighbor {
                id,
                distance: d2.sqrt(),
            })
            .collect()
    }
}

fn widest_axis(points: &PointMatrix, ids: &[usize]) -> usize {
    let dim = points.dim();
    let mut best = (0, f64::NEG_INFINITY);
    for axis in 0..dim {
        let (lo, hi) = ids.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = points.row(i)[axis];
            (lo.min(v), hi.max(v))
        });
        if hi - lo > best.1 {
            best = (axis, hi - lo);
        }
    }
    best.0
}

/// Session-local view over a shared [`KdTree`] with deactivation.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    base: Arc<KdTree>,
    rebuilt: Option<KdTree>,
    active: Vec<bool>,
    n_active: usize,
    tombstones: usize,
}

impl SpatialIndex {
    pub fn build(points: PointMatrix) -> Result<Self> {
        if points.n() == 0 {
            return Err(RecourseError::Empty("spatial index needs at least one point"));
        }
        Ok(Self::view(Arc::new(KdTree::build(Arc::new(points)))))
    }

    /// Fresh view with every point active.
    pub fn view(base: Arc<KdTree>) -> Self {
        let n = base.points().n();
        let active = vec![true; n];
        let n_active = base.len();
        Self {
            base,
            rebuilt: None,
            active,
            n_active,
            tombstones: 0,
        }
    }

    fn tree(&self) -> &KdTree {
        self.rebuilt.as_ref().unwrap_or(&self.base)
    }

    pub fn dim(&self) -> usize {
        self.base.points().dim()
    }

    /// Number of points indexed (active or not).
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn n_active(&self) -> usize {
        self.n_active
    }

    pub fn is_active(&self, id: usize) -> bool {
        self.active.get(id).copied().unwrap_or(false)
    }

    pub fn point(&self, id: usize) -> &[f64] {
        self.base.points().row(id)
    }

    pub fn points(&self) -> &Arc<PointMatrix> {
        self.base.points()
    }

    fn check_query(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(RecourseError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// The `min(k, active)` nearest active points, ascending by distance,
    /// ties broken by lower id.
    pub fn knn(&self, x: &[f64], k: usize) -> Result<Vec<Neighbor>> {
        self.check_query(x)?;
        if self.n_active == 0 {
            return Err(RecourseError::IndexExhausted);
        }
        let active = |id: usize| self.active[id];
        Ok(self.tree().knn_filtered(x, k, &active))
    }

    /// All active points within `radius` (inclusive), ascending.
    pub fn radius_query(&self, x: &[f64], radius: f64) -> Result<Vec<Neighbor>> {
        self.check_query(x)?;
        if radius.is_nan() || radius <= 0.0 {
            return Err(RecourseError::InvalidConfig(format!(
                "radius must be positive, got {radius}"
            )));
        }
        let active = |id: usize| self.active[id];
        Ok(self.tree().radius_filtered(x, radius, &active))
    }

    pub fn deactivate(&mut self, id: usize) -> Result<()> {
        match self.active.get(id) {
            None => return Err(RecourseError::UnknownId(id)),
            Some(false) => return Err(RecourseError::AlreadyDeactivated(id)),
            Some(true) => {}
        }
        self.active[id] = false;
        self.n_active -= 1;
        self.tombstones += 1;
        if self.tombstones * 2 > self.tree().len() && self.n_active > 0 {
            let ids: Vec<usize> = (0..self.active.len()).filter(|&i| self.active[i]).collect();
            self.rebuilt = Some(KdTree::build_subset(Arc::clone(self.base.points()), ids));
            self.tombstones = 0;
        }
        Ok(())
    }
}
