//! Enhance stage: minimum-weight path through the local graph, turned into
//! a recourse matrix.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{RecourseError, Result};
use crate::types::{LocalGraph, RecourseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub vertex_indices: Vec<usize>,
    pub total_weight: f64,
}

impl PathResult {
    pub fn n_edges(&self) -> usize {
        self.vertex_indices.len().saturating_sub(1)
    }
}

/// Label ordered by (weight, hop count, vertex sequence); the heap pops the
/// smallest.
#[derive(Debug, Clone)]
struct Label {
    weight: f64,
    path: Vec<usize>,
}

impl Label {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.path.len().cmp(&other.path.len()))
            .then_with(|| self.path.cmp(&other.path))
    }
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}
impl Eq for Label {}
impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Dijkstra with deterministic tie-breaking: among equal-weight paths the
/// one with fewer edges wins, then the lexicographically smallest sequence.
pub fn shortest_path(graph: &LocalGraph, source: usize, target: usize) -> Result<PathResult> {
    let n = graph.n_vertices();
    if source >= n || target >= n {
        return Err(RecourseError::UnknownId(source.max(target)));
    }
    let adj = graph.adjacency();
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    let start = Label {
        weight: 0.0,
        path: vec![source],
    };
    best[source] = Some(start.clone());
    heap.push(start);
    while let Some(label) = heap.pop() {
        let u = *label.path.last().expect("paths are non-empty");
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if u == target {
            return Ok(PathResult {
                vertex_indices: label.path,
                total_weight: label.weight,
            });
        }
        for &(v, w) in &adj[u] {
            if settled[v] {
                continue;
            }
            let mut path = label.path.clone();
            path.push(v);
            let cand = Label {
                weight: label.weight + w,
                path,
            };
            let improves = best[v]
                .as_ref()
                .is_none_or(|cur| cand.key_cmp(cur) == Ordering::Less);
            if improves {
                best[v] = Some(cand.clone());
                heap.push(cand);
            }
        }
    }
    Err(RecourseError::NoPath { from: source, to: target })
}

/// Difference consecutive path vertices into step vectors.
pub fn path_to_recourse(graph: &LocalGraph, path: &PathResult) -> Result<RecourseMatrix> {
    let (&first, rest) = path
        .vertex_indices
        .split_first()
        .ok_or(RecourseError::Empty("path has no vertices"))?;
    let origin = graph.vertex(first).clone();
    let positions: Vec<&[f64]> = rest.iter().map(|&i| graph.vertex(i).as_slice()).collect();
    RecourseMatrix::from_positions(origin, &positions)
}
