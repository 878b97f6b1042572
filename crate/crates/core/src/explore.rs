//! Explore stage: momentum-guided greedy walk from the factual until the
//! decision function reaches the threshold.
//!
//! Each iteration queries the `k` nearest active training points, ranks
//! them by `f(x_i) / (1 + ‖x_i − x_t‖)` and moves halfway toward the best
//! one plus the momentum term. A step is only accepted if the segment it
//! traces stays within `ε` of the current position or of one of the queried
//! neighbours, the selected one first (see [`crate::geometry`]); otherwise
//! the next-ranked neighbour is tried.

use serde::{Deserialize, Serialize};

use crate::error::{RecourseError, StageFailure};
use crate::geometry::{fast_path_ok, max_deviation_ok};
use crate::model::{score, ScoringModel};
use crate::pipeline::apply_constraints;
use crate::spatial::SpatialIndex;
use crate::types::{distance, ExplainerConfig, FeatureSchema, Instance, PrivacyLedger, Stage};

/// Everything the walk visited.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExploreTrace {
    /// `x_0, x_1, …` (the first entry is the factual).
    pub positions: Vec<Vec<f64>>,
    /// Training id moved toward at each step.
    pub selected_ids: Vec<usize>,
    /// Momentum used at each step.
    pub momenta: Vec<Vec<f64>>,
    /// `f(x_t)` for every position.
    pub scores: Vec<f64>,
    /// Training ids newly touched at each step.
    pub new_accesses: Vec<usize>,
}

impl ExploreTrace {
    pub fn iterations(&self) -> usize {
        self.selected_ids.len()
    }

    pub fn steps(&self) -> Vec<Vec<f64>> {
        self.positions
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect())
            .collect()
    }
}

/// Mean of the last `m` step vectors (all of them while `t < m`).
pub fn momentum(history: &[Vec<f64>], m: usize, dim: usize) -> Vec<f64> {
    let window = &history[history.len().saturating_sub(m)..];
    let mut b = vec![0.0; dim];
    if window.is_empty() {
        return b;
    }
    for step in window {
        for (bi, si) in b.iter_mut().zip(step) {
            *bi += si;
        }
    }
    let len = window.len() as f64;
    b.iter_mut().for_each(|bi| *bi /= len);
    b
}

/// A scored neighbour offered to [`explore_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<'a> {
    pub id: usize,
    pub point: &'a [f64],
    pub score: f64,
}

/// Candidate indices in preference order: score ratio descending, then
/// distance ascending, then id ascending.
pub fn rank_candidates(x_t: &[f64], candidates: &[Candidate<'_>]) -> Vec<usize> {
    let keyed: Vec<(f64, f64)> = candidates
        .iter()
        .map(|c| {
            let dist = distance(c.point, x_t);
            (c.score / (1.0 + dist), dist)
        })
        .collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        keyed[b]
            .0
            .total_cmp(&keyed[a].0)
            .then(keyed[a].1.total_cmp(&keyed[b].1))
            .then(candidates[a].id.cmp(&candidates[b].id))
    });
    order
}

/// `x_t + (x* − x_t + b_t) / 2`.
pub fn step_toward(x_t: &[f64], target: &[f64], momentum: &[f64]) -> Vec<f64> {
    x_t.iter()
        .zip(target)
        .zip(momentum)
        .map(|((x, t), b)| x + (t - x + b) / 2.0)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepChoice {
    pub next: Vec<f64>,
    pub selected_id: usize,
}

/// One unconstrained step toward the best-ranked neighbour.
pub fn explore_step(x_t: &[f64], candidates: &[Candidate<'_>], momentum: &[f64]) -> Result<StepChoice, RecourseError> {
    let best = *rank_candidates(x_t, candidates)
        .first()
        .ok_or(RecourseError::Empty("explore step needs at least one neighbour"))?;
    let c = &candidates[best];
    Ok(StepChoice {
        next: step_toward(x_t, c.point, momentum),
        selected_id: c.id,
    })
}

/// Per-session cache so each training point is scored at most once.
#[derive(Debug, Clone)]
pub struct ScoreCache {
    scores: Vec<Option<f64>>,
}

impl ScoreCache {
    pub fn new(n: usize) -> Self {
        Self { scores: vec![None; n] }
    }

    pub fn get<M: ScoringModel + ?Sized>(&mut self, model: &M, id: usize, point: &[f64]) -> Result<f64, RecourseError> {
        if let Some(s) = self.scores[id] {
            return Ok(s);
        }
        let s = score(model, point)?;
        self.scores[id] = Some(s);
        Ok(s)
    }

    pub fn evaluated(&self) -> usize {
        self.scores.iter().filter(|s| s.is_some()).count()
    }
}

/// Whether the segment `x_t → next` is admissible with anchor `target`.
fn step_admissible(x_t: &[f64], target: &[f64], next: &[f64], config: &ExplainerConfig) -> bool {
    let eps = config.epsilon;
    if distance(x_t, target) > 2.0 * eps || x_t == next {
        return false;
    }
    if config.fast_path && fast_path_ok(x_t, target, next, eps) {
        return true;
    }
    max_deviation_ok(x_t, target, next, eps)
        .map(|c| c.admissible)
        .unwrap_or(false)
}

/// Walk from `x0` until `f(x_t) ≥ T_f`.
pub fn find_counterfactual<M: ScoringModel + ?Sized>(
    x0: &Instance,
    model: &M,
    index: &mut SpatialIndex,
    config: &ExplainerConfig,
    schema: &FeatureSchema,
    ledger: &mut PrivacyLedger,
    cache: &mut ScoreCache,
) -> Result<(Instance, ExploreTrace), StageFailure<ExploreTrace>> {
    let dim = x0.dim();
    let mut trace = ExploreTrace::default();
    let fail = |e: RecourseError, trace: &ExploreTrace| StageFailure::new(e, trace.clone());

    let mut x_t = x0.values.clone();
    let mut f_t = score(model, &x_t).map_err(|e| fail(e, &trace))?;
    trace.positions.push(x_t.clone());
    trace.scores.push(f_t);
    let mut history: Vec<Vec<f64>> = Vec::new();
    let constraints = schema.constraints();

    while f_t < config.decision_threshold {
        let step = history.len();
        if step >= config.max_explore_iters {
            return Err(fail(
                RecourseError::MaxIterations {
                    stage: Stage::Explore,
                    limit: config.max_explore_iters,
                },
                &trace,
            ));
        }
        let hits = index.knn(&x_t, config.k_neighbors).map_err(|e| fail(e, &trace))?;
        let fresh = ledger.record_all(Stage::Explore, hits.iter().map(|h| h.id));
        trace.new_accesses.push(fresh);

        let pairs: Vec<(&[f64], usize)> = hits.iter().map(|h| (index.point(h.id), h.id)).collect();
        let kept = apply_constraints(&pairs, &x0.values, schema);
        let mut candidates = Vec::with_capacity(kept.len());
        for (point, id) in kept {
            let s = cache.get(model, id, point).map_err(|e| fail(e, &trace))?;
            candidates.push(Candidate { id, point, score: s });
        }

        let b_t = momentum(&history, config.momentum_window, dim);
        let anchors: Vec<(&[f64], usize)> = pairs
            .iter()
            .filter(|(p, _)| distance(p, &x_t) <= 2.0 * config.epsilon)
            .copied()
            .collect();
        let mut chosen = None;
        for i in rank_candidates(&x_t, &candidates) {
            let c = &candidates[i];
            let mut next = step_toward(&x_t, c.point, &b_t);
            for ((v, f), con) in next.iter_mut().zip(&x0.values).zip(&constraints) {
                *v = con.project(*f, *v);
            }
            let covered = step_admissible(&x_t, c.point, &next, config)
                || anchors.iter().any(|&(p, id)| id != c.id && step_admissible(&x_t, p, &next, config));
            if covered {
                chosen = Some((next, c.id));
                break;
            }
        }
        let Some((next, selected)) = chosen else {
            return Err(fail(
                RecourseError::NoAdmissibleCandidate {
                    step,
                    candidates: candidates.len(),
                },
                &trace,
            ));
        };

        if config.deactivate_selected {
            index.deactivate(selected).map_err(|e| fail(e, &trace))?;
        }
        history.push(next.iter().zip(&x_t).map(|(a, b)| a - b).collect());
        x_t = next;
        f_t = score(model, &x_t).map_err(|e| fail(e, &trace))?;
        trace.positions.push(x_t.clone());
        trace.scores.push(f_t);
        trace.selected_ids.push(selected);
        trace.momenta.push(b_t);
    }

    let cf = Instance::new(x_t).map_err(|e| fail(e, &trace))?;
    Ok((cf, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn momentum_examples() {
        assert_eq!(momentum(&[], 3, 2), vec![0.0, 0.0]);
        let h = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(momentum(&h, 2, 2), vec![0.5, 0.5]);
        let h = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(momentum(&h, 2, 2), vec![0.5, 1.0]);
    }

    #[test]
    fn step_selects_best_ratio() {
        let a = [1.0, 0.0];
        let b = [0.0, 2.0];
        let cands = [
            Candidate { id: 0, point: &a, score: 0.8 },
            Candidate { id: 1, point: &b, score: 0.9 },
        ];
        let s = explore_step(&[0.0, 0.0], &cands, &[0.0, 0.0]).unwrap();
        assert_eq!(s.selected_id, 0);
        assert_eq!(s.next, vec![0.5, 0.0]);
        let s = explore_step(&[0.0, 0.0], &cands, &[0.5, 0.0]).unwrap();
        assert_eq!(s.next, vec![0.75, 0.0]);
    }

    #[test]
    fn equal_ratio_and_distance_prefers_lower_id() {
        let a = [1.0, 0.0];
        let b = [-1.0, 0.0];
        let cands = [
            Candidate { id: 7, point: &a, score: 0.5 },
            Candidate { id: 3, point: &b, score: 0.5 },
        ];
        assert_eq!(explore_step(&[0.0, 0.0], &cands, &[0.0, 0.0]).unwrap().selected_id, 3);
        assert!(explore_step(&[0.0, 0.0], &[], &[0.0, 0.0]).is_err());
    }

    proptest! {
        // integer-valued steps keep the sums exact
        #[test]
        fn warmup_and_window_means(
            steps in prop::collection::vec(prop::collection::vec(-50i32..50, 3), 0..20),
            m in 1usize..8,
        ) {
            let history: Vec<Vec<f64>> = steps.iter().map(|s| s.iter().map(|&v| f64::from(v)).collect()).collect();
            let b = momentum(&history, m, 3);
            let start = history.len().saturating_sub(m);
            let count = history.len() - start;
            for j in 0..3 {
                let sum: i64 = steps[start..].iter().map(|s| i64::from(s[j])).sum();
                let want = if count == 0 { 0.0 } else { sum as f64 / count as f64 };
                prop_assert_eq!(b[j], want);
            }
        }
    }
}
