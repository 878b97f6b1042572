//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use recourse_core::density::{line_average_density, Density};
use recourse_core::enhance::shortest_path;
use recourse_core::explore::momentum;
use recourse_core::exploit::EdgeWeightRule;
use recourse_core::geometry::max_deviation_ok;
use recourse_core::io::synth::generate_two_moons;
use recourse_core::io::trace::{verify, TraceDocument};
use recourse_core::model::{fit_reference_model, score, FitOptions, ModelKind, ScoringModel};
use recourse_core::types::{
    Constraint, DensityThreshold, Instance, LineSampling, LocalGraph, WeightMode,
};
use recourse_core::{Dataset, ExplainFailure, Explainer, ExplainerConfig, RecourseResult};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

struct Run {
    factual: Instance,
    outcome: Result<RecourseResult, ExplainFailure>,
    seconds: f64,
}

struct Fixture {
    explainer: Explainer,
    model: Arc<dyn ScoringModel>,
    config: ExplainerConfig,
    factuals: Vec<Instance>,
    runs: Vec<Run>,
}

fn moons() -> Dataset {
    let (raw, labels) = generate_two_moons(1000, 0.15, 7).unwrap();
    Dataset::from_raw(&raw, labels, &["x0".to_string(), "x1".to_string()]).unwrap()
}

fn knn(dataset: &Dataset) -> Arc<dyn ScoringModel> {
    Arc::new(fit_reference_model(dataset, ModelKind::KnnProbability, &FitOptions::default()).unwrap())
}

/// Ids classified negative, shuffled with a fixed seed.
fn negatives(dataset: &Dataset, model: &dyn ScoringModel, seed: u64) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..dataset.n())
        .filter(|&i| score(model, dataset.points.row(i)).unwrap() < 0.5)
        .collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}

fn fixture() -> Fixture {
    let dataset = moons();
    let model = knn(&dataset);
    let factuals: Vec<Instance> = negatives(&dataset, model.as_ref(), 1)
        .into_iter()
        .take(50)
        .map(|i| dataset.instance(i).unwrap())
        .collect();
    let explainer = Explainer::new(dataset, Arc::clone(&model), Default::default()).unwrap();
    let config = ExplainerConfig::default();
    let runs = factuals
        .iter()
        .map(|f| {
            let t = Instant::now();
            let outcome = explainer.explain(f, None, &config);
            Run {
                factual: f.clone(),
                outcome,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect();
    Fixture {
        explainer,
        model,
        config,
        factuals,
        runs,
    }
}

fn successes(fx: &Fixture) -> Result<Vec<&RecourseResult>, String> {
    fx.runs
        .iter()
        .map(|r| {
            r.outcome
                .as_ref()
                .map_err(|e| format!("factual {:?} failed: {e}", r.factual.id))
        })
        .collect()
}

fn c1_end_to_end(fx: &Fixture) -> Outcome {
    let ok = successes(fx)?;
    check(ok.len() == 50, || format!("{} runs", ok.len()))?;
    for r in &ok {
        let f = score(fx.model.as_ref(), &r.counterfactual.values).unwrap();
        check(f >= fx.config.decision_threshold, || format!("f(x') = {f} < T_f"))?;
    }
    let retried = ok.iter().filter(|r| r.retried).count();
    Ok(format!("50/50 succeeded, all f(x') >= 0.75, {retried} used the density retry"))
}

fn c2_runtime(fx: &Fixture) -> Outcome {
    let max = fx.runs.iter().map(|r| r.seconds).fold(0.0, f64::max);
    let total: f64 = fx.runs.iter().map(|r| r.seconds).sum();
    check(max < 1.0, || format!("slowest run {max:.3}s"))?;
    Ok(format!("slowest run {max:.3}s, total {total:.2}s"))
}

fn c3_privacy(fx: &Fixture) -> Outcome {
    let k = fx.config.k_neighbors;
    let n = fx.explainer.dataset().n();
    let mut max_fraction = 0.0f64;
    let mut above_target = 0;
    for r in successes(fx)? {
        let trace = r.explore.as_ref().ok_or("missing explore trace")?;
        for (t, &new) in trace.new_accesses.iter().enumerate() {
            check(new <= k, || format!("step {t} touched {new} > k ids"))?;
        }
        let total_new: usize = trace.new_accesses.iter().sum();
        check(total_new == r.ledger.explore.len(), || "explore accesses do not sum to ledger".into())?;
        let union = r.ledger.union();
        check(union.iter().all(|&id| id < n), || "ledger id out of range".into())?;
        let selected: BTreeSet<usize> = trace.selected_ids.iter().copied().collect();
        check(selected.is_subset(&r.ledger.explore), || "selected id missing from explore ledger".into())?;
        let graph_ids: BTreeSet<usize> = r.graph.vertices()[1..].iter().filter_map(|v| v.id).collect();
        check(graph_ids.is_subset(&r.ledger.exploit), || "graph id missing from exploit ledger".into())?;
        let path_ids: BTreeSet<usize> = r.path.vertex_indices[1..].iter().filter_map(|&v| r.graph.vertex(v).id).collect();
        check(path_ids.is_subset(&r.ledger.enhance), || "path id missing from enhance ledger".into())?;
        if let Some(id) = r.factual.id {
            check(!union.contains(&id), || "factual's own row was accessed".into())?;
        }
        let fraction = r.ledger.total_fraction();
        check(fraction < 1.0, || format!("accessed fraction {fraction}"))?;
        check((fraction - union.len() as f64 / n as f64).abs() < 1e-15, || "fraction disagrees with union".into())?;
        if fraction >= 0.25 {
            above_target += 1;
        }
        max_fraction = max_fraction.max(fraction);
    }
    Ok(format!(
        "per-step accesses <= {k}, ledger sound; max accessed fraction {max_fraction:.3}, {above_target}/50 runs at or above 0.25"
    ))
}

fn c4_segment_coverage() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut triples = 0;
    let mut attempts = 0;
    let mut violations = 0;
    while triples < 500 {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(format!("only {triples} admissible triples generated"));
        }
        let dim = rng.random_range(2..=5);
        let eps = rng.random_range(0.05..2.0);
        let x1: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
        let dir = unit(&mut rng, dim);
        let d = rng.random_range(0.0..=eps);
        let x2: Vec<f64> = x1.iter().zip(&dir).map(|(a, u)| a + d * u).collect();
        let wobble = unit(&mut rng, dim);
        let tilt = rng.random_range(0.0..1.0);
        let reach = rng.random_range(0.0..(d + eps));
        let mut heading: Vec<f64> = dir.iter().zip(&wobble).map(|(u, w)| u + tilt * w).collect();
        let norm = heading.iter().map(|v| v * v).sum::<f64>().sqrt();
        heading.iter_mut().for_each(|v| *v /= norm);
        let xt: Vec<f64> = x1.iter().zip(&heading).map(|(a, h)| a + reach * h).collect();
        let Ok(c) = max_deviation_ok(&x1, &x2, &xt, eps) else {
            continue;
        };
        if !c.admissible {
            continue;
        }
        triples += 1;
        for _ in 0..1000 {
            let u: f64 = rng.random_range(0.0..=1.0);
            let s: Vec<f64> = x1.iter().zip(&xt).map(|(a, b)| a + u * (b - a)).collect();
            let near = dist(&s, &x1).min(dist(&s, &x2));
            if near > eps + 1e-9 {
                violations += 1;
            }
        }
    }
    check(violations == 0, || format!("{violations} samples outside both balls"))?;
    Ok(format!("{triples} admissible triples x 1000 samples, 0 violations ({attempts} drawn)"))
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Minimum total weight over all simple paths, by exhaustive DFS.
fn brute_force(adj: &[Vec<Option<f64>>], at: usize, target: usize, seen: &mut Vec<bool>, acc: f64, best: &mut f64) {
    if at == target {
        *best = best.min(acc);
        return;
    }
    for (next, w) in adj[at].iter().enumerate() {
        if let Some(w) = w {
            if !seen[next] {
                seen[next] = true;
                brute_force(adj, next, target, seen, acc + w, best);
                seen[next] = false;
            }
        }
    }
}

#[allow(clippy::needless_range_loop)]
fn c5_dijkstra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for g in 0..500 {
        let n = rng.random_range(2..=8);
        let mut adj = vec![vec![None; n]; n];
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for w in order.windows(2) {
            let weight = rng.random_range(0.1..10.0);
            adj[w[0]][w[1]] = Some(weight);
            adj[w[1]][w[0]] = Some(weight);
        }
        let p = rng.random_range(0.0..0.8);
        for a in 0..n {
            for b in a + 1..n {
                if adj[a][b].is_none() && rng.random_bool(p) {
                    let weight = rng.random_range(0.1..10.0);
                    adj[a][b] = Some(weight);
                    adj[b][a] = Some(weight);
                }
            }
        }
        let mut graph = LocalGraph::new(Instance::new(vec![0.0]).unwrap());
        for i in 1..n {
            graph.add_vertex(Instance::new(vec![i as f64]).unwrap());
        }
        for a in 0..n {
            for b in a + 1..n {
                if let Some(w) = adj[a][b] {
                    graph.set_edge(a, b, w).unwrap();
                }
            }
        }
        let target = n - 1;
        let mut best = f64::INFINITY;
        let mut seen = vec![false; n];
        seen[0] = true;
        brute_force(&adj, 0, target, &mut seen, 0.0, &mut best);
        let path = shortest_path(&graph, 0, target).map_err(|e| format!("graph {g}: {e}"))?;
        let walked: f64 = path
            .vertex_indices
            .windows(2)
            .map(|w| adj[w[0]][w[1]].expect("path uses a missing edge"))
            .sum();
        let gap = (path.total_weight - best).abs().max((walked - best).abs());
        check(gap <= 1e-9, || format!("graph {g}: dijkstra {} vs brute force {best}", path.total_weight))?;
        worst = worst.max(gap);
    }
    Ok(format!("500 graphs, worst gap {worst:.1e}"))
}

fn c6_kde(fx: &Fixture) -> Outcome {
    let density = &fx.explainer.density().model;
    let points = &fx.explainer.dataset().points;
    let h = density.bandwidth();
    let dim = points.dim() as f64;
    let norm = 1.0 / (points.n() as f64 * h.powf(dim) * (2.0 * std::f64::consts::PI).powf(dim / 2.0));
    let naive = |x: &[f64]| -> f64 {
        let mut s = 0.0;
        for c in points.rows() {
            let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            s += (-r2 / (2.0 * h * h)).exp();
        }
        norm * s
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_point = 0.0f64;
    for _ in 0..1000 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.5..2.5)).collect();
        let want = naive(&x);
        let got = density.density_at(&x);
        let rel = (got - want).abs() / want;
        check(rel <= 1e-9, || format!("density_at off by {rel:e} at {x:?}"))?;
        worst_point = worst_point.max(rel);
    }
    let mut worst_line = 0.0f64;
    for _ in 0..200 {
        let a = points.row(rng.random_range(0..points.n()));
        let b = points.row(rng.random_range(0..points.n()));
        if a == b {
            continue;
        }
        let coarse = line_average_density(density, a, b, 128, LineSampling::Interpolated).unwrap();
        let fine = line_average_density(density, a, b, 4096, LineSampling::Interpolated).unwrap();
        let rel = (coarse - fine).abs() / fine;
        check(rel < 0.01, || format!("q=128 vs q=4096 differ by {rel:.4}"))?;
        worst_line = worst_line.max(rel);
    }
    Ok(format!(
        "1000 queries, worst relative error {worst_point:.1e}; 200 lines, worst q=128/q=4096 gap {:.3}%",
        worst_line * 100.0
    ))
}

fn c7_reconstruction(fx: &Fixture) -> Outcome {
    let mut worst = 0.0f64;
    for r in successes(fx)? {
        check(r.recourse.origin.values == r.factual.values, || "matrix origin is not the factual".into())?;
        let err = r.recourse.reconstruction_error(&r.counterfactual.values);
        check(err <= 1e-9, || format!("reconstruction error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("50 matrices, worst coordinate error {worst:.1e}"))
}

fn c8_edge_gates(fx: &Fixture) -> Outcome {
    let density = &fx.explainer.density().model;
    let mut path_edges = 0;
    for r in successes(fx)? {
        let rule = EdgeWeightRule::from_config(&fx.config, r.density_threshold);
        for w in r.path.vertex_indices.windows(2) {
            let (a, b) = (&r.graph.vertex(w[0]).values, &r.graph.vertex(w[1]).values);
            check(rule.admits(a, b, density).unwrap(), || "path edge fails its gate".into())?;
            path_edges += 1;
        }
    }

    let tp = fx.explainer.density().threshold(DensityThreshold::Quantile(0.2)).unwrap();
    let mut compared = 0;
    let mut strict_total = 0;
    for factual in fx.factuals.iter().take(20) {
        let paired = |mode| ExplainerConfig {
            weight_mode: mode,
            density_threshold: DensityThreshold::Absolute(tp),
            retry_quantile: None,
            ..fx.config.clone()
        };
        let graph_of = |mode| -> Result<LocalGraph, String> {
            match fx.explainer.explain(factual, None, &paired(mode)) {
                Ok(r) => Ok(r.graph),
                Err(e) => {
                    let why = format!("{mode:?} run produced no graph: {e}");
                    e.graph.ok_or(why)
                }
            }
        };
        let strict = graph_of(WeightMode::Strict)?;
        let average = graph_of(WeightMode::Average)?;
        let common = strict
            .vertices()
            .iter()
            .zip(average.vertices())
            .take_while(|(s, a)| s.values == a.values)
            .count();
        for (a, b, _) in strict.edges().filter(|&(a, b, _)| a < common && b < common) {
            check(average.weight(a, b).is_some(), || format!("strict edge ({a}, {b}) missing in average graph"))?;
            compared += 1;
        }
        // both gates over every pair of the average graph's vertices
        let strict_rule = EdgeWeightRule::from_config(&paired(WeightMode::Strict), tp);
        let average_rule = EdgeWeightRule::from_config(&paired(WeightMode::Average), tp);
        let vs = average.vertices();
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                if strict_rule.admits(&vs[i].values, &vs[j].values, density).unwrap() {
                    strict_total += 1;
                    check(
                        average_rule.admits(&vs[i].values, &vs[j].values, density).unwrap(),
                        || format!("pair ({i}, {j}) passes strict but not average"),
                    )?;
                }
            }
        }
    }
    Ok(format!(
        "{path_edges} path edges re-gated; 20 paired runs: {compared} shared strict edges and {strict_total} strict-admitted pairs all admitted by average"
    ))
}

fn c9_constraints() -> Outcome {
    let (raw2, labels) = generate_two_moons(1000, 0.15, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let raw: Vec<Vec<f64>> = raw2
        .iter()
        .map(|p| vec![p[0], p[1], rng.random_range(0..2) as f64])
        .collect();
    let names = ["x0".to_string(), "x1".to_string(), "group".to_string()];
    let mut dataset = Dataset::from_raw(&raw, labels, &names).unwrap();
    dataset.schema.set_immutable("group").unwrap();
    dataset.schema.set_bounded_raw("x0", -1.0, 1.0).unwrap();
    let model = knn(&dataset);
    let ids = negatives(&dataset, model.as_ref(), 2);
    let explainer = Explainer::new(dataset.clone(), Arc::clone(&model), Default::default()).unwrap();
    let config = ExplainerConfig::default();
    let Constraint::Bounded { lower_delta, upper_delta } = dataset.schema.constraints()[0] else {
        return Err("x0 is not bounded".into());
    };
    let mut succeeded = 0;
    let mut points_checked = 0;
    for &id in ids.iter().take(20) {
        let factual = dataset.instance(id).unwrap();
        // failed runs still expose their walk and partial graph
        let (walk, graph, path, endpoint) = match explainer.explain(&factual, None, &config) {
            Ok(r) => {
                succeeded += 1;
                let path: Vec<usize> = r.path.vertex_indices.clone();
                (r.explore, Some(r.graph), path, Some(r.recourse.endpoint()))
            }
            Err(e) => (e.explore, e.graph, Vec::new(), None),
        };
        let mut points: Vec<Vec<f64>> = Vec::new();
        if let Some(g) = &graph {
            let on_path: Vec<usize> = if path.is_empty() { (0..g.n_vertices()).collect() } else { path };
            points.extend(on_path.iter().map(|&v| g.vertex(v).values.clone()));
        }
        points.extend(endpoint);
        if let Some(trace) = walk {
            points.extend(trace.positions);
        }
        for p in &points {
            check(p[2] == factual.values[2], || format!("factual {id}: immutable feature changed"))?;
            let delta = p[0] - factual.values[0];
            check(delta >= lower_delta - 1e-12 && delta <= upper_delta + 1e-12, || {
                format!("factual {id}: x0 moved by {delta}")
            })?;
        }
        points_checked += points.len();
    }
    check(succeeded >= 10, || format!("only {succeeded}/20 runs found recourse"))?;
    Ok(format!(
        "{succeeded}/20 runs found recourse; {points_checked} path, endpoint and walk points respect both constraints"
    ))
}

fn c10_determinism(fx: &Fixture) -> Outcome {
    let dataset = moons();
    let again = Explainer::new(dataset, knn(&moons()), Default::default()).unwrap();
    let config = ExplainerConfig {
        seed: 11,
        ..fx.config.clone()
    };
    for factual in fx.factuals.iter().take(5) {
        let render = |ex: &Explainer| -> String {
            let doc = match ex.explain(factual, None, &config) {
                Ok(r) => TraceDocument::from_result(ex, &config, &r),
                Err(e) => TraceDocument::from_failure(ex, &config, factual, &e),
            };
            doc.unwrap().to_json().unwrap()
        };
        let (a, b) = (render(&fx.explainer), render(&again));
        check(a == b, || format!("traces differ for factual {:?}", factual.id))?;
        let doc = TraceDocument::from_json(&a).unwrap();
        let report = verify(&doc);
        check(report.is_ok(), || format!("trace fails verification: {:?}", report.violations))?;
    }
    Ok("5 factuals, byte-identical traces from independently built explainers".into())
}

fn c11_momentum() -> Outcome {
    let strategy = (1usize..8, 1usize..4).prop_flat_map(|(m, dim)| {
        (
            Just(m),
            Just(dim),
            prop::collection::vec(prop::collection::vec(-1000i64..1000, dim), 0..20),
        )
    });
    let mut runner = TestRunner::new_with_rng(
        PropConfig {
            cases: 1000,
            failure_persistence: None,
            ..PropConfig::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner
        .run(&strategy, |(m, dim, history)| {
            let steps: Vec<Vec<f64>> = history.iter().map(|s| s.iter().map(|&v| v as f64).collect()).collect();
            let got = momentum(&steps, m, dim);
            let window = &history[history.len().saturating_sub(m)..];
            for j in 0..dim {
                let want = if window.is_empty() {
                    0.0
                } else {
                    let sum: i64 = window.iter().map(|s| s[j]).sum();
                    sum as f64 / window.len() as f64
                };
                prop_assert_eq!(got[j], want);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 random integer histories, warm-up and windowed means exact".into())
}

fn main() -> ExitCode {
    let started = Instant::now();
    let fx = fixture();
    let criteria: Vec<Criterion<'_>> = vec![
        ("end-to-end success", Box::new(|| c1_end_to_end(&fx))),
        ("runtime per run", Box::new(|| c2_runtime(&fx))),
        ("privacy accounting", Box::new(|| c3_privacy(&fx))),
        ("segment coverage oracle", Box::new(c4_segment_coverage)),
        ("dijkstra exactness", Box::new(c5_dijkstra)),
        ("kde correctness", Box::new(|| c6_kde(&fx))),
        ("recourse reconstruction", Box::new(|| c7_reconstruction(&fx))),
        ("edge-gate soundness", Box::new(|| c8_edge_gates(&fx))),
        ("constraint soundness", Box::new(c9_constraints)),
        ("determinism", Box::new(|| c10_determinism(&fx))),
        ("momentum arithmetic", Box::new(c11_momentum)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
