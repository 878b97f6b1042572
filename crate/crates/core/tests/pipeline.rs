use std::sync::Arc;

use approx::assert_relative_eq;
use recourse_core::io::synth::generate_two_moons;
use recourse_core::io::trace::{verify, TraceDocument, TraceStatus};
use recourse_core::model::{fit_reference_model, score, training_accuracy, FitOptions, ModelKind, ScoringModel};
use recourse_core::types::{DensityThreshold, Target, WeightMode};
use recourse_core::{privacy_report, Dataset, Explainer, ExplainerConfig, Instance};

fn setup(n: usize, seed: u64) -> (Dataset, Arc<dyn ScoringModel>, Explainer) {
    let (raw, labels) = generate_two_moons(n, 0.15, seed).unwrap();
    let dataset = Dataset::from_raw(&raw, labels, &["x0".into(), "x1".into()]).unwrap();
    let model: Arc<dyn ScoringModel> =
        Arc::new(fit_reference_model(&dataset, ModelKind::KnnProbability, &FitOptions::default()).unwrap());
    let explainer = Explainer::new(dataset.clone(), Arc::clone(&model), Default::default()).unwrap();
    (dataset, model, explainer)
}

fn negative_rows(dataset: &Dataset, model: &dyn ScoringModel) -> Vec<usize> {
    (0..dataset.n())
        .filter(|&i| score(model, dataset.points.row(i)).unwrap() < 0.5)
        .collect()
}

#[test]
fn knn_reference_model_is_accurate_on_moons() {
    let (dataset, model, _) = setup(1000, 7);
    assert!(training_accuracy(model.as_ref(), &dataset, 0.5).unwrap() >= 0.9);
}

#[test]
fn supplied_counterfactual_skips_explore() {
    let (dataset, model, explainer) = setup(400, 1);
    let negatives = negative_rows(&dataset, model.as_ref());
    let factual = dataset.instance(negatives[10]).unwrap();
    let config = ExplainerConfig::default();
    let walked = explainer.explain(&factual, None, &config).unwrap();
    let cf = Instance::new(walked.counterfactual.values.clone()).unwrap();
    let direct = explainer.explain(&factual, Some(&cf), &config).unwrap();
    assert!(direct.explore.is_none());
    assert!(direct.ledger.explore.is_empty());
    assert_eq!(direct.counterfactual.values, cf.values);
    assert_relative_eq!(direct.recourse.endpoint()[0], cf.values[0], epsilon = 1e-9);
}

#[test]
fn supplied_counterfactual_below_threshold_is_rejected() {
    let (dataset, model, explainer) = setup(400, 1);
    let negatives = negative_rows(&dataset, model.as_ref());
    let factual = dataset.instance(negatives[0]).unwrap();
    let other = Instance::new(dataset.points.row(negatives[1]).to_vec()).unwrap();
    assert!(explainer.explain(&factual, Some(&other), &ExplainerConfig::default()).is_err());
}

#[test]
fn batch_matches_sequential() {
    let (dataset, model, explainer) = setup(400, 2);
    let factuals: Vec<Instance> = negative_rows(&dataset, model.as_ref())
        .into_iter()
        .take(6)
        .map(|i| dataset.instance(i).unwrap())
        .collect();
    let config = ExplainerConfig::default();
    let batch = explainer.explain_batch(&factuals, &config, 3);
    assert_eq!(batch.len(), factuals.len());
    for (f, b) in factuals.iter().zip(batch) {
        let seq = explainer.explain(f, None, &config);
        match (seq, b) {
            (Ok(a), Ok(b)) => assert_eq!(a, b),
            (Err(a), Err(b)) => assert_eq!(a.to_string(), b.to_string()),
            _ => panic!("batch and sequential disagree"),
        }
    }
}

#[test]
fn reverse_target_reaches_negative_class() {
    let (dataset, model, explainer) = setup(400, 3);
    let positive = (0..dataset.n())
        .find(|&i| score(model.as_ref(), dataset.points.row(i)).unwrap() > 0.9)
        .unwrap();
    let config = ExplainerConfig {
        target: Target::Negative,
        ..Default::default()
    };
    let r = explainer
        .explain(&dataset.instance(positive).unwrap(), None, &config)
        .unwrap();
    let f = score(model.as_ref(), &r.counterfactual.values).unwrap();
    assert!(1.0 - f >= config.decision_threshold);
}

#[test]
fn traces_verify_for_success_and_failure() {
    let (dataset, model, explainer) = setup(300, 4);
    let negatives = negative_rows(&dataset, model.as_ref());
    let factual = dataset.instance(negatives[3]).unwrap();
    let config = ExplainerConfig::default();
    let ok = explainer.explain(&factual, None, &config).unwrap();
    let doc = TraceDocument::from_result(&explainer, &config, &ok).unwrap();
    let report = verify(&doc);
    assert!(report.is_ok(), "{:?}", report.violations);
    let back = TraceDocument::from_json(&doc.to_json().unwrap()).unwrap();
    assert_eq!(back, doc);

    let strict = ExplainerConfig {
        weight_mode: WeightMode::Strict,
        density_threshold: DensityThreshold::Quantile(0.999),
        retry_quantile: None,
        ..config
    };
    let failure = explainer.explain(&factual, None, &strict).unwrap_err();
    let doc = TraceDocument::from_failure(&explainer, &strict, &factual, &failure).unwrap();
    assert_eq!(doc.meta.status, TraceStatus::Failure);
    assert!(verify(&doc).is_ok(), "{:?}", verify(&doc).violations);
}

#[test]
fn privacy_report_matches_ledger() {
    let (dataset, model, explainer) = setup(400, 5);
    let negatives = negative_rows(&dataset, model.as_ref());
    let r = explainer
        .explain(&dataset.instance(negatives[0]).unwrap(), None, &ExplainerConfig::default())
        .unwrap();
    let p = privacy_report(&r.ledger);
    assert_eq!(p.n_total, 400);
    assert_eq!(p.accessed, r.ledger.union().len());
    assert_relative_eq!(p.total, p.accessed as f64 / 400.0);
    assert!(p.total >= p.explore.max(p.exploit).max(p.enhance));
}
