//! `recourse` command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{RecourseError, Result};
use crate::io::csv::{load_csv, write_csv, LabelledTable, DEFAULT_LABEL_COLUMN};
use crate::io::svg::emit_svg_plot;
use crate::io::synth::{generate_blobs, generate_two_moons};
use crate::io::trace::{verify, TraceDocument, TraceStatus};
use crate::model::{fit_reference_model, training_accuracy, FitOptions, ModelKind, ReferenceModel};
use crate::pipeline::Explainer;
use crate::types::{Dataset, DensityThreshold, ExplainerConfig, FeatureSchema, Instance, Target, WeightMode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RECOURSE_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const ARTIFACT_FORMAT_VERSION: u32 = 1;

/// Persisted model plus the standardization it was trained under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub label_column: String,
    pub schema: FeatureSchema,
    pub fit_options: FitOptions,
    pub training_accuracy: f64,
    pub model: ReferenceModel,
}

impl ModelArtifact {
    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| RecourseError::Io(format!("{}: {e}", path.display())))?;
        let mut a: Self = serde_json::from_str(&s)?;
        if a.format_version != ARTIFACT_FORMAT_VERSION {
            return Err(RecourseError::Serde(format!(
                "unsupported model artifact version {}",
                a.format_version
            )));
        }
        a.model.prepare()?;
        Ok(a)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        std::fs::write(path, s).map_err(|e| RecourseError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "recourse", version, about = "Sequential, density-aware algorithmic recourse")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Write a synthetic labelled dataset to CSV.
    GenData(GenDataArgs),
    /// Fit a reference classifier and save it as a model artifact.
    Fit(FitArgs),
    /// Compute a recourse path for one factual.
    Explain(ExplainArgs),
    /// Re-check the invariants of a trace document.
    Verify(TraceArgs),
    /// Print the privacy fractions and step table of a trace.
    Report(TraceArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataKind {
    Moons,
    Blobs,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum, default_value = "moons")]
    pub kind: DataKind,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Noise standard deviation (moons) or blob spread (blobs).
    #[arg(long, default_value_t = 0.15)]
    pub noise: f64,
    /// Feature count for blobs.
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelChoice {
    Knn,
    Rbf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    pub label_column: String,
    #[arg(long, value_enum, default_value = "knn")]
    pub kind: ModelChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Neighbours for the k-NN model.
    #[arg(long, default_value_t = 15)]
    pub knn_k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightModeArg {
    Strict,
    Average,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Row index into the data, or a comma-separated list of raw feature values.
    #[arg(long)]
    pub factual: String,
    /// Known counterfactual (row index or raw values); skips the explore stage.
    #[arg(long)]
    pub counterfactual: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub tf: Option<f64>,
    #[arg(long, conflicts_with = "tp_abs")]
    pub tp_quantile: Option<f64>,
    #[arg(long)]
    pub tp_abs: Option<f64>,
    /// Line samples per density estimate.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, value_enum)]
    pub weight_mode: Option<WeightModeArg>,
    /// Iteration cap for both the explore and exploit stages.
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Do not retry with a relaxed density threshold.
    #[arg(long)]
    pub no_retry: bool,
    /// Feature that must not change (repeatable).
    #[arg(long)]
    pub immutable: Vec<String>,
    /// `NAME:LO:HI` raw-unit bounds on the change of a feature (repeatable).
    #[arg(long)]
    pub bounded: Vec<String>,
    /// Explain toward the negative class instead.
    #[arg(long)]
    pub reverse: bool,
    #[arg(long)]
    pub label_column: Option<String>,
    /// Trace output path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG figure (two-feature data only).
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    pub trace: PathBuf,
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::GenData(a) => gen_data(&a).map(|_| EXIT_OK),
        Command::Fit(a) => fit(&a).map(|_| EXIT_OK),
        Command::Explain(a) => explain(&a),
        Command::Verify(a) => verify_cmd(&a),
        Command::Report(a) => report(&a).map(|_| EXIT_OK),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_USAGE
    })
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let (rows, labels) = match a.kind {
        DataKind::Moons => generate_two_moons(a.n, a.noise, a.seed)?,
        DataKind::Blobs => {
            let c: Vec<f64> = vec![1.5; a.dim];
            let neg: Vec<f64> = c.iter().map(|v| -v).collect();
            generate_blobs(a.n, &[neg, c], a.noise, a.seed)?
        }
    };
    let dim = rows.first().map_or(0, Vec::len);
    let table = LabelledTable {
        feature_names: (0..dim).map(|j| format!("x{j}")).collect(),
        rows,
        labels,
    };
    write_csv(&a.out, &table, DEFAULT_LABEL_COLUMN)?;
    println!("wrote {} rows to {}", table.rows.len(), a.out.display());
    Ok(())
}

fn fit(a: &FitArgs) -> Result<()> {
    let table = load_csv(&a.data, &a.label_column)?;
    let dataset = Dataset::from_raw(&table.rows, table.labels, &table.feature_names)?;
    let options = FitOptions {
        seed: a.seed,
        knn_k: a.knn_k,
        ..FitOptions::default()
    };
    let kind = match a.kind {
        ModelChoice::Knn => ModelKind::KnnProbability,
        ModelChoice::Rbf => ModelKind::RbfLogistic,
    };
    let model = fit_reference_model(&dataset, kind, &options)?;
    let accuracy = training_accuracy(&model, &dataset, 0.5)?;
    ModelArtifact {
        format_version: ARTIFACT_FORMAT_VERSION,
        label_column: a.label_column.clone(),
        schema: dataset.schema.clone(),
        fit_options: options,
        training_accuracy: accuracy,
        model,
    }
    .write(&a.out)?;
    println!("training accuracy {accuracy:.4}; model written to {}", a.out.display());
    Ok(())
}

/// Row index (no comma, parses as an integer) or raw comma list.
fn parse_point(spec: &str, table: &LabelledTable, schema: &FeatureSchema) -> Result<Instance> {
    let spec = spec.trim();
    if !spec.contains(',') {
        if let Ok(row) = spec.parse::<usize>() {
            if row >= table.rows.len() {
                return Err(RecourseError::UnknownId(row));
            }
            return Instance::training(schema.standardize_point(&table.rows[row])?, row);
        }
    }
    let raw = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| RecourseError::InvalidConfig(format!("`{s}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    Instance::new(schema.standardize_point(&raw)?)
}

fn parse_bounded(spec: &str) -> Result<(String, f64, f64)> {
    let parts: Vec<&str> = spec.rsplitn(3, ':').collect();
    let bad = || RecourseError::InvalidConfig(format!("--bounded expects NAME:LO:HI, got `{spec}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let hi = parts[0].parse().map_err(|_| bad())?;
    let lo = parts[1].parse().map_err(|_| bad())?;
    Ok((parts[2].to_owned(), lo, hi))
}

fn build_config(a: &ExplainArgs) -> ExplainerConfig {
    let mut c = ExplainerConfig::default();
    if let Some(v) = a.k {
        c.k_neighbors = v;
    }
    if let Some(v) = a.m {
        c.momentum_window = v;
    }
    if let Some(v) = a.epsilon {
        c.epsilon = v;
    }
    if let Some(v) = a.tf {
        c.decision_threshold = v;
    }
    if let Some(q) = a.tp_quantile {
        c.density_threshold = DensityThreshold::Quantile(q);
    }
    if let Some(t) = a.tp_abs {
        c.density_threshold = DensityThreshold::Absolute(t);
    }
    if let Some(q) = a.q {
        c.line_samples = q;
    }
    if let Some(w) = a.weight_mode {
        c.weight_mode = match w {
            WeightModeArg::Strict => WeightMode::Strict,
            WeightModeArg::Average => WeightMode::Average,
        };
    }
    if let Some(n) = a.max_iters {
        c.max_explore_iters = n;
        c.max_exploit_iters = n;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if a.no_retry {
        c.retry_quantile = None;
    }
    if a.reverse {
        c.target = Target::Negative;
    }
    c
}

fn explain(a: &ExplainArgs) -> Result<i32> {
    let artifact = ModelArtifact::read(&a.model)?;
    let label_column = a.label_column.as_deref().unwrap_or(&artifact.label_column);
    let table = load_csv(&a.data, label_column)?;
    if table.feature_names != artifact.schema.names() {
        return Err(RecourseError::InvalidConfig(format!(
            "data columns {:?} do not match the model's features {:?}",
            table.feature_names,
            artifact.schema.names()
        )));
    }
    let mut schema = artifact.schema.clone();
    for name in &a.immutable {
        schema.set_immutable(name)?;
    }
    for spec in &a.bounded {
        let (name, lo, hi) = parse_bounded(spec)?;
        schema.set_bounded_raw(&name, lo, hi)?;
    }
    if a.plot.is_some() && schema.dim() != 2 {
        return Err(RecourseError::UnsupportedDimension(schema.dim()));
    }
    let config = build_config(a);
    config.validate()?;

    let factual = parse_point(&a.factual, &table, &schema)?;
    let counterfactual = a
        .counterfactual
        .as_deref()
        .map(|s| parse_point(s, &table, &schema))
        .transpose()?;
    let dataset = Dataset::from_raw_with_schema(&table.rows, table.labels.clone(), schema)?;
    let explainer = Explainer::new(dataset, Arc::new(artifact.model), config.kde_bandwidth)?;

    let (doc, code) = match explainer.explain(&factual, counterfactual.as_ref(), &config) {
        Ok(result) => {
            let doc = TraceDocument::from_result(&explainer, &config, &result)?;
            eprintln!(
                "recourse found: {} steps, path weight {:.6}, {:.2}% of training data accessed",
                result.recourse.k(),
                result.path.total_weight,
                100.0 * result.ledger.total_fraction()
            );
            (doc, EXIT_OK)
        }
        Err(failure) => {
            eprintln!("recourse failed: {failure}");
            (
                TraceDocument::from_failure(&explainer, &config, &factual, &failure)?,
                EXIT_RECOURSE_FAILURE,
            )
        }
    };
    match &a.out {
        Some(path) => doc.write(path)?,
        None => print!("{}", doc.to_json()?),
    }
    if let Some(plot) = &a.plot {
        emit_svg_plot(&doc, explainer.dataset(), plot)?;
    }
    Ok(code)
}

fn verify_cmd(a: &TraceArgs) -> Result<i32> {
    let doc = TraceDocument::read(&a.trace)?;
    let report = verify(&doc);
    let status = match report.status {
        TraceStatus::Success => "success",
        TraceStatus::Failure => "failure",
    };
    if report.is_ok() {
        println!("ok: {} checks passed ({status} trace)", report.checks);
        Ok(EXIT_OK)
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        println!("{} of {} checks failed", report.violations.len(), report.checks);
        Ok(EXIT_RECOURSE_FAILURE)
    }
}

fn report(a: &TraceArgs) -> Result<()> {
    let doc = TraceDocument::read(&a.trace)?;
    let p = &doc.privacy;
    println!("status: {:?}", doc.meta.status);
    if let Some(f) = &doc.meta.failure {
        println!("failed in {} stage: {}", f.stage, f.message);
    }
    println!("training points: {}", p.n_total);
    println!(
        "accessed: explore {:.4}  exploit {:.4}  enhance {:.4}  total {:.4}",
        p.explore_fraction, p.exploit_fraction, p.enhance_fraction, p.total_fraction
    );
    if let Some(ex) = &doc.explore {
        println!("explore iterations: {}", ex.iterations());
    }
    let Some(r) = &doc.recourse else {
        return Ok(());
    };
    let names = doc.meta.schema.names();
    let width = names.iter().map(String::len).max().unwrap_or(4).max(10);
    print!("{:>6}", "step");
    for n in &names {
        print!("  {n:>width$}");
    }
    println!("  {:>8}", "score");
    let scores = doc.path.as_ref().map(|p| p.scores.clone()).unwrap_or_default();
    let mut pos = doc.meta.factual_raw.clone();
    print!("{:>6}", 0);
    for v in &pos {
        print!("  {v:>width$.4}");
    }
    println!("  {:>8.4}", scores.first().copied().unwrap_or(doc.meta.factual_score));
    let mut score_iter = scores.iter().skip(1);
    for (i, s) in r.steps_raw.iter().enumerate() {
        for (p, d) in pos.iter_mut().zip(s) {
            *p += d;
        }
        print!("{:>6}", i + 1);
        for v in &pos {
            print!("  {v:>width$.4}");
        }
        match score_iter.next() {
            Some(s) => println!("  {s:>8.4}"),
            None => println!(),
        }
    }
    Ok(())
}
