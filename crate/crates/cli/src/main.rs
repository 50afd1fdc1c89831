use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use macest::dataset::{self, Table, DEFAULT_LABEL_COLUMN, DEFAULT_SPLIT_FRACTIONS, PREDICTION_COLUMN};
use macest::harness::{self, Report};
use macest::metrics::{BinningScheme, Metric};
use macest::predictor::{self, PredictionSet, DEFAULT_VOTE_K};
use macest::{
    Backend, Dataset, Embedding, EmbeddingKind, ExperimentConfig, KnnClassifier, MacestConfig, MacestModel, TrustScorer,
};
use ndarray::Array2;

const CSV_HELP: &str = "\
Input CSVs have a header row. Every numeric column other than the label
column is a feature, in header order. The reserved columns `prediction`
(integer class) and `score` (classifier confidence in [0, 1]) are never
used as features; when `prediction` is present it supplies the point
predictions, otherwise they come from --predictions or the model's stored
kNN predictor.

Outputs:
  predict  row,prediction,confidence,p_0..p_{C-1},epistemic,aleatoric,disagreement
  eval     metric,value (accuracy plus each requested metric)
  trust    row,prediction,trust
  anomaly  row,epistemic,anomaly

Exit codes: 0 success, 1 usage error, 2 data error.";

#[derive(Parser)]
#[command(name = "macest", version, about = "Model-agnostic confidence estimation", after_help = CSV_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a confidence model on labelled training data.
    Fit(FitArgs),
    /// Estimate per-row confidence for new inputs.
    Predict(PredictArgs),
    /// Score confidences on labelled inputs.
    Eval(EvalArgs),
    /// Trust scores of point predictions.
    Trust(TrustArgs),
    /// Run an experiment and write its report and figures.
    Experiment(ExperimentArgs),
    /// Flag rows whose epistemic uncertainty exceeds a threshold.
    Anomaly(AnomalyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedArg {
    None,
    Std,
    Pca,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Hnsw,
    Exact,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Backend {
        match b {
            BackendArg::Hnsw => Backend::Hnsw,
            BackendArg::Exact => Backend::Exact,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    Aleatoric,
    Drift,
    Ood,
}

#[derive(Args)]
struct FitArgs {
    /// Labelled training CSV.
    #[arg(long)]
    train: PathBuf,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_column: String,
    /// CSV with a `prediction` column (and optional `score`) for the training rows.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Where to write the model.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "std")]
    embed: EmbedArg,
    #[arg(long, default_value_t = 2)]
    pca_components: usize,
    #[arg(long, value_enum, default_value = "hnsw")]
    backend: BackendArg,
    /// Neighbours per class in the confidence model.
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Neighbours voting in the built-in predictor.
    #[arg(long, default_value_t = DEFAULT_VOTE_K)]
    vote_k: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV.
    #[arg(long)]
    input: PathBuf,
    /// CSV with a `prediction` column for the input rows.
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_column: String,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_delimiter = ',', default_value = "ece,brier,nll")]
    metrics: Vec<String>,
    /// Equal-mass bins for ECE.
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrustArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_enum)]
    kind: ExperimentKind,
    /// JSON experiment config; defaults apply to omitted fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnomalyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_column: String,
    /// Percentile of calibration epistemic terms used as threshold.
    #[arg(long, default_value_t = 99.9, conflicts_with = "threshold")]
    percentile: f64,
    /// Explicit epistemic threshold.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A usage problem found after argument parsing.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match e.chain().find_map(|c| c.downcast_ref::<macest::Error>()) {
        Some(m) if !m.is_data_error() => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Trust(a) => trust(a),
        Command::Experiment(a) => experiment(a),
        Command::Anomaly(a) => anomaly(a),
    }
}

fn read_table(path: &Path) -> anyhow::Result<Table> {
    Table::read(path).with_context(|| format!("reading {}", path.display()))
}

fn fit(a: FitArgs) -> anyhow::Result<()> {
    let kind = match a.embed {
        EmbedArg::None => EmbeddingKind::None,
        EmbedArg::Std => EmbeddingKind::Std,
        EmbedArg::Pca => EmbeddingKind::Pca(a.pca_components),
    };
    let table = read_table(&a.train)?;
    let labels = table.integer_column(&a.label_column)?;
    let (_, x) = table.feature_matrix(&[&a.label_column])?;
    let data = Dataset::new(x, labels)?;
    let external = match (&a.predictions, table.column_index(PREDICTION_COLUMN)) {
        (Some(p), _) => Some(predictor::load_external_predictions(p, &data)?),
        (None, Some(_)) => Some(predictor::predictions_from_table(
            &table,
            data.class_count(),
            Some(data.labels()),
        )?),
        (None, None) => None,
    };
    let cfg = MacestConfig {
        k: a.k,
        backend: a.backend.into(),
        ..MacestConfig::default()
    };

    let model = match external {
        Some(preds) => {
            let parts = dataset::split_rows(data.len(), &[0.5, 0.5], a.seed)?;
            let (graph, cal) = (data.select(&parts[0])?, data.select(&parts[1])?);
            let embedding = Embedding::fit(kind, graph.features())?;
            macest::macest::fit(
                &graph,
                &preds.select(&parts[0])?,
                &cal,
                &preds.select(&parts[1])?,
                embedding,
                &cfg,
            )?
        }
        None => {
            let f = &DEFAULT_SPLIT_FRACTIONS[..3];
            let total: f64 = f.iter().sum();
            let fractions: Vec<f64> = f.iter().map(|v| v / total).collect();
            let parts = dataset::split_rows(data.len(), &fractions, a.seed)?;
            let train = data.select(&parts[0])?;
            let graph = data.select(&parts[1])?;
            let cal = data.select(&parts[2])?;
            let embedding = Embedding::fit(kind, train.features())?;
            let classifier = KnnClassifier::from_parts(
                embedding.apply(train.features())?.view(),
                train.labels().to_vec(),
                data.class_count(),
                a.vote_k,
                cfg.backend,
                cfg.hnsw,
            )?;
            let graph_pred = classifier
                .predict(embedding.apply(graph.features())?.view())?
                .with_truth(graph.labels())?;
            let cal_pred = classifier
                .predict(embedding.apply(cal.features())?.view())?
                .with_truth(cal.labels())?;
            macest::macest::fit(&graph, &graph_pred, &cal, &cal_pred, embedding, &cfg)?.with_predictor(classifier)?
        }
    };
    macest::macest::save(&model, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    eprintln!(
        "fitted: alpha={:.6} beta={:.6} sharpness={:.6} ece={:.6}",
        model.alpha, model.beta, model.sharpness, model.fitted_ece
    );
    Ok(())
}

struct Inputs {
    model: MacestModel,
    table: Table,
    x: Array2<f64>,
    predictions: PredictionSet,
}

fn load_inputs(a: &InputArgs) -> anyhow::Result<Inputs> {
    let model = macest::macest::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let table = read_table(&a.input)?;
    let (_, x) = table.feature_matrix(&[&a.label_column])?;
    let predictions = if let Some(p) = &a.predictions {
        let t = read_table(p)?;
        if t.len() != table.len() {
            return Err(macest::Error::LengthMismatch {
                left: table.len(),
                right: t.len(),
            }
            .into());
        }
        predictor::predictions_from_table(&t, model.class_count(), None)?
    } else if table.column_index(PREDICTION_COLUMN).is_some() {
        predictor::predictions_from_table(&table, model.class_count(), None)?
    } else if model.predictor().is_some() {
        model.predict_points(x.view())?
    } else {
        return Err(UsageError("the model stores no predictor; pass --predictions".into()).into());
    };
    Ok(Inputs {
        model,
        table,
        x,
        predictions,
    })
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let inp = load_inputs(&a.input)?;
    let estimates = inp.model.estimate_batch(inp.x.view(), &inp.predictions.predicted)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    let mut header = vec!["row".to_string(), "prediction".into(), "confidence".into()];
    header.extend((0..inp.model.class_count()).map(|c| format!("p_{c}")));
    header.extend(["epistemic".into(), "aleatoric".into(), "disagreement".into()]);
    w.write_record(&header)?;
    for (i, e) in estimates.iter().enumerate() {
        let chosen = &e.uncertainties[e.predicted_class];
        let mut row = vec![i.to_string(), e.predicted_class.to_string(), e.confidence.to_string()];
        row.extend(e.probabilities.iter().map(|p| p.to_string()));
        row.extend([
            chosen.epistemic.to_string(),
            chosen.aleatoric.to_string(),
            e.disagreement.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let metrics = a
        .metrics
        .iter()
        .map(|m| m.parse::<Metric>().map_err(|e| UsageError(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if a.bins == 0 {
        bail!(UsageError("--bins must be positive".into()));
    }
    let inp = load_inputs(&a.input)?;
    let labels = inp.table.integer_column(&a.input.label_column)?;
    let preds = inp.predictions.with_truth(&labels)?;
    let estimates = inp.model.estimate_batch(inp.x.view(), &preds.predicted)?;
    let conf: Vec<f64> = estimates.iter().map(|e| e.confidence).collect();
    let correct = preds.correct()?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["metric", "value"])?;
    w.write_record(["accuracy".to_string(), preds.accuracy().unwrap_or(f64::NAN).to_string()])?;
    for m in metrics {
        let v = m.evaluate(&conf, correct, BinningScheme::equal_mass(a.bins))?;
        w.write_record([m.name().to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn trust(a: TrustArgs) -> anyhow::Result<()> {
    if a.k == 0 {
        bail!(UsageError("--k must be positive".into()));
    }
    let inp = load_inputs(&a.input)?;
    let scorer = TrustScorer::from_model(&inp.model, a.k)?;
    let z = inp.model.embedding().apply(inp.x.view())?;
    let scores = scorer.score_batch(z.view(), &inp.predictions.predicted)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["row", "prediction", "trust"])?;
    for (i, (p, s)) in inp.predictions.predicted.iter().zip(&scores).enumerate() {
        w.write_record([i.to_string(), p.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn anomaly(a: AnomalyArgs) -> anyhow::Result<()> {
    let model = macest::macest::load(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let table = read_table(&a.input)?;
    let (_, x) = table.feature_matrix(&[&a.label_column])?;
    let threshold = match a.threshold {
        Some(t) => t,
        None => model.epistemic_threshold(a.percentile)?,
    };
    let z = model.embedding().apply(x.view())?;
    let terms = model.terms_embedded(z.view())?;
    let flags = model.detect_anomalies_embedded(z.view(), threshold)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["row", "epistemic", "anomaly"])?;
    for (i, flag) in flags.iter().enumerate() {
        let eps = terms.epistemic.row(i).iter().copied().fold(f64::INFINITY, f64::min);
        w.write_record([i.to_string(), eps.to_string(), flag.to_string()])?;
    }
    w.flush()?;
    let flagged = flags.iter().filter(|&&f| f).count();
    eprintln!("threshold {threshold:.6}: flagged {flagged} of {} rows", flags.len());
    Ok(())
}

fn experiment(a: ExperimentArgs) -> anyhow::Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::read(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = a.out {
        cfg.output_dir = Some(out);
    }
    let Some(dir) = cfg.output_dir.clone() else {
        bail!(UsageError(
            "an output directory is required (--out or output_dir)".into()
        ));
    };
    let report = match a.kind {
        ExperimentKind::Aleatoric => Report::Aleatoric(harness::run_aleatoric(&cfg)?),
        ExperimentKind::Drift => Report::Drift(harness::run_drift(&cfg)?),
        ExperimentKind::Ood => Report::Ood(harness::run_ood(&cfg)?),
    };
    let mut written = harness::emit_report(&report, &cfg, &dir)?;
    written.extend(harness::emit_plots(&report, &dir)?);
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}
