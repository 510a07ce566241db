//! `rbfdh` command line: train, predict, bench and inspect.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{emit_report, run_bench_with_progress, BenchDataset, BenchPlan, ReportFormat};
use crate::classify::{accuracy, PdfConfig, Rule};
use crate::data::{load_csv, load_features, split, DatasetSource, LabelColumn, Scaling};
use crate::error::Error;
use crate::kernel::FeatureMap;
use crate::optimizer::TrainConfig;
use crate::pipeline::{PipelineConfig, TrainedModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "rbfdh", version, about = "RBF dynamic hyper-sphere classifier", args_override_self = true)]
pub struct Cli {
    /// Plain-text `key = value` file of default flags; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a labeled CSV file.
    Train(TrainArgs),
    /// Label the rows of a CSV file with a trained model.
    Predict(PredictArgs),
    /// Repeated random sampling benchmark over one or more datasets.
    Bench(BenchArgs),
    /// Summarize a model file.
    Inspect(InspectArgs),
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be positive, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn finite(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be finite, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn percent(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 100.0 => Ok(v / 100.0),
        Ok(v) => Err(format!("{v} is not a percentage in (0, 100)")),
        Err(e) => Err(e.to_string()),
    }
}

fn named_path(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => {
            let path = PathBuf::from(s);
            let name = path
                .file_stem()
                .and_then(|n| n.to_str())
                .ok_or_else(|| format!("cannot derive a dataset name from {s:?}; use name=path"))?;
            Ok((name.to_string(), path))
        }
    }
}

/// Model and optimizer settings shared by `train` and `bench`.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Optimizer iterations.
    #[arg(long, default_value_t = 500, value_parser = at_least_one)]
    pub iters: usize,
    /// Adaptive gradient descent learning rate.
    #[arg(long, default_value_t = 0.1, value_parser = positive)]
    pub lr: f64,
    /// Weight P of the intra-class scatter term (signed).
    #[arg(long, default_value_t = 0.01, value_parser = finite, allow_negative_numbers = true)]
    pub penalty: f64,
    /// RBF kernel bandwidth.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub sigma: f64,
    /// Bandwidth of the Gaussian density decision rule.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub pdf_bandwidth: f64,
    /// Skip the RBF expansion (plain dynamic hyper-sphere).
    #[arg(long)]
    pub no_kernel: bool,
    /// Nearest-center rule uses distance minus class radius.
    #[arg(long)]
    pub radius_adjusted: bool,
    /// Feature scaling fit on the training rows: zscore, minmax or none.
    #[arg(long, default_value = "zscore")]
    pub scaling: Scaling,
}

impl ModelArgs {
    fn pipeline(&self, seed: u64, record_history: bool) -> PipelineConfig {
        PipelineConfig {
            train: TrainConfig {
                iterations: self.iters,
                learning_rate: self.lr,
                penalty: self.penalty,
                sigma: self.sigma,
                seed,
                record_history,
                ..TrainConfig::default()
            },
            use_kernel: !self.no_kernel,
            pdf: PdfConfig {
                bandwidth: self.pdf_bandwidth,
            },
            radius_adjusted: self.radius_adjusted,
            scaling: self.scaling,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled CSV file.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Label column: index, header name, `first` or `last`.
    #[arg(long, default_value = "last")]
    pub label: LabelColumn,
    /// Where to write the model JSON.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Write the per-iteration loss trace as CSV.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// Hold out this percentage of every class and report test accuracy.
    #[arg(long, value_parser = percent)]
    pub holdout: Option<f64>,
    /// Seed for the holdout split.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    /// CSV file of feature rows.
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Label column present in the input; it is dropped and used to report accuracy.
    #[arg(long)]
    pub label: Option<LabelColumn>,
    /// Decision rule.
    #[arg(long, default_value = "pdf")]
    pub rule: Rule,
    /// Output CSV (stdout when omitted).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Dataset as `name=path` (repeatable).
    #[arg(long = "data", value_name = "NAME=PATH", value_parser = named_path, required = true)]
    pub data: Vec<(String, PathBuf)>,
    /// Label column of every dataset.
    #[arg(long, default_value = "last")]
    pub label: LabelColumn,
    /// Test-to-training ratios, in percent.
    #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50", value_parser = percent)]
    pub rtts: Vec<f64>,
    /// Repeats per ratio.
    #[arg(long, default_value_t = 10, value_parser = at_least_one)]
    pub repeats: usize,
    /// Base seed; repeat r uses seed + r.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// JSON report path.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Also write the report as CSV.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Record wall time per repeat (the report is then no longer reproducible).
    #[arg(long)]
    pub timings: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
}

/// Turns `key = value` lines into flags placed right after the subcommand.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let pos = args.iter().position(|a| a == "--config");
    let inline = args
        .iter()
        .position(|a| a.to_str().is_some_and(|s| s.starts_with("--config=")));
    let path = match (pos, inline) {
        (Some(i), _) => match args.get(i + 1) {
            Some(p) => PathBuf::from(p),
            None => return Ok(args),
        },
        (None, Some(i)) => PathBuf::from(&args[i].to_str().unwrap()["--config=".len()..]),
        (None, None) => return Ok(args),
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key = value", path.display(), n + 1))?;
        let (key, value) = (key.trim().trim_start_matches("--"), value.trim());
        match value {
            "true" => extra.push(OsString::from(format!("--{key}"))),
            "false" => {}
            _ => {
                extra.push(OsString::from(format!("--{key}")));
                extra.push(OsString::from(value));
            }
        }
    }
    let sub = args
        .iter()
        .skip(1)
        .position(|a| matches!(a.to_str(), Some("train" | "predict" | "bench" | "inspect")))
        .map_or(args.len(), |p| p + 2);
    let mut out = args[..sub.min(args.len())].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[sub.min(args.len())..]);
    Ok(out)
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(m) => Failure::Usage(m),
            other => Failure::Runtime(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(Error::io("<stdout>", e))
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString>>) -> i32 {
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let config = args.model.pipeline(args.seed, args.trace.is_some());
    config.train.validate()?;
    let ds = load_csv(&args.data, &args.label)?;
    let (train_set, test_set) = match args.holdout {
        Some(rtt) => {
            let s = split(&ds, rtt, args.seed)?;
            (s.train, Some(s.test))
        }
        None => (ds, None),
    };
    let (model, trace) = TrainedModel::fit(&train_set, &config)?;
    model.save(&args.out)?;
    if let Some(path) = &args.trace {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        trace
            .write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))?;
    }

    let l = &trace.final_loss;
    println!("trained on {} rows, {} iterations", train_set.len(), trace.iterations);
    println!(
        "loss {:.6}  d1 {:.6}  d2 {:.6}  d3 {:.6}  rpen {:.6}  intra {:.6}",
        l.loss,
        l.d1.iter().sum::<f64>(),
        l.d2.iter().sum::<f64>(),
        l.d3,
        l.rpen_sum(),
        l.intra_sum
    );
    if let Some(test) = test_set {
        let acc = model.evaluate(&test)?;
        println!(
            "holdout accuracy: pdf {:.4}  center {:.4}  combined {:.4} ({})",
            acc.pdf, acc.center, acc.combined, acc.chosen
        );
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<(), Failure> {
    let model = TrainedModel::load(&args.model)?;
    let (x, raw_labels) = load_features(&args.input, args.label.as_ref())?;
    if x.nrows() > 0 && x.ncols() != model.num_features() {
        return Err(Failure::Runtime(Error::DimensionMismatch {
            expected: model.num_features(),
            found: x.ncols(),
        }));
    }
    let truth: Option<Vec<usize>> = raw_labels.as_ref().and_then(|raw| {
        raw.iter()
            .map(|name| model.class_names.iter().position(|c| c == name))
            .collect()
    });
    let (labels, used) = if x.nrows() == 0 {
        (Vec::new(), args.rule)
    } else {
        model.predict(x.view(), args.rule, truth.as_deref())?
    };

    let mut text = String::new();
    if !labels.is_empty() {
        text.push_str("row_index,label\n");
        for (i, &l) in labels.iter().enumerate() {
            text.push_str(&format!("{i},{}\n", model.class_names[l]));
        }
    }
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    if let Some(truth) = truth.filter(|t| !t.is_empty()) {
        eprintln!("accuracy {:.4} ({used} rule)", accuracy(&labels, &truth));
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    let config = args.model.pipeline(args.seed, false);
    let plan = BenchPlan {
        datasets: args
            .data
            .iter()
            .map(|(name, path)| BenchDataset {
                source: DatasetSource {
                    name: name.clone(),
                    path: path.clone(),
                    label: args.label.clone(),
                },
                config: config.clone(),
            })
            .collect(),
        rtts: args.rtts.clone(),
        repeats: args.repeats,
        base_seed: args.seed,
        record_timing: args.timings,
    };
    let report = run_bench_with_progress(&plan, |cell, r| {
        let acc = r
            .accuracy
            .map(|a| format!("pdf {:.4} center {:.4} combined {:.4}", a.pdf, a.center, a.combined))
            .unwrap_or_else(|| format!("failed: {}", r.error.as_deref().unwrap_or("?")));
        eprintln!("{} rtt {:.0}% repeat {}: {acc}", cell.dataset, cell.rtt * 100.0, r.repeat);
    })?;
    emit_report(&report, ReportFormat::Json, &args.out)?;
    if let Some(path) = &args.csv {
        emit_report(&report, ReportFormat::Csv, path)?;
    }

    println!("{:<12} {:>5} {:>8} {:>8} {:>8} {:>7} {:>6}", "dataset", "rtt", "pdf", "center", "combined", "ref", "failed");
    for cell in &report.cells {
        let pct = |rule| {
            cell.aggregate(rule)
                .mean
                .map_or_else(|| "-".to_string(), |m| format!("{:.1}", m * 100.0))
        };
        println!(
            "{:<12} {:>4.0}% {:>8} {:>8} {:>8} {:>7} {:>6}",
            cell.dataset,
            cell.rtt * 100.0,
            pct(Rule::Pdf),
            pct(Rule::Center),
            pct(Rule::Combined),
            cell.reference.map_or_else(|| "-".to_string(), |r| format!("{r:.1}")),
            cell.failed
        );
    }
    Ok(())
}

fn cmd_inspect(args: &InspectArgs) -> Result<(), Failure> {
    let model = TrainedModel::load(&args.model)?;
    print!("{}", summary(&model, &args.model));
    Ok(())
}

fn summary(model: &TrainedModel, path: &Path) -> String {
    let cfg = &model.config;
    let mut s = format!("model {}\n", path.display());
    match &model.feature_map {
        FeatureMap::Rbf(k) => s += &format!("feature map: rbf, sigma {}, {} anchors\n", k.sigma(), k.output_dim()),
        FeatureMap::Identity { dim } => s += &format!("feature map: identity ({dim} features)\n"),
    }
    let (n, _) = model.params.w.dim();
    s += &format!("input features: {}  scaling: {}\n", model.num_features(), cfg.scaling);
    s += &format!("W: [{n}, {n}]  B: [{n}]  R: [{}]\n", model.params.r.len());
    s += &format!(
        "P {}  lr {}  iterations {}  pdf bandwidth {}\n",
        cfg.train.penalty, cfg.train.learning_rate, cfg.train.iterations, cfg.pdf.bandwidth
    );
    s += &format!("final loss {}  d_total {}\n", model.final_loss.loss, model.final_loss.d_total);
    s += "classes:\n";
    for (i, name) in model.class_names.iter().enumerate() {
        let c = model.centers.row(i);
        s += &format!(
            "  {i} {name:<20} radius {:>12.6}  |center| {:>12.6}  train rows {}\n",
            model.params.r[i],
            c.dot(&c).sqrt(),
            model.train_classes.class_size(i)
        );
    }
    s
}
