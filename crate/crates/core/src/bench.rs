//! Repeated random sampling benchmark: every dataset is split at each
//! test-to-training ratio, `repeats` times, and all three decision rules are
//! scored on the held-out rows.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classify::Rule;
use crate::data::{load_csv, split, Dataset, DatasetSource};
use crate::error::{Error, Result};
use crate::pipeline::{PipelineConfig, RuleAccuracy, TrainedModel};

pub const DEFAULT_RTTS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const DEFAULT_REPEATS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchDataset {
    pub source: DatasetSource,
    pub config: PipelineConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchPlan {
    pub datasets: Vec<BenchDataset>,
    pub rtts: Vec<f64>,
    pub repeats: usize,
    pub base_seed: u64,
    /// Record per-repeat wall time. Off by default so reports are reproducible byte for byte.
    pub record_timing: bool,
}

impl BenchPlan {
    pub fn new(datasets: Vec<BenchDataset>) -> Self {
        BenchPlan {
            datasets,
            rtts: DEFAULT_RTTS.to_vec(),
            repeats: DEFAULT_REPEATS,
            base_seed: 42,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidParameter("repeats must be at least 1".into()));
        }
        if let Some(r) = self.rtts.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(Error::InvalidParameter(format!("test-to-training ratio {r} is outside (0, 1)")));
        }
        for d in &self.datasets {
            d.config.train.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    /// Absent when the repeat failed.
    pub accuracy: Option<RuleAccuracy>,
    pub final_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

/// Mean and sample standard deviation of one rule over the successful repeats.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rule: Rule,
    /// `None` when every repeat failed.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub dataset: String,
    pub rtt: f64,
    pub use_kernel: bool,
    pub repeats: Vec<RepeatResult>,
    pub aggregates: Vec<Aggregate>,
    pub failed: usize,
    /// Reference accuracy (percent) for this dataset and ratio, when known.
    pub reference: Option<f64>,
}

impl CellReport {
    pub fn aggregate(&self, rule: Rule) -> &Aggregate {
        self.aggregates.iter().find(|a| a.rule == rule).expect("every rule is aggregated")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<CellReport>,
}

impl EvalReport {
    pub fn cell(&self, dataset: &str, rtt: f64) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.dataset == dataset && (c.rtt - rtt).abs() < 1e-12)
    }
}

/// Reference mean accuracies (percent) at ratios 10%..50%, kernelized and
/// plain variants.
fn reference_accuracy(dataset: &str, rtt: f64, use_kernel: bool) -> Option<f64> {
    const KERNEL: [(&str, [f64; 5]); 5] = [
        ("iris", [97.3, 98.3, 97.8, 97.0, 96.8]),
        ("pr", [74.7, 71.4, 71.5, 68.4, 63.1]),
        ("seed", [96.2, 97.7, 93.0, 93.1, 92.9]),
        ("sonar", [91.4, 88.8, 87.8, 87.0, 85.1]),
        ("wine", [99.4, 98.9, 98.7, 98.8, 97.9]),
    ];
    const PLAIN: [(&str, [f64; 5]); 5] = [
        ("iris", [98.0, 96.3, 97.6, 96.5, 96.0]),
        ("pr", [71.1, 70.3, 71.8, 69.9, 68.7]),
        ("seed", [96.7, 97.9, 97.8, 95.8, 96.8]),
        ("sonar", [89.0, 83.8, 82.7, 86.2, 82.2]),
        ("wine", [98.3, 97.8, 97.8, 97.9, 97.6]),
    ];
    let name = dataset.to_ascii_lowercase();
    let name = match name.as_str() {
        "seeds" => "seed",
        "planning" | "planning_relax" | "planning-relax" => "pr",
        other => other,
    };
    let col = DEFAULT_RTTS.iter().position(|r| (r - rtt).abs() < 1e-9)?;
    let table = if use_kernel { &KERNEL } else { &PLAIN };
    table.iter().find(|(n, _)| *n == name).map(|(_, v)| v[col])
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, std))
}

fn aggregates(repeats: &[RepeatResult]) -> Vec<Aggregate> {
    Rule::ALL
        .iter()
        .map(|&rule| {
            let values: Vec<f64> = repeats
                .iter()
                .filter_map(|r| r.accuracy)
                .map(|a| match rule {
                    Rule::Pdf => a.pdf,
                    Rule::Center => a.center,
                    Rule::Combined => a.combined,
                })
                .collect();
            let stats = mean_std(&values);
            Aggregate {
                rule,
                mean: stats.map(|s| s.0),
                std: stats.map(|s| s.1),
                count: values.len(),
            }
        })
        .collect()
}

/// One split, fit and evaluation.
pub fn run_repeat(ds: &Dataset, config: &PipelineConfig, rtt: f64, seed: u64) -> Result<(RuleAccuracy, f64)> {
    let parts = split(ds, rtt, seed)?;
    let (model, trace) = TrainedModel::fit(&parts.train, config)?;
    Ok((model.evaluate(&parts.test)?, trace.final_loss.loss))
}

pub fn run_bench(plan: &BenchPlan) -> Result<EvalReport> {
    run_bench_with_progress(plan, |_, _| {})
}

/// Runs the plan, calling `progress` after every repeat.
pub fn run_bench_with_progress(
    plan: &BenchPlan,
    mut progress: impl FnMut(&CellReport, &RepeatResult),
) -> Result<EvalReport> {
    plan.validate()?;
    let loaded = plan
        .datasets
        .iter()
        .map(|d| load_csv(&d.source.path, &d.source.label))
        .collect::<Result<Vec<_>>>()?;

    let mut report = EvalReport::default();
    for (entry, ds) in plan.datasets.iter().zip(&loaded) {
        for &rtt in &plan.rtts {
            let mut cell = CellReport {
                dataset: entry.source.name.clone(),
                rtt,
                use_kernel: entry.config.use_kernel,
                repeats: Vec::with_capacity(plan.repeats),
                aggregates: Vec::new(),
                failed: 0,
                reference: reference_accuracy(&entry.source.name, rtt, entry.config.use_kernel),
            };
            for repeat in 0..plan.repeats {
                let seed = plan.base_seed.wrapping_add(repeat as u64);
                let started = Instant::now();
                let outcome = run_repeat(ds, &entry.config, rtt, seed);
                let wall_time_ms = plan.record_timing.then(|| started.elapsed().as_secs_f64() * 1e3);
                let result = match outcome {
                    Ok((accuracy, loss)) => RepeatResult {
                        repeat,
                        seed,
                        accuracy: Some(accuracy),
                        final_loss: Some(loss),
                        error: None,
                        wall_time_ms,
                    },
                    Err(e @ Error::NonFinite { .. }) => {
                        cell.failed += 1;
                        RepeatResult {
                            repeat,
                            seed,
                            accuracy: None,
                            final_loss: None,
                            error: Some(e.to_string()),
                            wall_time_ms,
                        }
                    }
                    Err(e) => return Err(e),
                };
                progress(&cell, &result);
                cell.repeats.push(result);
            }
            cell.aggregates = aggregates(&cell.repeats);
            report.cells.push(cell);
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

pub const CSV_HEADER: &str = "dataset,kernel,rtt,repeat,seed,rule,accuracy,chosen,final_loss,agg,std,count,reference";

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn report_to_csv(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for cell in &report.cells {
        let reference = opt(cell.reference);
        for r in &cell.repeats {
            for rule in Rule::ALL {
                let acc = r.accuracy.map(|a| match rule {
                    Rule::Pdf => a.pdf,
                    Rule::Center => a.center,
                    Rule::Combined => a.combined,
                });
                let chosen = r.accuracy.map(|a| a.chosen.as_str()).unwrap_or_default();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},0,,,{}",
                    cell.dataset,
                    u8::from(cell.use_kernel),
                    cell.rtt,
                    r.repeat,
                    r.seed,
                    rule,
                    opt(acc),
                    chosen,
                    opt(r.final_loss),
                    reference
                );
            }
        }
        for a in &cell.aggregates {
            let _ = writeln!(
                out,
                "{},{},{},,,{},{},,,1,{},{},{}",
                cell.dataset,
                u8::from(cell.use_kernel),
                cell.rtt,
                a.rule,
                opt(a.mean),
                opt(a.std),
                a.count,
                reference
            );
        }
    }
    out
}

pub fn report_to_json(report: &EvalReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match format {
        ReportFormat::Json => report_to_json(report)?,
        ReportFormat::Csv => report_to_csv(report),
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
