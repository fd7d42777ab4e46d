//! Result files and the comparison report.
//!
//! Output layout under the run directory:
//!
//! - `results.jsonl`: one [`PairResult`] per line, sorted, no timestamps.
//! - `run.json`: provenance and aggregates.
//! - `summary.csv`: benchmark, strategy, splits, accuracy, n, input_tokens, output_tokens.
//! - `figure_data/accuracy_by_split.csv`: accuracy and error rate per configuration.
//! - `figure_data/complexity_vs_error.csv` (report only): mean complexity vs error rate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{best_split, Correlation};
use super::{write_atomic, Aggregate, HarnessError, Provenance, ResultSet};
use crate::complexity::{mean_std, BenchmarkStats, ComplexityDocument};
use crate::prompts::Strategy;
use crate::reference::reference;
use crate::types::Benchmark;

pub const RESULTS_FILE: &str = "results.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const FIGURE_DIR: &str = "figure_data";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub provenance: Provenance,
    pub aggregates: Vec<Aggregate>,
}

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>, HarnessError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    fill(&mut w)?;
    w.into_inner()
        .map_err(|e| HarnessError::Config(format!("csv buffer: {e}")))
}

pub fn results_jsonl(result: &ResultSet) -> String {
    result
        .rows
        .iter()
        .map(|r| serde_json::to_string(r).expect("rows serialize") + "\n")
        .collect()
}

pub fn summary_csv(aggregates: &[Aggregate]) -> Result<Vec<u8>, HarnessError> {
    csv_bytes(
        &[
            "benchmark",
            "strategy",
            "splits",
            "accuracy",
            "n",
            "input_tokens",
            "output_tokens",
        ],
        |w| {
            for a in aggregates {
                w.write_record([
                    a.benchmark.to_string(),
                    a.strategy.to_string(),
                    a.splits.to_string(),
                    a.accuracy.to_string(),
                    a.n.to_string(),
                    a.input_tokens.to_string(),
                    a.output_tokens.to_string(),
                ])?;
            }
            Ok(())
        },
    )
}

fn accuracy_figure_csv(aggregates: &[Aggregate]) -> Result<Vec<u8>, HarnessError> {
    csv_bytes(
        &[
            "benchmark",
            "strategy",
            "splits",
            "label",
            "accuracy",
            "error_rate",
            "n",
            "reference_accuracy",
        ],
        |w| {
            for a in aggregates {
                w.write_record([
                    a.benchmark.to_string(),
                    a.strategy.to_string(),
                    a.splits.to_string(),
                    a.label.clone(),
                    a.accuracy.to_string(),
                    (1.0 - a.accuracy).to_string(),
                    a.n.to_string(),
                    reference_accuracy(a.benchmark, a.strategy)
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                ])?;
            }
            Ok(())
        },
    )
}

/// Writes every per-run file. All files except `run.json` are
/// deterministic for a given set of rows.
pub fn write_result_files(out: &Path, result: &ResultSet) -> Result<(), HarnessError> {
    write_atomic(&out.join(RESULTS_FILE), results_jsonl(result).as_bytes())?;
    write_atomic(&out.join(SUMMARY_FILE), &summary_csv(&result.aggregates)?)?;
    write_atomic(
        &out.join(FIGURE_DIR).join("accuracy_by_split.csv"),
        &accuracy_figure_csv(&result.aggregates)?,
    )?;
    let run = RunFile {
        provenance: result.provenance.clone(),
        aggregates: result.aggregates.clone(),
    };
    write_atomic(
        &out.join(RUN_FILE),
        serde_json::to_string_pretty(&run)
            .expect("run file serializes")
            .as_bytes(),
    )
}

pub fn reference_accuracy(benchmark: Benchmark, strategy: Strategy) -> Option<f64> {
    let r = reference(benchmark)?;
    match strategy {
        Strategy::Dwm => Some(r.dwm_accuracy),
        Strategy::Cot => Some(r.cot_accuracy),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub benchmark: Benchmark,
    pub label: String,
    pub accuracy: f64,
    pub n: usize,
    pub errors: usize,
    pub reference_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestSplitRow {
    pub benchmark: Benchmark,
    pub best_split: usize,
    pub accuracy: f64,
    pub statefulness_mean: Option<f64>,
    pub reference_best_split: Option<usize>,
    pub reference_statefulness_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{benchmark}: DWM results missing for splits {missing:?}")]
pub struct MissingSplits {
    pub benchmark: Benchmark,
    pub missing: Vec<usize>,
}

/// DWM accuracy per split for one benchmark.
fn dwm_accuracy_by_split(aggregates: &[Aggregate], benchmark: Benchmark) -> BTreeMap<usize, f64> {
    aggregates
        .iter()
        .filter(|a| a.benchmark == benchmark && a.strategy == Strategy::Dwm && a.n > 0)
        .map(|a| (a.splits, a.accuracy))
        .collect()
}

/// Best DWM split per benchmark next to its mean statefulness. Every split
/// in `required` must be present.
pub fn best_split_report(
    aggregates: &[Aggregate],
    stats: &[BenchmarkStats],
    required: RangeInclusive<usize>,
) -> Result<Vec<BestSplitRow>, MissingSplits> {
    let mut benchmarks: Vec<Benchmark> = aggregates
        .iter()
        .filter(|a| a.strategy == Strategy::Dwm)
        .map(|a| a.benchmark)
        .collect();
    benchmarks.sort();
    benchmarks.dedup();
    benchmarks
        .into_iter()
        .map(|b| {
            let acc = dwm_accuracy_by_split(aggregates, b);
            let missing: Vec<usize> = required.clone().filter(|s| !acc.contains_key(s)).collect();
            if !missing.is_empty() {
                return Err(MissingSplits {
                    benchmark: b,
                    missing,
                });
            }
            let Some(split) = best_split(&acc) else {
                return Err(MissingSplits {
                    benchmark: b,
                    missing,
                });
            };
            Ok(BestSplitRow {
                benchmark: b,
                best_split: split,
                accuracy: acc[&split],
                statefulness_mean: stats
                    .iter()
                    .find(|s| s.benchmark == b)
                    .map(|s| s.statefulness_mean),
                reference_best_split: reference(b).map(|r| r.best_split),
                reference_statefulness_mean: reference(b).map(|r| r.statefulness.mean),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationPoint {
    pub benchmark: Benchmark,
    pub mean_complexity: f64,
    pub error_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub label: String,
    pub method: Correlation,
    pub points: Vec<CorrelationPoint>,
    pub coefficient: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Per-benchmark mean complexity against error rate (1 - accuracy), one
/// row per strategy label.
pub fn correlation_rows(
    aggregates: &[Aggregate],
    complexity: &ComplexityDocument,
    method: Correlation,
) -> Vec<CorrelationRow> {
    let mut by_bench: BTreeMap<Benchmark, Vec<f64>> = BTreeMap::new();
    for r in &complexity.reports {
        by_bench
            .entry(r.benchmark)
            .or_default()
            .push(r.report.complexity);
    }
    let means: BTreeMap<Benchmark, f64> = by_bench
        .into_iter()
        .map(|(b, v)| (b, mean_std(&v).0))
        .collect();
    let mut labels: Vec<&str> = aggregates.iter().map(|a| a.label.as_str()).collect();
    labels.sort();
    labels.dedup();
    labels
        .into_iter()
        .map(|label| {
            let points: Vec<CorrelationPoint> = aggregates
                .iter()
                .filter(|a| a.label == label && a.n > 0)
                .filter_map(|a| {
                    means.get(&a.benchmark).map(|&m| CorrelationPoint {
                        benchmark: a.benchmark,
                        mean_complexity: m,
                        error_rate: 1.0 - a.accuracy,
                    })
                })
                .collect();
            let xs: Vec<f64> = points.iter().map(|p| p.mean_complexity).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.error_rate).collect();
            let (coefficient, note) = match method.compute(&xs, &ys) {
                Ok(c) => (Some(c), None),
                Err(e) => (None, Some(e.to_string())),
            };
            CorrelationRow {
                label: label.to_string(),
                method,
                points,
                coefficient,
                note,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub provenance: Provenance,
    pub summary: Vec<SummaryRow>,
    pub best_splits: Vec<BestSplitRow>,
    pub notes: Vec<String>,
    pub correlations: Vec<CorrelationRow>,
}

pub fn build_report(
    result: &ResultSet,
    complexity: Option<&ComplexityDocument>,
    method: Correlation,
) -> Report {
    let summary = result
        .aggregates
        .iter()
        .map(|a| SummaryRow {
            benchmark: a.benchmark,
            label: a.label.clone(),
            accuracy: a.accuracy,
            n: a.n,
            errors: a.errors,
            reference_accuracy: reference_accuracy(a.benchmark, a.strategy),
        })
        .collect();
    let stats = complexity.map(|c| c.stats.clone()).unwrap_or_default();
    let mut notes = Vec::new();
    let mut best_splits = Vec::new();
    let mut benchmarks: Vec<Benchmark> = result.aggregates.iter().map(|a| a.benchmark).collect();
    benchmarks.dedup();
    for b in benchmarks {
        let group: Vec<Aggregate> = result
            .aggregates
            .iter()
            .filter(|a| a.benchmark == b)
            .cloned()
            .collect();
        if !group.iter().any(|a| a.strategy == Strategy::Dwm) {
            continue;
        }
        match best_split_report(&group, &stats, 1..=5) {
            Ok(rows) => best_splits.extend(rows),
            Err(e) => notes.push(format!("best split not reported: {e}")),
        }
    }
    let correlations = complexity
        .map(|c| correlation_rows(&result.aggregates, c, method))
        .unwrap_or_default();
    Report {
        provenance: result.provenance.clone(),
        summary,
        best_splits,
        notes,
        correlations,
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}

fn opt_f(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}"))
        .unwrap_or_else(|| "-".into())
}

/// Markdown rendering of the report.
pub fn render_markdown(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Run report\n");
    let _ = writeln!(
        s,
        "model `{}`, config `{}`, {} problems\n",
        r.provenance.model_id,
        &r.provenance.config_hash[..12.min(r.provenance.config_hash.len())],
        r.provenance.problems
    );
    let _ = writeln!(s, "## Accuracy\n");
    let _ = writeln!(
        s,
        "| benchmark | strategy | accuracy | n | errors | reference |"
    );
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for row in &r.summary {
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {} | {} | {} |",
            row.benchmark,
            row.label,
            row.accuracy,
            row.n,
            row.errors,
            opt_f(row.reference_accuracy, 4)
        );
    }
    if !r.best_splits.is_empty() {
        let _ = writeln!(s, "\n## Best DWM split\n");
        let _ = writeln!(
            s,
            "| benchmark | best split | accuracy | statefulness | reference split | reference statefulness |"
        );
        let _ = writeln!(s, "|---|---|---|---|---|---|");
        for row in &r.best_splits {
            let _ = writeln!(
                s,
                "| {} | {} | {:.4} | {} | {} | {} |",
                row.benchmark,
                row.best_split,
                row.accuracy,
                opt_f(row.statefulness_mean, 2),
                opt(row.reference_best_split),
                opt_f(row.reference_statefulness_mean, 2)
            );
        }
    }
    if !r.correlations.is_empty() {
        let _ = writeln!(s, "\n## Complexity vs error rate\n");
        let _ = writeln!(s, "| strategy | method | points | coefficient |");
        let _ = writeln!(s, "|---|---|---|---|");
        for c in &r.correlations {
            let coef = match (c.coefficient, &c.note) {
                (Some(v), _) => format!("{v:.4}"),
                (None, Some(n)) => format!("n/a ({n})"),
                (None, None) => "n/a".into(),
            };
            let _ = writeln!(
                s,
                "| {} | {:?} | {} | {} |",
                c.label,
                c.method,
                c.points.len(),
                coef
            );
        }
    }
    for n in &r.notes {
        let _ = writeln!(s, "\n> {n}");
    }
    s
}

/// Writes `report.md`, `report.json` and the complexity figure table.
pub fn write_report(out: &Path, r: &Report) -> Result<(), HarnessError> {
    write_atomic(&out.join("report.md"), render_markdown(r).as_bytes())?;
    write_atomic(
        &out.join("report.json"),
        serde_json::to_string_pretty(r)
            .expect("report serializes")
            .as_bytes(),
    )?;
    if !r.correlations.is_empty() {
        let body = csv_bytes(
            &["benchmark", "label", "mean_complexity", "error_rate"],
            |w| {
                for c in &r.correlations {
                    for p in &c.points {
                        w.write_record([
                            p.benchmark.to_string(),
                            c.label.clone(),
                            p.mean_complexity.to_string(),
                            p.error_rate.to_string(),
                        ])?;
                    }
                }
                Ok(())
            },
        )?;
        write_atomic(&out.join(FIGURE_DIR).join("complexity_vs_error.csv"), &body)?;
    }
    Ok(())
}
