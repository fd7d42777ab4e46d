//! Partitions, statefulness, statelessness and the discounted task
//! complexity `T_obj + tau * sum(T_other)`.
//!
//! Everything here assumes an annotation that passed
//! [`validate_annotation`](crate::types::validate_annotation); objects that
//! are relevant but unannotated simply contribute zero.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::types::{AnnotationSet, Benchmark, ComplexityReport, StateEventMark};

pub const DEFAULT_TAU: f64 = 0.1;
/// Inclusive band swept by `complexity --tau-sweep`.
pub const TAU_BAND: (f64, f64) = (0.05, 0.2);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ComplexityError {
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("tau must lie in [0, 1], got {0}")]
    TauOutOfRange(f64),
    #[error("benchmark group {0} has no reports")]
    EmptyGroup(Benchmark),
}

/// The state events of one object, ascending by sentence.
pub fn partition(
    a: &AnnotationSet,
    object_id: &str,
) -> Result<Vec<StateEventMark>, ComplexityError> {
    if a.object(object_id).is_none() {
        return Err(ComplexityError::UnknownObject(object_id.to_string()));
    }
    let mut events: Vec<StateEventMark> = a
        .events
        .iter()
        .filter(|e| e.object_id == object_id)
        .cloned()
        .collect();
    events.sort_by_key(|e| e.boundary_after_sentence);
    events.dedup();
    Ok(events)
}

/// `T_obj`: the size of the object's partition.
pub fn statefulness(a: &AnnotationSet, object_id: &str) -> Result<u64, ComplexityError> {
    partition(a, object_id).map(|p| p.len() as u64)
}

/// Sum of statefulness over every object except the question's target.
pub fn statelessness(a: &AnnotationSet) -> Result<u64, ComplexityError> {
    a.objects
        .iter()
        .filter(|o| o.object_id != a.question_object_id)
        .map(|o| statefulness(a, &o.object_id))
        .sum()
}

pub fn complexity(a: &AnnotationSet, tau: f64) -> Result<ComplexityReport, ComplexityError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(ComplexityError::TauOutOfRange(tau));
    }
    let stateful = statefulness(a, &a.question_object_id)?;
    let stateless = statelessness(a)?;
    Ok(ComplexityReport {
        problem_id: a.problem_id.clone(),
        statefulness: stateful,
        statelessness_raw: stateless,
        tau,
        complexity: stateful as f64 + tau * stateless as f64,
    })
}

/// Evenly spaced tau values covering `band` inclusively.
pub fn tau_sweep(band: (f64, f64), steps: usize) -> Vec<f64> {
    let (lo, hi) = band;
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Per-benchmark mean and population standard deviation of statefulness
/// and statelessness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStats {
    pub benchmark: Benchmark,
    pub statefulness_mean: f64,
    pub statefulness_std: f64,
    pub statelessness_mean: f64,
    pub statelessness_std: f64,
    pub n_samples: usize,
}

/// Population (1/n) mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    // sort so the result does not depend on input order
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn aggregate_stats(
    groups: &BTreeMap<Benchmark, Vec<ComplexityReport>>,
) -> Result<Vec<BenchmarkStats>, ComplexityError> {
    groups
        .iter()
        .map(|(&benchmark, reports)| {
            if reports.is_empty() {
                return Err(ComplexityError::EmptyGroup(benchmark));
            }
            let stateful: Vec<f64> = reports.iter().map(|r| r.statefulness as f64).collect();
            let stateless: Vec<f64> = reports.iter().map(|r| r.statelessness_raw as f64).collect();
            let (sf_mean, sf_std) = mean_std(&stateful);
            let (sl_mean, sl_std) = mean_std(&stateless);
            Ok(BenchmarkStats {
                benchmark,
                statefulness_mean: sf_mean,
                statefulness_std: sf_std,
                statelessness_mean: sl_mean,
                statelessness_std: sl_std,
                n_samples: reports.len(),
            })
        })
        .collect()
}

/// Writes `benchmark_stats.csv`.
pub fn write_stats_csv<W: Write>(out: W, stats: &[BenchmarkStats]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "benchmark",
        "statefulness_mean",
        "statefulness_std",
        "statelessness_mean",
        "statelessness_std",
        "n",
    ])?;
    for s in stats {
        w.write_record([
            s.benchmark.to_string(),
            s.statefulness_mean.to_string(),
            s.statefulness_std.to_string(),
            s.statelessness_mean.to_string(),
            s.statelessness_std.to_string(),
            s.n_samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Contents of `complexity_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityDocument {
    pub tau: Vec<f64>,
    pub reports: Vec<BenchmarkReport>,
    pub stats: Vec<BenchmarkStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub benchmark: Benchmark,
    #[serde(flatten)]
    pub report: ComplexityReport,
}
