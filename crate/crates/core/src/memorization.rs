//! Prefix-continuation memorization probe.
//!
//! The backend sees the first part of a story and is asked to continue it;
//! the continuation is scored against the held-out remainder, exactly and
//! with a Levenshtein ratio.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::complexity::mean_std;
use crate::gateway::{estimate_tokens, ChatBackend, ChatMessage, ChatRequest, GatewayError};
use crate::reference::{reference, MeanStd};
use crate::types::{Benchmark, ProblemInstance};

pub const DEFAULT_SPLIT_FRACTION: f64 = 0.5;

/// The scoring rule, stated in every report.
pub const FUZZY_FORMULA: &str =
    "100 * (1 - levenshtein(a, b) / max(len(a), len(b))) over Unicode scalar values, \
     after collapsing whitespace runs to one space and trimming; 100 when both are empty";

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("{problem_id}: needs at least 2 sentences, has {sentences}")]
    TooShort {
        problem_id: String,
        sentences: usize,
    },
    #[error("split fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("{problem_id}: {source}")]
    Backend {
        problem_id: String,
        source: GatewayError,
    },
    #[error("no results to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationResult {
    pub problem_id: String,
    pub benchmark: Benchmark,
    pub prefix_len_sentences: usize,
    pub exact: bool,
    pub fuzzy_score: f64,
    pub expected: String,
    pub generated: String,
}

/// Unit-cost edit distance over chars, two-row dynamic programme.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn fuzzy_ratio(a: &str, b: &str) -> f64 {
    let (a, b) = (normalize_whitespace(a), normalize_whitespace(b));
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 100.0;
    }
    100.0 * (1.0 - levenshtein(&a, &b) as f64 / longest as f64)
}

/// Number of prefix sentences: `ceil(fraction * n)`, kept in `1..n`.
pub fn prefix_len(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// The prompt and the held-out continuation for one instance.
pub fn split_prompt(
    p: &ProblemInstance,
    fraction: f64,
) -> Result<(usize, String, String), ProbeError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ProbeError::InvalidFraction(fraction));
    }
    let n = p.sentences.len();
    if n < 2 {
        return Err(ProbeError::TooShort {
            problem_id: p.id.clone(),
            sentences: n,
        });
    }
    let k = prefix_len(n, fraction);
    let join = |s: &[crate::types::Sentence]| {
        s.iter()
            .map(|x| x.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    };
    Ok((k, join(&p.sentences[..k]) + "\n", join(&p.sentences[k..])))
}

pub fn probe<B: ChatBackend + ?Sized>(
    p: &ProblemInstance,
    backend: &B,
    fraction: f64,
) -> Result<MemorizationResult, ProbeError> {
    let (k, prompt, expected) = split_prompt(p, fraction)?;
    let mut req = ChatRequest::new(backend.model_id(), vec![ChatMessage::user(prompt)]);
    req.max_tokens = ((estimate_tokens(&expected) as f64 * 1.25).ceil() as u32).max(1);
    let resp = backend
        .complete(&req)
        .map_err(|source| ProbeError::Backend {
            problem_id: p.id.clone(),
            source,
        })?;
    let exact = normalize_whitespace(&resp.text) == normalize_whitespace(&expected);
    let fuzzy_score = if exact {
        100.0
    } else {
        fuzzy_ratio(&resp.text, &expected)
    };
    Ok(MemorizationResult {
        problem_id: p.id.clone(),
        benchmark: p.benchmark,
        prefix_len_sentences: k,
        exact,
        fuzzy_score,
        expected,
        generated: resp.text,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MemorizationSummary {
    pub n: usize,
    pub exact_pct: f64,
    pub fuzzy_mean: f64,
    pub fuzzy_std: f64,
}

pub fn aggregate_memorization(
    results: &[MemorizationResult],
) -> Result<MemorizationSummary, ProbeError> {
    if results.is_empty() {
        return Err(ProbeError::EmptyInput);
    }
    let exact = results.iter().filter(|r| r.exact).count();
    let scores: Vec<f64> = results.iter().map(|r| r.fuzzy_score).collect();
    let (fuzzy_mean, fuzzy_std) = mean_std(&scores);
    Ok(MemorizationSummary {
        n: results.len(),
        exact_pct: 100.0 * exact as f64 / results.len() as f64,
        fuzzy_mean,
        fuzzy_std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceMemorization {
    pub exact_pct: f64,
    pub fuzzy: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkMemorization {
    pub benchmark: Benchmark,
    pub measured: MemorizationSummary,
    pub reference: Option<ReferenceMemorization>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeFailure {
    pub problem_id: String,
    pub error: String,
}

/// Contents of `memorization_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemorizationReport {
    pub model_id: String,
    pub split_fraction: f64,
    pub formula: &'static str,
    pub items: Vec<MemorizationResult>,
    pub aggregates: Vec<BenchmarkMemorization>,
    pub failures: Vec<ProbeFailure>,
}

/// Probes every instance with up to `workers` threads. Items come back in
/// input order; backend failures are listed rather than aborting the run.
pub fn probe_all<B: ChatBackend + ?Sized>(
    problems: &[ProblemInstance],
    backend: &B,
    fraction: f64,
    workers: usize,
) -> Result<MemorizationReport, ProbeError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ProbeError::InvalidFraction(fraction));
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<MemorizationResult, ProbeError>>>> =
        Mutex::new((0..problems.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, problems.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(p) = problems.get(i) else { break };
                let r = probe(p, backend, fraction);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut items = Vec::new();
    let mut failures = Vec::new();
    for (slot, p) in slots.into_inner().unwrap().into_iter().zip(problems) {
        match slot.expect("every slot is filled") {
            Ok(r) => items.push(r),
            Err(e) => failures.push(ProbeFailure {
                problem_id: p.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let mut benchmarks: Vec<Benchmark> = items.iter().map(|r| r.benchmark).collect();
    benchmarks.sort();
    benchmarks.dedup();
    let aggregates = benchmarks
        .into_iter()
        .map(|b| {
            let group: Vec<MemorizationResult> =
                items.iter().filter(|r| r.benchmark == b).cloned().collect();
            BenchmarkMemorization {
                benchmark: b,
                measured: aggregate_memorization(&group).expect("group is non-empty"),
                reference: reference(b).map(|r| ReferenceMemorization {
                    exact_pct: r.exact_pct,
                    fuzzy: r.fuzzy,
                }),
            }
        })
        .collect();
    Ok(MemorizationReport {
        model_id: backend.model_id().to_string(),
        split_fraction: fraction,
        formula: FUZZY_FORMULA,
        items,
        aggregates,
        failures,
    })
}

/// Markdown table of measured values beside the reference row.
pub fn render_table(report: &MemorizationReport) -> String {
    let mut s = String::from(
        "| benchmark | n | exact % | fuzzy | reference exact % | reference fuzzy |\n|---|---|---|---|---|---|\n",
    );
    for a in &report.aggregates {
        let (re, rf) = match &a.reference {
            Some(r) => (
                format!("{:.0}", r.exact_pct),
                format!("{:.0} ± {:.0}", r.fuzzy.mean, r.fuzzy.std),
            ),
            None => ("-".into(), "-".into()),
        };
        s += &format!(
            "| {} | {} | {:.1} | {:.1} ± {:.1} | {re} | {rf} |\n",
            a.benchmark,
            a.measured.n,
            a.measured.exact_pct,
            a.measured.fuzzy_mean,
            a.measured.fuzzy_std
        );
    }
    s
}
