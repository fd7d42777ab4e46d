//! Experiment orchestration: scoring, the resumable runner, reports and the
//! annotation service.

pub mod metrics;
pub mod report;
pub mod service;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::gateway::{ChatBackend, Usage};
use crate::ingest::{read_problems, sample, IngestError};
use crate::prompts::{
    choice_letter, ExtractedAnswer, Prompter, Strategy, StrategyConfig, StrategyError, Transcript,
};
use crate::types::{normalize_answer, Benchmark, ProblemInstance};

pub use metrics::{best_split, pearson, spearman, Correlation, MetricError};

/// Comparison key: normalized, with `_` and `-` read as spaces.
fn key(s: &str) -> String {
    normalize_answer(&s.replace(['_', '-'], " "))
}

/// Index of the choice an answer refers to, if any: exact text, then the
/// choice letter, then a unique containment match.
pub fn match_choice(answer: &str, choices: &[String]) -> Option<usize> {
    let ans = key(answer);
    if ans.is_empty() {
        return None;
    }
    let keys: Vec<String> = choices.iter().map(|c| key(c)).collect();
    if let Some(i) = keys.iter().position(|k| *k == ans) {
        return Some(i);
    }
    let bare = ans.trim_matches(|c| c == '(' || c == ')');
    let bare = bare
        .strip_prefix("option ")
        .or_else(|| bare.strip_prefix("choice "))
        .unwrap_or(bare);
    if let Some(i) = (0..choices.len()).find(|&i| choice_letter(i).to_ascii_lowercase() == bare) {
        return Some(i);
    }
    let hits: Vec<usize> = (0..keys.len())
        .filter(|&i| !keys[i].is_empty() && (ans.contains(&keys[i]) || keys[i].contains(&ans)))
        .collect();
    // a hit nested inside another hit ("entailment" in "not entailment")
    // is shadowed by the longer one
    let outer: Vec<usize> = hits
        .iter()
        .copied()
        .filter(|&i| {
            !hits
                .iter()
                .any(|&j| j != i && keys[j].len() > keys[i].len() && keys[j].contains(&keys[i]))
        })
        .collect();
    match outer.as_slice() {
        [i] => Some(*i),
        _ => None,
    }
}

/// Correctness of an extracted answer against the gold label.
pub fn omega(answer: &ExtractedAnswer, p: &ProblemInstance) -> bool {
    match p.choices.as_deref() {
        Some(choices) if !choices.is_empty() => match_choice(&answer.answer, choices)
            .is_some_and(|i| key(&choices[i]) == key(&p.gold_answer)),
        _ => answer.answer == normalize_answer(&p.gold_answer),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] IngestError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("run cancelled after {completed} of {total} pairs; rerun to resume")]
    Cancelled { completed: usize, total: usize },
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: PathBuf,
    pub strategies: Vec<StrategyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.workers == 0 {
            return Err(HarnessError::Config("workers must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(HarnessError::Config("no strategies configured".into()));
        }
        let mut labels = HashSet::new();
        for s in &self.strategies {
            s.validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            if !labels.insert(label(s)) {
                return Err(HarnessError::Config(format!(
                    "strategy {} listed twice",
                    label(s)
                )));
            }
        }
        Ok(())
    }
}

/// `dwm-3`, `cot`, `tot`, ...: unique per configured strategy.
pub fn label(cfg: &StrategyConfig) -> String {
    match cfg.strategy {
        Strategy::Dwm => format!("dwm-{}", cfg.splits),
        s => s.slug().to_string(),
    }
}

/// One (instance, strategy) evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairResult {
    pub problem_id: String,
    pub benchmark: Benchmark,
    pub strategy: Strategy,
    pub splits: usize,
    pub label: String,
    pub answer: String,
    pub found_tags: bool,
    pub gold: String,
    pub correct: bool,
    pub calls: usize,
    pub usage: Usage,
    /// Pair file holding the transcript, relative to the output directory.
    pub transcript: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PairFile {
    result: PairResult,
    transcript: Transcript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub benchmark: Benchmark,
    pub strategy: Strategy,
    pub splits: usize,
    pub label: String,
    /// correct / n over pairs that completed without error.
    pub accuracy: f64,
    pub correct: usize,
    pub n: usize,
    pub errors: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_id: String,
    pub timestamp: String,
    pub config_hash: String,
    pub dataset_sha256: String,
    pub problems: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub rows: Vec<PairResult>,
    pub aggregates: Vec<Aggregate>,
    pub provenance: Provenance,
}

pub fn aggregate(rows: &[PairResult]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(Benchmark, Strategy, usize), Vec<&PairResult>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.benchmark, r.strategy, r.splits))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((benchmark, strategy, splits), rs)| {
            let ok: Vec<&&PairResult> = rs.iter().filter(|r| r.error.is_none()).collect();
            let correct = ok.iter().filter(|r| r.correct).count();
            let n = ok.len();
            Aggregate {
                benchmark,
                strategy,
                splits,
                label: rs[0].label.clone(),
                accuracy: if n == 0 {
                    0.0
                } else {
                    correct as f64 / n as f64
                },
                correct,
                n,
                errors: rs.len() - n,
                input_tokens: rs.iter().map(|r| r.usage.input_tokens).sum(),
                output_tokens: rs.iter().map(|r| r.usage.output_tokens).sum(),
            }
        })
        .collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of everything that determines the results: dataset content, the
/// selection, strategies, templates and model.
pub fn config_hash(
    cfg: &RunConfig,
    dataset_sha: &str,
    prompter: &Prompter,
    model_id: &str,
) -> String {
    let canonical = serde_json::json!({
        "dataset_sha256": dataset_sha,
        "sample": cfg.sample,
        "seed": cfg.seed,
        "strategies": cfg.strategies,
        "templates": sha256_hex(format!("{:?}", prompter.templates).as_bytes()),
        "model_id": model_id,
    });
    sha256_hex(canonical.to_string().as_bytes())
}

/// File-name-safe form of an id.
fn safe(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let parent = path.parent().expect("output paths have a parent");
    fs::create_dir_all(parent).map_err(io_err(parent))?;
    let tmp = parent.join(format!(
        ".{}.{}.tmp",
        path.file_name().unwrap().to_string_lossy(),
        std::process::id()
    ));
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Runs one pair and scores it. Backend failures become error rows.
fn evaluate<B: ChatBackend + ?Sized>(
    p: &ProblemInstance,
    cfg: &StrategyConfig,
    prompter: &Prompter,
    backend: &B,
    transcript_ref: String,
) -> (PairResult, Option<Transcript>) {
    let mut row = PairResult {
        problem_id: p.id.clone(),
        benchmark: p.benchmark,
        strategy: cfg.strategy,
        splits: cfg.effective_splits(),
        label: label(cfg),
        answer: String::new(),
        found_tags: false,
        gold: p.gold_answer.clone(),
        correct: false,
        calls: 0,
        usage: Usage::default(),
        transcript: transcript_ref,
        error: None,
    };
    match prompter.run(p, cfg, backend) {
        Ok((t, a)) => {
            row.correct = omega(&a, p);
            row.answer = a.answer;
            row.found_tags = a.found_tags;
            row.calls = t.calls.len();
            row.usage = t.usage();
            (row, Some(t))
        }
        Err(e) => {
            if let StrategyError::Backend { partial, .. } = &e {
                row.calls = partial.calls.len();
                row.usage = partial.usage();
            }
            row.error = Some(e.to_string());
            (row, None)
        }
    }
}

/// Observer hooks for progress reporting.
pub trait Progress: Sync {
    fn pair_done(&self, _row: &PairResult, _done: usize, _total: usize) {}
}

impl Progress for () {}

/// Evaluates every (instance, strategy) pair once, skipping pairs already
/// persisted under the same config hash. Setting `cancel` stops new pairs
/// from starting; finished pairs stay on disk for the next run.
pub fn run_experiment<B: ChatBackend + ?Sized>(
    cfg: &RunConfig,
    prompter: &Prompter,
    backend: &B,
    cancel: &AtomicBool,
    progress: &dyn Progress,
) -> Result<ResultSet, HarnessError> {
    cfg.validate()?;
    let bytes = fs::read(&cfg.dataset).map_err(io_err(&cfg.dataset))?;
    let dataset_sha = sha256_hex(&bytes);
    let all = read_problems(&cfg.dataset)?;
    let problems = match cfg.sample {
        Some(n) => sample(&all, n, cfg.seed)?,
        None => all,
    };
    let hash = config_hash(cfg, &dataset_sha, prompter, backend.model_id());
    let pair_dir = cfg.out_dir.join("pairs").join(&hash);
    fs::create_dir_all(&pair_dir).map_err(io_err(&pair_dir))?;

    let pairs: Vec<(&ProblemInstance, &StrategyConfig)> = problems
        .iter()
        .flat_map(|p| cfg.strategies.iter().map(move |s| (p, s)))
        .collect();
    let total = pairs.len();
    let rel = |p: &ProblemInstance, s: &StrategyConfig| {
        format!("pairs/{hash}/{}__{}.json", safe(&p.id), label(s))
    };

    let rows: Mutex<Vec<Option<PairResult>>> = Mutex::new(vec![None; total]);
    let mut todo = Vec::new();
    for (i, (p, s)) in pairs.iter().enumerate() {
        let path = cfg.out_dir.join(rel(p, s));
        let cached = fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str::<PairFile>(&t).ok());
        match cached {
            Some(f) => rows.lock().unwrap()[i] = Some(f.result),
            None => todo.push(i),
        }
    }
    log::info!("{} pairs, {} already done", total, total - todo.len());

    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(total - todo.len());
    let failure: Mutex<Option<HarnessError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(todo.len().max(1)) {
            scope.spawn(|| loop {
                if cancel.load(Ordering::SeqCst) || failure.lock().unwrap().is_some() {
                    break;
                }
                let Some(&i) = todo.get(next.fetch_add(1, Ordering::SeqCst)) else {
                    break;
                };
                let (p, s) = pairs[i];
                let r = rel(p, s);
                let (row, transcript) = evaluate(p, s, prompter, backend, r.clone());
                if let Some(transcript) = transcript {
                    let file = PairFile {
                        result: row.clone(),
                        transcript,
                    };
                    let body = serde_json::to_vec(&file).expect("pair files serialize");
                    if let Err(e) = write_atomic(&cfg.out_dir.join(&r), &body) {
                        failure.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
                let n = done.fetch_add(1, Ordering::SeqCst) + 1;
                progress.pair_done(&row, n, total);
                rows.lock().unwrap()[i] = Some(row);
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let rows = rows.into_inner().unwrap();
    let completed = rows.iter().filter(|r| r.is_some()).count();
    if completed < total {
        return Err(HarnessError::Cancelled { completed, total });
    }
    let mut rows: Vec<PairResult> = rows.into_iter().map(Option::unwrap).collect();
    rows.sort_by(|a, b| (&a.problem_id, &a.label).cmp(&(&b.problem_id, &b.label)));

    let result = ResultSet {
        aggregates: aggregate(&rows),
        rows,
        provenance: Provenance {
            model_id: backend.model_id().to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config_hash: hash,
            dataset_sha256: dataset_sha,
            problems: problems.len(),
        },
    };
    report::write_result_files(&cfg.out_dir, &result)?;
    Ok(result)
}

/// Reads `results.jsonl` and `run.json` back from an output directory.
pub fn load_results(out_dir: &Path) -> Result<ResultSet, HarnessError> {
    let path = out_dir.join(report::RESULTS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let rows = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                HarnessError::Config(format!("{} line {}: {e}", path.display(), i + 1))
            })
        })
        .collect::<Result<Vec<PairResult>, _>>()?;
    let run_path = out_dir.join(report::RUN_FILE);
    let run_text = fs::read_to_string(&run_path).map_err(io_err(&run_path))?;
    let run: report::RunFile = serde_json::from_str(&run_text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", run_path.display())))?;
    Ok(ResultSet {
        aggregates: aggregate(&rows),
        rows,
        provenance: run.provenance,
    })
}
