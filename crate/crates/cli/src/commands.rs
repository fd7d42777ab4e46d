use std::collections::{BTreeMap, HashMap};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;
use tomloom::complexity::{
    aggregate_stats, complexity as complexity_of, tau_sweep, write_stats_csv, BenchmarkReport,
    ComplexityDocument, ComplexityError, DEFAULT_TAU, TAU_BAND,
};
use tomloom::harness::report::{build_report, render_markdown, write_report};
use tomloom::harness::service::{serve as serve_api, AnnotationStore, ServiceError};
use tomloom::harness::{
    load_results, run_experiment, Correlation, HarnessError, PairResult, Progress, RunConfig,
};
use tomloom::ingest::{self, read_problems, write_problems};
use tomloom::memorization::{probe_all, render_table, ProbeError, DEFAULT_SPLIT_FRACTION};
use tomloom::prompts::{Prompter, Strategy, StrategyConfig, TemplateSet};
use tomloom::types::{
    to_canonical_json, validate_annotation, AnnotationFile, AnnotationSet, Benchmark,
};
use tomloom::world::{derive_annotation, generate, WorldParams};

use crate::config::{BackendArgs, FileConfig};
use crate::{user, user_msg};

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(user_msg(format!(
            "{what} `{}` does not exist",
            path.display()
        )))
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("summaries serialize")
    );
}

fn write_file(path: &Path, body: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn ingest(benchmark: Benchmark, input: &Path, out: &Path, json: bool) -> anyhow::Result<()> {
    require_file(input, "input file")?;
    let report = ingest::ingest(benchmark, input, out).map_err(user)?;
    if json {
        print_json(&report);
    } else {
        println!("wrote {} problems to {}", report.count, out.display());
        for r in &report.rejected {
            let why: Vec<String> = r.violations.iter().map(|v| v.to_string()).collect();
            println!("rejected {}: {}", r.id, why.join("; "));
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct WorldgenArgs {
    /// Number of stories.
    #[arg(long, default_value_t = 100)]
    count: u64,
    /// Seed of the first story; story i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = WorldParams::default().n_agents)]
    agents: usize,
    #[arg(long, default_value_t = WorldParams::default().n_distractors)]
    distractors: usize,
    #[arg(long, default_value_t = WorldParams::default().n_moves)]
    moves: usize,
    /// Highest belief order tracked (0, 1 or 2).
    #[arg(long, default_value_t = WorldParams::default().k_max)]
    k_max: u32,
    /// Count the exit that strands a belief as an event for that belief.
    #[arg(long)]
    exit_events: bool,
    /// Output directory for problems.jsonl, annotations.tomann.json and gold.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct GoldRow<'a> {
    problem_id: &'a str,
    question_object_id: &'a str,
    gold_answer: &'a str,
}

pub fn worldgen(args: &WorldgenArgs, json: bool) -> anyhow::Result<()> {
    let params = WorldParams {
        n_agents: args.agents,
        n_distractors: args.distractors,
        n_moves: args.moves,
        k_max: args.k_max,
        exit_counts_as_event: args.exit_events,
    };
    let mut problems = Vec::new();
    let mut annotations = Vec::new();
    let mut gold = String::new();
    for i in 0..args.count {
        let story = generate(args.seed + i, params).map_err(user)?;
        let row = GoldRow {
            problem_id: &story.problem.id,
            question_object_id: &story.trace.question.object_id,
            gold_answer: &story.problem.gold_answer,
        };
        gold.push_str(&to_canonical_json(&row));
        gold.push('\n');
        annotations.push(derive_annotation(&story.trace));
        problems.push(story.problem);
    }
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_problems(&args.out.join("problems.jsonl"), &problems)?;
    let bundle = AnnotationFile::Bundle { annotations };
    write_file(
        &args.out.join("annotations.tomann.json"),
        to_canonical_json(&bundle).as_bytes(),
    )?;
    write_file(&args.out.join("gold.jsonl"), gold.as_bytes())?;
    if json {
        print_json(&serde_json::json!({ "stories": args.count, "out": args.out }));
    } else {
        println!("generated {} stories in {}", args.count, args.out.display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Normalized problems.jsonl.
    #[arg(long)]
    dataset: PathBuf,
    /// Strategies to evaluate: dwm, cot, tot, struct-json, struct-yaml.
    #[arg(long, value_delimiter = ',', default_value = "dwm")]
    strategy: Vec<Strategy>,
    /// DWM split counts; one run per value.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    splits: Vec<usize>,
    /// Evaluate a seeded random subset of this size.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, env = "TOMLOOM_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "TOMLOOM_WORKERS")]
    workers: Option<usize>,
    /// Output directory [default: out].
    #[arg(long, env = "TOMLOOM_OUT")]
    out: Option<PathBuf>,
    /// Directory of template overrides.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Number of ToT voters.
    #[arg(long)]
    tot_experts: Option<usize>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Put the final question in the last DWM chunk turn instead of a separate call.
    #[arg(long)]
    fuse_final: bool,
    #[command(flatten)]
    backend: BackendArgs,
}

struct LogProgress;

impl Progress for LogProgress {
    fn pair_done(&self, row: &PairResult, done: usize, total: usize) {
        if let Some(e) = &row.error {
            log::warn!("{} {}: {e}", row.problem_id, row.label);
        }
        let step = (total / 20).max(1);
        if done % step == 0 || done == total {
            log::info!("{done}/{total} pairs");
        }
    }
}

/// Sets the returned flag on Ctrl-C.
fn cancel_on_interrupt() -> Arc<AtomicBool> {
    let flag = Arc::new(AtomicBool::new(false));
    let f = flag.clone();
    std::thread::spawn(move || {
        let Ok(rt) = tokio::runtime::Builder::new_current_thread()
            .enable_io()
            .build()
        else {
            return;
        };
        if rt.block_on(tokio::signal::ctrl_c()).is_ok() {
            eprintln!("interrupted; finishing in-flight pairs");
            f.store(true, Ordering::SeqCst);
        }
    });
    flag
}

fn prompter(dir: Option<&Path>) -> anyhow::Result<Prompter> {
    let templates = match dir {
        Some(d) => TemplateSet::from_dir(d).map_err(user)?,
        None => TemplateSet::builtin(),
    };
    templates.check().map_err(user)?;
    Ok(Prompter::new(templates))
}

fn harness_error(e: HarnessError) -> anyhow::Error {
    match e {
        HarnessError::Io { .. } | HarnessError::Csv(_) => e.into(),
        HarnessError::Cancelled { completed, total } => user_msg(format!(
            "interrupted after {completed}/{total} pairs; rerun the same command to resume"
        )),
        _ => user(e),
    }
}

pub fn run(args: &RunArgs, file: &FileConfig, json: bool) -> anyhow::Result<()> {
    require_file(&args.dataset, "dataset")?;
    let mut strategies = Vec::new();
    for &s in &args.strategy {
        let mut configs = match s {
            Strategy::Dwm => args
                .splits
                .iter()
                .map(|&t| StrategyConfig::dwm(t))
                .collect(),
            s => vec![StrategyConfig::new(s)],
        };
        for c in &mut configs {
            if let Some(m) = args.tot_experts {
                c.tot_experts = m;
            }
            if let Some(m) = args.max_tokens {
                c.max_tokens = m;
            }
            c.fuse_final = args.fuse_final;
        }
        strategies.extend(configs);
    }
    let cfg = RunConfig {
        dataset: args.dataset.clone(),
        strategies,
        sample: args.sample,
        seed: args.seed.or(file.seed).unwrap_or(0),
        workers: args.workers.or(file.workers).unwrap_or(4),
        out_dir: args
            .out
            .clone()
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| "out".into()),
    };
    cfg.validate().map_err(user)?;
    let prompter = prompter(args.templates.as_deref().or(file.templates.as_deref()))?;
    let backend = args.backend.build(file)?;
    let cancel = cancel_on_interrupt();
    let result =
        run_experiment(&cfg, &prompter, &backend, &cancel, &LogProgress).map_err(harness_error)?;
    if json {
        print_json(&serde_json::json!({
            "provenance": result.provenance,
            "aggregates": result.aggregates,
        }));
    } else {
        println!(
            "{:<12} {:<12} {:>9} {:>5} {:>7}",
            "benchmark", "strategy", "accuracy", "n", "errors"
        );
        for a in &result.aggregates {
            println!(
                "{:<12} {:<12} {:>9.4} {:>5} {:>7}",
                a.benchmark.to_string(),
                a.label,
                a.accuracy,
                a.n,
                a.errors
            );
        }
        println!("results in {}", cfg.out_dir.display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct MemorizeArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Fraction of sentences given as the prefix.
    #[arg(long, default_value_t = DEFAULT_SPLIT_FRACTION)]
    split_fraction: f64,
    #[arg(long, env = "TOMLOOM_WORKERS")]
    workers: Option<usize>,
    /// Output file [default: out/memorization_report.json].
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
}

pub fn memorize(args: &MemorizeArgs, file: &FileConfig, json: bool) -> anyhow::Result<()> {
    require_file(&args.dataset, "dataset")?;
    let problems = read_problems(&args.dataset).map_err(user)?;
    let backend = args.backend.build(file)?;
    let workers = args.workers.or(file.workers).unwrap_or(4).max(1);
    let report =
        probe_all(&problems, &backend, args.split_fraction, workers).map_err(|e| match e {
            ProbeError::Backend { .. } => anyhow::Error::from(e),
            e => user(e),
        })?;
    let out = args.out.clone().unwrap_or_else(|| {
        file.out
            .clone()
            .unwrap_or_else(|| "out".into())
            .join("memorization_report.json")
    });
    let body = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&out, body.as_bytes())?;
    if json {
        print_json(&report.aggregates);
    } else {
        print!("{}", render_table(&report));
        if !report.failures.is_empty() {
            println!(
                "{} items failed; see {}",
                report.failures.len(),
                out.display()
            );
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    /// `.tomann.json` files or directories containing them.
    #[arg(long, required = true, num_args = 1..)]
    annotations: Vec<PathBuf>,
    /// problems.jsonl used to validate annotations and group them by benchmark.
    #[arg(long)]
    problems: Option<PathBuf>,
    /// Weight of the non-question objects, in [0, 1].
    #[arg(long, default_value_t = DEFAULT_TAU, conflicts_with = "tau_sweep")]
    tau: f64,
    /// Sweep tau over the default band instead of a single value.
    #[arg(long)]
    tau_sweep: bool,
    /// Number of evenly spaced values in the sweep.
    #[arg(long, default_value_t = 4)]
    sweep_steps: usize,
    /// Output directory for complexity_report.json and benchmark_stats.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn annotation_files(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        require_file(p, "annotation path")?;
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.to_string_lossy().ends_with(".tomann.json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn complexity(args: &ComplexityArgs, json: bool) -> anyhow::Result<()> {
    let taus = if args.tau_sweep {
        tau_sweep(TAU_BAND, args.sweep_steps)
    } else {
        vec![args.tau]
    };
    if let Some(&bad) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(user(ComplexityError::TauOutOfRange(bad)));
    }
    if taus.is_empty() {
        return Err(user_msg("--sweep-steps must be at least 1"));
    }

    let mut annotations: Vec<AnnotationSet> = Vec::new();
    for f in annotation_files(&args.annotations)? {
        let text =
            std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
        let parsed: AnnotationFile =
            serde_json::from_str(&text).map_err(|e| user_msg(format!("{}: {e}", f.display())))?;
        annotations.extend(parsed.into_vec());
    }
    if annotations.is_empty() {
        return Err(user_msg("no annotations found"));
    }

    let problems = match &args.problems {
        Some(p) => {
            require_file(p, "problems file")?;
            read_problems(p).map_err(user)?
        }
        None => Vec::new(),
    };
    let by_id: HashMap<&str, _> = problems.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut benchmarks = Vec::with_capacity(annotations.len());
    for a in &annotations {
        let benchmark = match by_id.get(a.problem_id.as_str()) {
            Some(p) => {
                let v = validate_annotation(a, p);
                if !v.is_empty() {
                    let msgs: Vec<String> = v.iter().map(|v| v.to_string()).collect();
                    return Err(user_msg(format!("{}: {}", a.problem_id, msgs.join("; "))));
                }
                p.benchmark
            }
            None if !problems.is_empty() => {
                return Err(user_msg(format!(
                    "{}: not in the problems file",
                    a.problem_id
                )));
            }
            None => Benchmark::from_problem_id(&a.problem_id).unwrap_or(Benchmark::Other),
        };
        benchmarks.push(benchmark);
    }

    let mut reports = Vec::new();
    let mut groups: BTreeMap<Benchmark, Vec<_>> = BTreeMap::new();
    for &tau in &taus {
        for (a, &benchmark) in annotations.iter().zip(&benchmarks) {
            let report = complexity_of(a, tau).map_err(user)?;
            if tau == taus[0] {
                groups.entry(benchmark).or_default().push(report.clone());
            }
            reports.push(BenchmarkReport { benchmark, report });
        }
    }
    let stats = aggregate_stats(&groups).map_err(user)?;
    let doc = ComplexityDocument {
        tau: taus,
        reports,
        stats,
    };
    let body = serde_json::to_string_pretty(&doc).expect("report serializes");
    write_file(&args.out.join("complexity_report.json"), body.as_bytes())?;
    let mut csv = Vec::new();
    write_stats_csv(&mut csv, &doc.stats)?;
    write_file(&args.out.join("benchmark_stats.csv"), &csv)?;
    if json {
        print_json(&doc.stats);
    } else {
        print!("{}", String::from_utf8_lossy(&csv));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// problems.jsonl to annotate.
    #[arg(long)]
    problems: PathBuf,
    /// Directory holding one .tomann.json per problem.
    #[arg(long, default_value = "annotations")]
    annotations: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
}

pub fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    require_file(&args.problems, "problems file")?;
    let problems = read_problems(&args.problems).map_err(user)?;
    let store = AnnotationStore::open(problems, &args.annotations).map_err(|e| match e {
        ServiceError::BadAnnotationFile { .. } => user(e),
        e => e.into(),
    })?;
    let rt = tokio::runtime::Runtime::new()?;
    let addr = SocketAddr::new(args.host, args.port);
    eprintln!("serving annotation API on http://{addr}");
    rt.block_on(serve_api(Arc::new(store), addr, async {
        let _ = tokio::signal::ctrl_c().await;
    }))
    .map_err(|e| match e {
        ServiceError::PortInUse(_) => user(e),
        e => e.into(),
    })
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Pearson,
    Spearman,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a finished `run`.
    #[arg(long)]
    results: PathBuf,
    /// complexity_report.json to correlate against.
    #[arg(long)]
    complexity: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pearson")]
    method: Method,
    /// Where report.md and report.json go [default: the results directory].
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn report(args: &ReportArgs, json: bool) -> anyhow::Result<()> {
    require_file(&args.results, "results directory")?;
    let result = load_results(&args.results).map_err(user)?;
    let doc: Option<ComplexityDocument> = match &args.complexity {
        Some(p) => {
            require_file(p, "complexity report")?;
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| user_msg(format!("{}: {e}", p.display())))?,
            )
        }
        None => None,
    };
    let method = match args.method {
        Method::Pearson => Correlation::Pearson,
        Method::Spearman => Correlation::Spearman,
    };
    let r = build_report(&result, doc.as_ref(), method);
    write_report(args.out.as_deref().unwrap_or(&args.results), &r)?;
    if json {
        print_json(&r);
    } else {
        print!("{}", render_markdown(&r));
    }
    Ok(())
}
