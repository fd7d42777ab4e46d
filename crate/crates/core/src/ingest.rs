//! Benchmark loaders producing normalized [`ProblemInstance`] JSONL.
//!
//! Native layouts (one record per line unless noted):
//!
//! | benchmark | layout |
//! |-----------|--------|
//! | ToMi | text; `"<n> <sentence>"` lines, question line `"<n> <question>\t<answer>\t<support>"`; numbering restarts at 1 for each story. `"<n>. "` numbering is accepted too. |
//! | SocialIQa | JSONL `{context, question, answerA, answerB, answerC, label}`, label 1-based |
//! | MindGames | JSONL `{premise, hypothesis, label}`, label `entailment`/`not_entailment` or 0/1 |
//! | Adv-CSFB | JSONL `{story \| context, question, answer, choices?}` |
//! | FANToM | JSONL `{context \| story, question, answer, choices?}`, one utterance per line |
//!
//! A file whose first record already parses as a [`ProblemInstance`] is
//! taken as normalized and passed through unchanged.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use crate::types::{validate_problem, Benchmark, ProblemInstance, Violation};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: story has no sentences")]
    EmptyStory { line: usize },
    #[error("{benchmark} has no native loader; supply a normalized problems.jsonl")]
    NoLoader { benchmark: Benchmark },
    #[error("cannot sample {requested} of {available} problems")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// An instance dropped because it failed validation.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Rejection {
    pub id: String,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct IngestReport {
    pub count: usize,
    pub rejected: Vec<Rejection>,
}

/// Splits on newlines, then after `.`, `!` or `?` followed by whitespace.
/// Terminal punctuation stays with its sentence.
pub fn split_story(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut start = 0;
        let mut chars = line.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|(_, n)| n.is_whitespace())
            {
                push_trimmed(&mut out, &line[start..i + c.len_utf8()]);
                start = i + c.len_utf8();
            }
        }
        push_trimmed(&mut out, &line[start..]);
    }
    out
}

fn split_lines(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        push_trimmed(&mut out, line);
    }
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

/// Parses `text` in the native layout of `benchmark` (or normalized JSONL).
pub fn parse_str(benchmark: Benchmark, text: &str) -> Result<Vec<ProblemInstance>, IngestError> {
    if looks_normalized(text) {
        return parse_normalized(text);
    }
    match benchmark {
        Benchmark::ToMi => parse_tomi(text),
        Benchmark::SocialIQa => parse_jsonl(text, benchmark, socialiqa_record),
        Benchmark::MindGames => parse_jsonl(text, benchmark, mindgames_record),
        Benchmark::AdvCSFB => parse_jsonl(text, benchmark, |v, l| story_record(v, l, split_story)),
        Benchmark::FANToM => parse_jsonl(text, benchmark, |v, l| story_record(v, l, split_lines)),
        Benchmark::Synthetic | Benchmark::Other => Err(IngestError::NoLoader { benchmark }),
    }
}

fn looks_normalized(text: &str) -> bool {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| serde_json::from_str::<ProblemInstance>(l).is_ok())
}

fn parse_normalized(text: &str) -> Result<Vec<ProblemInstance>, IngestError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| IngestError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn parse_tomi(text: &str) -> Result<Vec<ProblemInstance>, IngestError> {
    let mut out = Vec::new();
    let mut story: Vec<String> = Vec::new();
    let mut story_start = 1;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 {
            return Err(IngestError::Parse {
                line: line_no,
                message: "expected a line starting with its number".into(),
            });
        }
        let n: usize = line[..digits].parse().map_err(|_| IngestError::Parse {
            line: line_no,
            message: "line number out of range".into(),
        })?;
        let body = line[digits..]
            .strip_prefix('.')
            .unwrap_or(&line[digits..])
            .trim();
        if n == 1 {
            if !story.is_empty() {
                return Err(IngestError::Parse {
                    line: story_start,
                    message: "story has no question line".into(),
                });
            }
            story_start = line_no;
        }
        if let Some((question, rest)) = body.split_once('\t') {
            let answer = rest.split('\t').next().unwrap_or("").trim();
            if story.is_empty() {
                return Err(IngestError::EmptyStory { line: line_no });
            }
            if answer.is_empty() {
                return Err(IngestError::Parse {
                    line: line_no,
                    message: "question line has no answer field".into(),
                });
            }
            out.push(ProblemInstance::new(
                format!("{}-{}", Benchmark::ToMi.slug(), out.len()),
                Benchmark::ToMi,
                std::mem::take(&mut story),
                question.trim(),
                answer,
            ));
        } else {
            story.extend(split_story(body));
        }
    }
    if !story.is_empty() {
        return Err(IngestError::Parse {
            line: story_start,
            message: "story has no question line".into(),
        });
    }
    Ok(out)
}

struct Fields {
    sentences: Vec<String>,
    question: String,
    answer: String,
    choices: Option<Vec<String>>,
}

fn parse_jsonl(
    text: &str,
    benchmark: Benchmark,
    record: impl Fn(&Value, usize) -> Result<Fields, IngestError>,
) -> Result<Vec<ProblemInstance>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(line).map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let f = record(&v, line_no)?;
        if f.sentences.is_empty() {
            return Err(IngestError::EmptyStory { line: line_no });
        }
        let mut p = ProblemInstance::new(
            format!("{}-{}", benchmark.slug(), out.len()),
            benchmark,
            f.sentences,
            f.question,
            f.answer,
        );
        p.choices = f.choices;
        out.push(p);
    }
    Ok(out)
}

fn field<'a>(v: &'a Value, names: &[&str], line: usize) -> Result<&'a Value, IngestError> {
    names
        .iter()
        .find_map(|n| v.get(*n).filter(|x| !x.is_null()))
        .ok_or_else(|| IngestError::Parse {
            line,
            message: format!("missing field `{}`", names.join("` or `")),
        })
}

fn text_field(v: &Value, names: &[&str], line: usize) -> Result<String, IngestError> {
    match field(v, names, line)? {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(IngestError::Parse {
            line,
            message: format!("field `{}` must be a string", names[0]),
        }),
    }
}

fn string_list(v: &Value, name: &str, line: usize) -> Result<Option<Vec<String>>, IngestError> {
    match v.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Array(items)) => items
            .iter()
            .map(|x| {
                x.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| IngestError::Parse {
                        line,
                        message: format!("`{name}` must be a list of strings"),
                    })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some),
        Some(_) => Err(IngestError::Parse {
            line,
            message: format!("`{name}` must be a list of strings"),
        }),
    }
}

fn socialiqa_record(v: &Value, line: usize) -> Result<Fields, IngestError> {
    let choices = vec![
        text_field(v, &["answerA"], line)?,
        text_field(v, &["answerB"], line)?,
        text_field(v, &["answerC"], line)?,
    ];
    let label = text_field(v, &["label", "correct"], line)?;
    let idx = match label.trim() {
        "1" | "A" | "a" => 0,
        "2" | "B" | "b" => 1,
        "3" | "C" | "c" => 2,
        other => {
            return Err(IngestError::Parse {
                line,
                message: format!("label `{other}` is not 1, 2 or 3"),
            })
        }
    };
    Ok(Fields {
        sentences: split_story(&text_field(v, &["context"], line)?),
        question: text_field(v, &["question"], line)?,
        answer: choices[idx].clone(),
        choices: Some(choices),
    })
}

pub const MINDGAMES_CHOICES: [&str; 2] = ["entailment", "not_entailment"];

fn mindgames_record(v: &Value, line: usize) -> Result<Fields, IngestError> {
    let label = text_field(v, &["label"], line)?;
    let answer = match label.trim().to_ascii_lowercase().as_str() {
        "0" | "entailment" => MINDGAMES_CHOICES[0],
        "1" | "not_entailment" | "not entailment" => MINDGAMES_CHOICES[1],
        other => {
            return Err(IngestError::Parse {
                line,
                message: format!("label `{other}` is not entailment or not_entailment"),
            })
        }
    };
    let hypothesis = text_field(v, &["hypothesis"], line)?;
    Ok(Fields {
        sentences: split_story(&text_field(v, &["premise"], line)?),
        question: format!(
            "Is the following hypothesis entailed by the dialogue? {}",
            hypothesis.trim()
        ),
        answer: answer.into(),
        choices: Some(MINDGAMES_CHOICES.map(String::from).to_vec()),
    })
}

fn story_record(
    v: &Value,
    line: usize,
    split: fn(&str) -> Vec<String>,
) -> Result<Fields, IngestError> {
    let story = match field(v, &["story", "context"], line)? {
        Value::Array(lines) => lines
            .iter()
            .filter_map(Value::as_str)
            .collect::<Vec<_>>()
            .join("\n"),
        _ => text_field(v, &["story", "context"], line)?,
    };
    Ok(Fields {
        sentences: split(&story),
        question: text_field(v, &["question"], line)?,
        answer: text_field(v, &["answer", "gold_answer", "correct_answer"], line)?,
        choices: string_list(v, "choices", line)?,
    })
}

/// Parses and validates; invalid instances are left out and reported.
pub fn load(
    benchmark: Benchmark,
    path: &Path,
) -> Result<(Vec<ProblemInstance>, IngestReport), IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let parsed = parse_str(benchmark, &text)?;
    let mut report = IngestReport::default();
    let mut kept = Vec::with_capacity(parsed.len());
    for p in parsed {
        let violations = validate_problem(&p);
        if violations.is_empty() {
            kept.push(p);
        } else {
            report.rejected.push(Rejection {
                id: p.id.clone(),
                violations,
            });
        }
    }
    report.count = kept.len();
    Ok((kept, report))
}

/// `load` followed by `write_problems`.
pub fn ingest(
    benchmark: Benchmark,
    input: &Path,
    output: &Path,
) -> Result<IngestReport, IngestError> {
    let (problems, report) = load(benchmark, input)?;
    write_problems(output, &problems)?;
    Ok(report)
}

pub fn read_problems(path: &Path) -> Result<Vec<ProblemInstance>, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_normalized(&text)
}

/// One compact JSON object per line.
pub fn write_problems(path: &Path, problems: &[ProblemInstance]) -> Result<(), IngestError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for p in problems {
        let line = serde_json::to_string(p).expect("problems serialize");
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Uniform sample without replacement; items keep their original order.
pub fn sample<T: Clone>(items: &[T], n: usize, seed: u64) -> Result<Vec<T>, IngestError> {
    if n > items.len() {
        return Err(IngestError::SampleTooLarge {
            requested: n,
            available: items.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, items.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| items[i].clone()).collect())
}
