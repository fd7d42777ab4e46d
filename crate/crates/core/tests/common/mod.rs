//! Helpers shared by integration test targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;
use regex::Regex;
use tomloom::gateway::{ChatBackend, ChatRequest, ChatResponse, GatewayError, Usage};
use tomloom::types::{
    AnnotationSet, Benchmark, ObjectKind, ProblemInstance, StateEventMark, TrackedObject,
};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(fixture("templates").join(name)).unwrap()
}

/// The ten-sentence second-order ToMi story used by the golden prompts.
pub fn sample_story() -> ProblemInstance {
    let text = std::fs::read_to_string(fixture("sample_tomi.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// The final query written out by hand: preamble, then every chunk followed
/// by the interleaved request and the scripted state description, then the
/// question, all separated by blank lines.
pub fn composed_final_query(
    x: &str,
    chunks: &[&str],
    w: &str,
    answers: &[&str],
    y: &str,
) -> String {
    let mut s = String::from(x);
    for (p, a) in chunks.iter().zip(answers) {
        s += "\n\n";
        s += p;
        s += "\n\n";
        s += w;
        s += "\n\n";
        s += a;
    }
    s += "\n\n";
    s += y;
    s
}

/// Replies with `answers[k]` on the k-th call, then `last` forever.
pub struct SequencedBackend {
    answers: Vec<String>,
    last: String,
    next: AtomicUsize,
}

impl SequencedBackend {
    pub fn new(answers: Vec<String>, last: &str) -> Self {
        SequencedBackend {
            answers,
            last: last.into(),
            next: Default::default(),
        }
    }
}

impl ChatBackend for SequencedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let k = self.next.fetch_add(1, Ordering::SeqCst);
        let text = self
            .answers
            .get(k)
            .cloned()
            .unwrap_or_else(|| self.last.clone());
        Ok(ChatResponse {
            usage: Usage::estimate(req, &text),
            text,
            cached: false,
            latency_ms: 0,
        })
    }

    fn model_id(&self) -> &str {
        "sequenced"
    }
}

pub fn problem_with(n: usize) -> ProblemInstance {
    ProblemInstance::new(
        "p-0",
        Benchmark::ToMi,
        (1..=n).map(|i| format!("S{i}.")),
        "Q?",
        "a",
    )
}

/// A valid annotation over `n` sentences.
pub fn arb_annotation(n: usize) -> impl Strategy<Value = AnnotationSet> {
    let object = prop_oneof![
        Just(Vec::<String>::new()),
        prop::collection::vec("[a-z]{1,5}", 1..3),
    ];
    prop::collection::vec(
        (object, prop::collection::btree_set(1..=n, 0..=n.min(6))),
        1..6,
    )
    .prop_flat_map(|objs| {
        let len = objs.len();
        (Just(objs), 0..len)
    })
    .prop_map(|(objs, q)| {
        let mut objects = Vec::new();
        let mut events = Vec::new();
        for (i, (chain, marks)) in objs.into_iter().enumerate() {
            let id = format!("o{i}");
            objects.push(if chain.is_empty() {
                TrackedObject::physical(&id, format!("object {i}"))
            } else {
                TrackedObject::belief(&id, chain, format!("belief {i}"))
            });
            events.extend(marks.into_iter().map(|s| StateEventMark::new(&id, s)));
        }
        AnnotationSet {
            problem_id: "p-0".into(),
            objects,
            events,
            question_object_id: format!("o{q}"),
        }
    })
}

/// Value sequences recovered from story text alone, one entry per time
/// step `0..=n` where index 0 is the initial state.
#[derive(Debug, Default)]
pub struct TextReplay {
    pub agents: BTreeSet<String>,
    pub physical: BTreeSet<String>,
    pub subjects: BTreeSet<String>,
    pub presence: Vec<BTreeSet<String>>,
    /// container of each physical object over time
    pub location: BTreeMap<String, Vec<Option<String>>>,
    /// (agent, attitude) statements per distractor subject over time
    pub statements: BTreeMap<String, Vec<Option<(String, String)>>>,
}

/// Re-reads a generated story sentence by sentence.
pub fn replay_text(p: &ProblemInstance) -> TextReplay {
    static PATTERNS: LazyLock<[Regex; 5]> = LazyLock::new(|| {
        [
            r"^(\w+) entered the (.+)\.$",
            r"^(\w+) exited the (.+)\.$",
            r"^The (.+) is in the (.+)\.$",
            r"^(\w+) moved the (.+) to the (.+)\.$",
            r"^(\w+) (\w+) the (.+)$",
        ]
        .map(|p| Regex::new(p).unwrap())
    });
    let [enter, exit, place, moved, opinion] = &*PATTERNS;

    let mut r = TextReplay::default();
    let n = p.sentences.len();
    let mut present = BTreeSet::new();
    r.presence.push(present.clone());
    let mut loc: BTreeMap<String, Option<String>> = BTreeMap::new();
    let mut said: BTreeMap<String, Option<(String, String)>> = BTreeMap::new();
    let mut loc_hist: Vec<BTreeMap<String, Option<String>>> = vec![BTreeMap::new()];
    let mut said_hist: Vec<BTreeMap<String, Option<(String, String)>>> = vec![BTreeMap::new()];
    for s in &p.sentences {
        let text = s.text.as_str();
        if let Some(c) = enter.captures(text) {
            let a = c[1].to_lowercase();
            r.agents.insert(a.clone());
            present.insert(a);
        } else if let Some(c) = exit.captures(text) {
            let a = c[1].to_lowercase();
            r.agents.insert(a.clone());
            present.remove(&a);
        } else if let Some(c) = place.captures(text) {
            r.physical.insert(c[1].to_string());
            loc.insert(c[1].to_string(), Some(c[2].to_string()));
        } else if let Some(c) = moved.captures(text) {
            r.agents.insert(c[1].to_lowercase());
            r.physical.insert(c[2].to_string());
            loc.insert(c[2].to_string(), Some(c[3].to_string()));
        } else if let Some(c) = opinion.captures(text) {
            r.agents.insert(c[1].to_lowercase());
            r.subjects.insert(c[3].to_string());
            said.insert(
                c[3].to_string(),
                Some((c[1].to_lowercase(), c[2].to_string())),
            );
        } else {
            panic!("unrecognized sentence `{text}`");
        }
        r.presence.push(present.clone());
        loc_hist.push(loc.clone());
        said_hist.push(said.clone());
    }
    for o in &r.physical {
        r.location.insert(
            o.clone(),
            (0..=n)
                .map(|t| loc_hist[t].get(o).cloned().flatten())
                .collect(),
        );
    }
    for s in &r.subjects {
        r.statements.insert(
            s.clone(),
            (0..=n)
                .map(|t| said_hist[t].get(s).cloned().flatten())
                .collect(),
        );
    }
    r
}

impl TextReplay {
    /// What the chain believes about `object` over time: updated whenever
    /// the object is placed or moved while every chain member is present.
    pub fn belief(&self, chain: &[String], object: &str) -> Vec<Option<String>> {
        let loc = &self.location[object];
        let mut out = vec![None];
        let mut current = None;
        for t in 1..loc.len() {
            let changed = loc[t] != loc[t - 1];
            if changed && chain.iter().all(|a| self.presence[t].contains(a)) {
                current = loc[t].clone();
            }
            out.push(current.clone());
        }
        out
    }

    fn changes<T: PartialEq>(seq: &[T]) -> u64 {
        seq.windows(2).filter(|w| w[0] != w[1]).count() as u64
    }

    /// Number of state changes of a tracked object, from text alone.
    pub fn count_changes(&self, o: &TrackedObject) -> u64 {
        match o.kind {
            ObjectKind::Physical if self.location.contains_key(&o.object_id) => {
                Self::changes(&self.location[&o.object_id])
            }
            ObjectKind::Physical => Self::changes(&self.statements[&o.object_id]),
            ObjectKind::Belief => {
                let subject = o.object_id.rsplit(':').next().unwrap();
                Self::changes(&self.belief(&o.owner_chain, subject))
            }
        }
    }

    /// Ordered chains of distinct agents up to `k`: sum of n!/(n-j)!.
    pub fn expected_belief_count(&self, k: u32) -> usize {
        let n = self.agents.len();
        let mut total = 0;
        let mut perms = 1;
        for j in 0..k as usize {
            perms *= n.saturating_sub(j);
            total += perms;
        }
        total * self.physical.len()
    }
}
