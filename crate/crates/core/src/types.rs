//! Domain types shared by every subsystem: problems, tracked objects,
//! state descriptions, state-event annotations and complexity reports.
//!
//! All types serialize to a canonical JSON form (compact, fields in
//! declaration order, maps sorted by key) so that `serialize -> parse ->
//! serialize` is byte-stable.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Rendering of the virtual initial state shared by every object.
pub const INITIAL_STATE: &str = "⊥";

/// File extension used for annotation documents.
pub const ANNOTATION_EXTENSION: &str = ".tomann.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Benchmark {
    ToMi,
    MindGames,
    AdvCSFB,
    SocialIQa,
    FANToM,
    Synthetic,
    Other,
}

impl Benchmark {
    pub const ALL: [Benchmark; 7] = [
        Benchmark::ToMi,
        Benchmark::MindGames,
        Benchmark::AdvCSFB,
        Benchmark::SocialIQa,
        Benchmark::FANToM,
        Benchmark::Synthetic,
        Benchmark::Other,
    ];

    /// Short lowercase slug used in CLI flags and problem ids.
    pub fn slug(self) -> &'static str {
        match self {
            Benchmark::ToMi => "tomi",
            Benchmark::MindGames => "mindgames",
            Benchmark::AdvCSFB => "adv-csfb",
            Benchmark::SocialIQa => "socialiqa",
            Benchmark::FANToM => "fantom",
            Benchmark::Synthetic => "synthetic",
            Benchmark::Other => "other",
        }
    }

    /// Infers the benchmark from an id of the form `<slug>-<n>`.
    pub fn from_problem_id(id: &str) -> Option<Benchmark> {
        Benchmark::ALL
            .into_iter()
            .filter(|b| {
                id.strip_prefix(b.slug())
                    .is_some_and(|rest| rest.starts_with('-'))
            })
            // "adv-csfb" must win over a hypothetical "adv" prefix
            .max_by_key(|b| b.slug().len())
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Benchmark::ToMi => "ToMi",
            Benchmark::MindGames => "MindGames",
            Benchmark::AdvCSFB => "AdvCSFB",
            Benchmark::SocialIQa => "SocialIQa",
            Benchmark::FANToM => "FANToM",
            Benchmark::Synthetic => "Synthetic",
            Benchmark::Other => "Other",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown benchmark `{0}` (expected one of tomi, mindgames, adv-csfb, socialiqa, fantom, synthetic, other)")]
pub struct UnknownBenchmark(pub String);

impl FromStr for Benchmark {
    type Err = UnknownBenchmark;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "tomi" => Ok(Benchmark::ToMi),
            "mindgames" => Ok(Benchmark::MindGames),
            "advcsfb" => Ok(Benchmark::AdvCSFB),
            "socialiqa" => Ok(Benchmark::SocialIQa),
            "fantom" => Ok(Benchmark::FANToM),
            "synthetic" => Ok(Benchmark::Synthetic),
            "other" => Ok(Benchmark::Other),
            _ => Err(UnknownBenchmark(s.to_string())),
        }
    }
}

/// One atomic prompt of a story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// 1-based position in the story.
    pub index: usize,
    pub text: String,
}

/// A normalized ToM task: a story, a question about it and the gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub id: String,
    pub benchmark: Benchmark,
    pub sentences: Vec<Sentence>,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    pub gold_answer: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ProblemInstance {
    /// Builds an instance from raw sentence texts, numbering them from 1.
    pub fn new<I, S>(
        id: impl Into<String>,
        benchmark: Benchmark,
        sentences: I,
        question: impl Into<String>,
        gold_answer: impl Into<String>,
    ) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ProblemInstance {
            id: id.into(),
            benchmark,
            sentences: sentences
                .into_iter()
                .enumerate()
                .map(|(i, text)| Sentence {
                    index: i + 1,
                    text: text.into(),
                })
                .collect(),
            question: question.into(),
            choices: None,
            gold_answer: gold_answer.into(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_choices<I, S>(mut self, choices: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.choices = Some(choices.into_iter().map(Into::into).collect());
        self
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Story lines numbered as `"<index>. <text>"`, the layout every
    /// prompt template uses.
    pub fn numbered_lines(&self) -> Vec<String> {
        self.sentences
            .iter()
            .map(|s| format!("{}. {}", s.index, s.text))
            .collect()
    }

    pub fn is_multiple_choice(&self) -> bool {
        self.choices.as_ref().is_some_and(|c| !c.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ObjectKind {
    Physical,
    Belief,
}

/// Something whose configuration a solver has to track: a physical object
/// or a k-th order belief about one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackedObject {
    pub object_id: String,
    pub kind: ObjectKind,
    pub belief_order: u32,
    /// Agents holding the nested belief, outermost first.
    pub owner_chain: Vec<String>,
    pub label: String,
}

impl TrackedObject {
    pub fn physical(object_id: impl Into<String>, label: impl Into<String>) -> Self {
        TrackedObject {
            object_id: object_id.into(),
            kind: ObjectKind::Physical,
            belief_order: 0,
            owner_chain: Vec::new(),
            label: label.into(),
        }
    }

    pub fn belief(
        object_id: impl Into<String>,
        owner_chain: Vec<String>,
        label: impl Into<String>,
    ) -> Self {
        TrackedObject {
            object_id: object_id.into(),
            kind: ObjectKind::Belief,
            belief_order: owner_chain.len() as u32,
            owner_chain,
            label: label.into(),
        }
    }

    fn is_consistent(&self) -> bool {
        let physical = self.kind == ObjectKind::Physical;
        let order_zero = self.belief_order == 0;
        let chain_empty = self.owner_chain.is_empty();
        physical == order_zero
            && order_zero == chain_empty
            && self.belief_order as usize == self.owner_chain.len()
    }
}

/// Canonical rendering of a belief value:
/// `believes(<owner>>...>, <object>=<value>)`.
pub fn render_belief(owner_chain: &[String], object: &str, value: &str) -> String {
    format!("believes({}, {}={})", owner_chain.join(">"), object, value)
}

/// A state description `(e_t, p_<=t)`: the configuration of one object after
/// the story prefix ending at `prefix_end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDescription {
    pub object_id: String,
    pub time: usize,
    pub value: String,
    pub prefix_end: usize,
}

impl StateDescription {
    pub fn initial(object_id: impl Into<String>) -> Self {
        StateDescription {
            object_id: object_id.into(),
            time: 0,
            value: INITIAL_STATE.to_string(),
            prefix_end: 0,
        }
    }
}

/// The configuration of `object_id` changed at sentence
/// `boundary_after_sentence`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateEventMark {
    pub object_id: String,
    pub boundary_after_sentence: usize,
}

impl StateEventMark {
    pub fn new(object_id: impl Into<String>, sentence: usize) -> Self {
        StateEventMark {
            object_id: object_id.into(),
            boundary_after_sentence: sentence,
        }
    }
}

/// Human (or oracle) labels for one problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub problem_id: String,
    pub objects: Vec<TrackedObject>,
    pub events: Vec<StateEventMark>,
    pub question_object_id: String,
}

impl AnnotationSet {
    pub fn object(&self, object_id: &str) -> Option<&TrackedObject> {
        self.objects.iter().find(|o| o.object_id == object_id)
    }

    /// Sorts events by object (in `objects` order) then sentence, dropping
    /// exact duplicates.
    pub fn normalize(&mut self) {
        let rank: HashMap<&str, usize> = self
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| (o.object_id.as_str(), i))
            .collect();
        let mut events = std::mem::take(&mut self.events);
        events.sort_by(|a, b| {
            let ka = (
                rank.get(a.object_id.as_str())
                    .copied()
                    .unwrap_or(usize::MAX),
                &a.object_id,
            );
            let kb = (
                rank.get(b.object_id.as_str())
                    .copied()
                    .unwrap_or(usize::MAX),
                &b.object_id,
            );
            ka.cmp(&kb)
                .then(a.boundary_after_sentence.cmp(&b.boundary_after_sentence))
        });
        events.dedup();
        self.events = events;
    }
}

/// Either a single annotation or a bundle, as found in `.tomann.json` files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnnotationFile {
    Bundle { annotations: Vec<AnnotationSet> },
    Single(AnnotationSet),
}

impl AnnotationFile {
    pub fn into_vec(self) -> Vec<AnnotationSet> {
        match self {
            AnnotationFile::Bundle { annotations } => annotations,
            AnnotationFile::Single(a) => vec![a],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub problem_id: String,
    pub statefulness: u64,
    pub statelessness_raw: u64,
    pub tau: f64,
    pub complexity: f64,
}

/// Where a dangling object reference was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSite {
    Event,
    Question,
}

/// A broken invariant found by [`validate_annotation`] or
/// [`validate_problem`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Violation {
    ProblemMismatch {
        expected: String,
        found: String,
    },
    EmptyStory,
    NonContiguousIndex {
        position: usize,
        index: usize,
    },
    MultilineSentence {
        index: usize,
    },
    EmptySentence {
        index: usize,
    },
    GoldNotAChoice {
        gold_answer: String,
    },
    DuplicateObject {
        object_id: String,
    },
    InconsistentObjectKind {
        object_id: String,
    },
    OutOfRange {
        object_id: String,
        sentence: usize,
        max: usize,
    },
    DanglingObject {
        object_id: String,
        site: ReferenceSite,
    },
    DuplicateEvent {
        object_id: String,
        sentence: usize,
    },
    UnsortedEvents {
        object_id: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ProblemMismatch { expected, found } => {
                write!(
                    f,
                    "annotation targets problem `{found}`, expected `{expected}`"
                )
            }
            Violation::EmptyStory => f.write_str("problem has no sentences"),
            Violation::NonContiguousIndex { position, index } => write!(
                f,
                "sentence at position {position} has index {index}, expected {}",
                position + 1
            ),
            Violation::MultilineSentence { index } => {
                write!(f, "sentence {index} contains a line break")
            }
            Violation::EmptySentence { index } => write!(f, "sentence {index} is empty"),
            Violation::GoldNotAChoice { gold_answer } => {
                write!(
                    f,
                    "gold answer `{gold_answer}` is not exactly one of the choices"
                )
            }
            Violation::DuplicateObject { object_id } => {
                write!(f, "object `{object_id}` is declared more than once")
            }
            Violation::InconsistentObjectKind { object_id } => write!(
                f,
                "object `{object_id}`: kind, belief order and owner chain disagree"
            ),
            Violation::OutOfRange {
                object_id,
                sentence,
                max,
            } => write!(
                f,
                "event for `{object_id}` at sentence {sentence} is outside 1..={max}"
            ),
            Violation::DanglingObject { object_id, site } => {
                let site = match site {
                    ReferenceSite::Event => "an event",
                    ReferenceSite::Question => "the question",
                };
                write!(f, "{site} references unknown object `{object_id}`")
            }
            Violation::DuplicateEvent {
                object_id,
                sentence,
            } => {
                write!(
                    f,
                    "duplicate event for `{object_id}` at sentence {sentence}"
                )
            }
            Violation::UnsortedEvents { object_id } => {
                write!(f, "events for `{object_id}` are not in ascending order")
            }
        }
    }
}

/// Lowercase, trim, drop trailing punctuation and collapse inner whitespace.
pub fn normalize_answer(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim()
        .to_lowercase()
}

/// Checks the invariants of a single problem instance.
pub fn validate_problem(p: &ProblemInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.sentences.is_empty() {
        out.push(Violation::EmptyStory);
    }
    for (pos, s) in p.sentences.iter().enumerate() {
        if s.index != pos + 1 {
            out.push(Violation::NonContiguousIndex {
                position: pos,
                index: s.index,
            });
        }
        if s.text.contains(['\n', '\r']) {
            out.push(Violation::MultilineSentence { index: s.index });
        }
        if s.text.trim().is_empty() {
            out.push(Violation::EmptySentence { index: s.index });
        }
    }
    if let Some(choices) = &p.choices {
        let gold = normalize_answer(&p.gold_answer);
        let hits = choices
            .iter()
            .filter(|c| normalize_answer(c) == gold)
            .count();
        if hits != 1 {
            out.push(Violation::GoldNotAChoice {
                gold_answer: p.gold_answer.clone(),
            });
        }
    }
    out
}

/// Checks an annotation against the problem it labels. An empty result
/// means every downstream complexity computation is total.
pub fn validate_annotation(a: &AnnotationSet, p: &ProblemInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    if a.problem_id != p.id {
        out.push(Violation::ProblemMismatch {
            expected: p.id.clone(),
            found: a.problem_id.clone(),
        });
    }

    let mut seen = HashSet::new();
    for o in &a.objects {
        if !seen.insert(o.object_id.as_str()) {
            out.push(Violation::DuplicateObject {
                object_id: o.object_id.clone(),
            });
        }
        if !o.is_consistent() {
            out.push(Violation::InconsistentObjectKind {
                object_id: o.object_id.clone(),
            });
        }
    }

    let max = p.sentences.len();
    let mut pairs = HashSet::new();
    let mut last_per_object: HashMap<&str, usize> = HashMap::new();
    let mut unsorted_reported = HashSet::new();
    for e in &a.events {
        let id = e.object_id.as_str();
        if !seen.contains(id) {
            out.push(Violation::DanglingObject {
                object_id: e.object_id.clone(),
                site: ReferenceSite::Event,
            });
        }
        let s = e.boundary_after_sentence;
        if s == 0 || s > max {
            out.push(Violation::OutOfRange {
                object_id: e.object_id.clone(),
                sentence: s,
                max,
            });
        }
        if !pairs.insert((id, s)) {
            out.push(Violation::DuplicateEvent {
                object_id: e.object_id.clone(),
                sentence: s,
            });
        } else if let Some(&prev) = last_per_object.get(id) {
            if s < prev && unsorted_reported.insert(id) {
                out.push(Violation::UnsortedEvents {
                    object_id: e.object_id.clone(),
                });
            }
        }
        last_per_object.insert(id, s);
    }

    if !seen.contains(a.question_object_id.as_str()) {
        out.push(Violation::DanglingObject {
            object_id: a.question_object_id.clone(),
            site: ReferenceSite::Question,
        });
    }
    out
}

/// Compact JSON in declaration order; the canonical on-disk form.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("domain types always serialize")
}
