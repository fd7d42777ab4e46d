//! Prompting strategies: chunked world-model prompting (DWM), chain of
//! thought, tree of thoughts and structured-representation prompting.
//!
//! Every run is sequential inside one problem and records the exact
//! messages sent on each call in a [`Transcript`].

mod chunk;
mod cost;
mod extract;
mod template;

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatBackend, ChatMessage, ChatRequest, GatewayError, Role, Usage};
use crate::types::ProblemInstance;

pub use chunk::{event_aligned, render_chunk, split_sentences, ChunkPlan};
pub use cost::{estimate_cost, CostEstimate};
pub use extract::{extract_answer, ExtractedAnswer};
pub use template::{render, TemplateError, TemplateSet};

/// Maximum number of ToT candidates kept from stage 1.
pub const MAX_CANDIDATES: usize = 8;
pub const TOT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_TOT_EXPERTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Dwm,
    Cot,
    Tot,
    StructJson,
    StructYaml,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Dwm,
        Strategy::Cot,
        Strategy::Tot,
        Strategy::StructJson,
        Strategy::StructYaml,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            Strategy::Dwm => "dwm",
            Strategy::Cot => "cot",
            Strategy::Tot => "tot",
            Strategy::StructJson => "struct-json",
            Strategy::StructYaml => "struct-yaml",
        }
    }

    /// Format word used by the structured strategies.
    pub fn format_word(self) -> Option<&'static str> {
        match self {
            Strategy::StructJson => Some("JSON"),
            Strategy::StructYaml => Some("YAML"),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Strategy {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "dwm" => Ok(Strategy::Dwm),
            "cot" => Ok(Strategy::Cot),
            "tot" => Ok(Strategy::Tot),
            "structjson" | "json" => Ok(Strategy::StructJson),
            "structyaml" | "yaml" => Ok(Strategy::StructYaml),
            _ => Err(StrategyError::InvalidConfig(format!(
                "unknown strategy `{s}` (expected dwm, cot, tot, struct-json or struct-yaml)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    /// Number of chunks for DWM; ignored otherwise.
    #[serde(default = "one")]
    pub splits: usize,
    /// Number of ToT voters.
    #[serde(default = "default_experts")]
    pub tot_experts: usize,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// DWM: send the final question together with the last chunk instead of
    /// in its own call.
    #[serde(default)]
    pub fuse_final: bool,
    /// DWM: explicit 1-based sentence numbers to split after, overriding the
    /// uniform plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuts: Option<Vec<usize>>,
}

fn one() -> usize {
    1
}

fn default_experts() -> usize {
    DEFAULT_TOT_EXPERTS
}

fn default_max_tokens() -> u32 {
    crate::gateway::DEFAULT_MAX_TOKENS
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        StrategyConfig {
            strategy,
            splits: 1,
            tot_experts: DEFAULT_TOT_EXPERTS,
            temperature: if strategy == Strategy::Tot {
                TOT_TEMPERATURE
            } else {
                0.0
            },
            max_tokens: default_max_tokens(),
            seed: None,
            fuse_final: false,
            cuts: None,
        }
    }

    pub fn dwm(splits: usize) -> Self {
        StrategyConfig {
            splits,
            ..Self::new(Strategy::Dwm)
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.splits == 0 {
            return Err(StrategyError::InvalidConfig("splits must be >= 1".into()));
        }
        if self.strategy == Strategy::Tot && self.tot_experts < 2 {
            return Err(StrategyError::InvalidConfig(format!(
                "ToT needs at least 2 voters, got {}",
                self.tot_experts
            )));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(StrategyError::InvalidConfig(format!(
                "temperature must lie in [0, 2], got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(StrategyError::InvalidConfig(
                "max_tokens must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Splits as reported in results: the configured value for DWM, 1 for
    /// every other strategy.
    pub fn effective_splits(&self) -> usize {
        if self.strategy == Strategy::Dwm {
            self.splits
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnRole {
    User,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnTag {
    PreambleX,
    ChunkP,
    InterleaveW,
    AnswerA,
    FinalY,
    Raw,
}

impl TurnTag {
    fn letter(self) -> char {
        match self {
            TurnTag::PreambleX => 'x',
            TurnTag::ChunkP => 'p',
            TurnTag::InterleaveW => 'w',
            TurnTag::AnswerA => 'a',
            TurnTag::FinalY => 'y',
            TurnTag::Raw => 'r',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: TurnRole,
    pub text: String,
    pub tag: TurnTag,
}

/// One backend round trip: what was sent and what came back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub messages: Vec<ChatMessage>,
    pub response: String,
    pub usage: Usage,
    pub cached: bool,
}

impl CallRecord {
    /// The call's messages as one string, joined by blank lines.
    pub fn flattened(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub strategy: Strategy,
    pub turns: Vec<Turn>,
    pub calls: Vec<CallRecord>,
}

impl Transcript {
    fn new(strategy: Strategy) -> Self {
        Transcript {
            strategy,
            turns: Vec::new(),
            calls: Vec::new(),
        }
    }

    fn push(&mut self, role: TurnRole, tag: TurnTag, text: impl Into<String>) {
        self.turns.push(Turn {
            role,
            text: text.into(),
            tag,
        });
    }

    /// Tag letters in order, e.g. `"xpwapwya"`.
    pub fn tag_string(&self) -> String {
        self.turns.iter().map(|t| t.tag.letter()).collect()
    }

    pub fn usage(&self) -> Usage {
        let mut total = Usage::default();
        for c in &self.calls {
            total += c.usage;
        }
        total
    }

    /// The story-facing user turns (preamble, chunks, final query) joined by
    /// blank lines: the prompt with interleaved requests and model answers
    /// removed.
    pub fn story_view(&self) -> String {
        self.turns
            .iter()
            .filter(|t| {
                matches!(
                    t.tag,
                    TurnTag::PreambleX | TurnTag::ChunkP | TurnTag::FinalY
                )
            })
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Chat messages for the turns so far: consecutive user turns merge into
    /// one message, model turns become assistant messages.
    fn messages(&self) -> Vec<ChatMessage> {
        let mut out: Vec<ChatMessage> = Vec::new();
        for t in &self.turns {
            let role = match t.role {
                TurnRole::User => Role::User,
                TurnRole::Model => Role::Assistant,
            };
            match out.last_mut() {
                Some(last) if last.role == Role::User && role == Role::User => {
                    last.text.push_str("\n\n");
                    last.text.push_str(&t.text);
                }
                _ => out.push(ChatMessage {
                    role,
                    text: t.text.clone(),
                }),
            }
        }
        out
    }
}

/// Checks a DWM tag string against `x (p w a)^T y a`, or
/// `x (p w a)^(T-1) p w y a` when the final query is fused.
pub fn dwm_grammar_ok(tags: &str, t: usize, fused: bool) -> bool {
    if t == 0 {
        return false;
    }
    let expected = if fused {
        format!("x{}pwya", "pwa".repeat(t - 1))
    } else {
        format!("x{}ya", "pwa".repeat(t))
    };
    tags == expected
}

#[derive(Debug, thiserror::Error)]
pub enum StrategyError {
    #[error("backend failed on call {}: {source}", partial.calls.len() + 1)]
    Backend {
        source: GatewayError,
        partial: Box<Transcript>,
    },
    #[error("problem has no sentences")]
    EmptyProblem,
    #[error("invalid strategy config: {0}")]
    InvalidConfig(String),
}

/// Builds prompts from a [`TemplateSet`] and runs strategies against a
/// backend.
#[derive(Debug, Clone, Default)]
pub struct Prompter {
    pub templates: TemplateSet,
}

static BUILTIN: LazyLock<Prompter> = LazyLock::new(Prompter::default);

/// A prompter using the compiled-in templates.
pub fn builtin() -> &'static Prompter {
    &BUILTIN
}

/// Runs `cfg.strategy` with the builtin templates.
pub fn run<B: ChatBackend + ?Sized>(
    p: &ProblemInstance,
    cfg: &StrategyConfig,
    backend: &B,
) -> Result<(Transcript, ExtractedAnswer), StrategyError> {
    builtin().run(p, cfg, backend)
}

pub fn dwm_run<B: ChatBackend + ?Sized>(
    p: &ProblemInstance,
    cfg: &StrategyConfig,
    backend: &B,
) -> Result<(Transcript, ExtractedAnswer), StrategyError> {
    builtin().dwm_run(p, cfg, backend)
}

pub fn cot_run<B: ChatBackend + ?Sized>(
    p: &ProblemInstance,
    cfg: &StrategyConfig,
    backend: &B,
) -> Result<(Transcript, ExtractedAnswer), StrategyError> {
    builtin().cot_run(p, cfg, backend)
}

pub fn tot_run<B: ChatBackend + ?Sized>(
    p: &ProblemInstance,
    cfg: &StrategyConfig,
    backend: &B,
) -> Result<(Transcript, ExtractedAnswer), StrategyError> {
    builtin().tot_run(p, cfg, backend)
}

pub fn struct_run<B: ChatBackend + ?Sized>(
    p: &ProblemInstance,
    cfg: &StrategyConfig,
    backend: &B,
) -> Result<(Transcript, ExtractedAnswer), StrategyError> {
    builtin().struct_run(p, cfg, backend)
}

struct Session<'a, B: ?Sized> {
    backend: &'a B,
    cfg: &'a StrategyConfig,
    transcript: Transcript,
}

impl<B: ChatBackend + ?Sized> Session<'_, B> {
    fn send(
        &mut self,
        messages: Vec<ChatMessage>,
        seed: Option<u64>,
    ) -> Result<String, StrategyError> {
        let mut req = ChatRequest::new(self.backend.model_id(), messages);
        req.temperature = self.cfg.temperature;
        req.max_tokens = self.cfg.max_tokens;
        req.seed = seed;
        match self.backend.complete(&req) {
            Ok(resp) => {
                self.transcript.calls.push(CallRecord {
                    messages: req.messages,
                    response: resp.text.clone(),
                    usage: resp.usage,
                    cached: resp.cached,
                });
                Ok(resp.text)
            }
            Err(source) => Err(StrategyError::Backend {
                source,
                partial: Box::new(self.transcript.clone()),
            }),
        }
    }

    /// Sends the conversation built from all turns so far and records the
    /// reply as a model turn with `tag`.
    fn converse(&mut self, tag: TurnTag) -> Result<String, StrategyError> {
        let messages = self.transcript.messages();
        let text = self.send(messages, self.cfg.seed)?;
        self.transcript.push(TurnRole::Model, tag, text.clone());
        Ok(text)
    }

    /// A standalone single-message call, logged as raw turns.
    fn single(&mut self, prompt: String, seed: Option<u64>) -> Result<String, StrategyError> {
        self.transcript
            .push(TurnRole::User, TurnTag::Raw, prompt.clone());
        let text = self.send(vec![ChatMessage::user(prompt)], seed)?;
        self.transcript
            .push(TurnRole::Model, TurnTag::Raw, text.clone());
        Ok(text)
    }
}

impl Prompter {
    pub fn new(templates: TemplateSet) -> Self {
        Prompter { templates }
    }

    /// `""` for free-answer problems, otherwise a blank line and a lettered
    /// list.
    pub fn choices_block(p: &ProblemInstance) -> String {
        match &p.choices {
            Some(c) if !c.is_empty() => {
                let lines: Vec<String> = c
                    .iter()
                    .enumerate()
                    .map(|(i, text)| format!("{}. {}", choice_letter(i), text))
                    .collect();
                format!("\n\nChoices:\n{}", lines.join("\n"))
            }
            _ => String::new(),
        }
    }

    fn story(p: &ProblemInstance) -> String {
        render_chunk(p, 0..p.sentences.len())
    }

    pub fn final_query(&self, p: &ProblemInstance) -> String {
        let choices = Self::choices_block(p);
        render(
            &self.templates.final_query,
            &[("question", &p.question), ("choices", &choices)],
        )
    }

    pub fn cot_prompt(&self, p: &ProblemInstance) -> String {
        [
            self.templates.cot_preamble.clone(),
            Self::story(p),
            self.final_query(p),
        ]
        .join("\n\n")
    }

    pub fn tot_propose_prompt(&self, p: &ProblemInstance) -> String {
        let choices = Self::choices_block(p);
        render(
            &self.templates.tot_propose,
            &[
                ("story", &Self::story(p)),
                ("question", &p.question),
                ("choices", &choices),
            ],
        )
    }

    pub fn tot_vote_prompt(&self, p: &ProblemInstance, candidates: &[String]) -> String {
        let observations: String = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| format!("\nChoice {}: {}", i + 1, c))
            .collect();
        render(
            &self.templates.tot_vote,
            &[("story", &Self::story(p)), ("observations", &observations)],
        )
    }

    /// `observations` fills the line(s) just before the answer-format
    /// example; pass `""` to leave that line blank.
    pub fn tot_answer_prompt(&self, p: &ProblemInstance, observations: &str) -> String {
        let choices = Self::choices_block(p);
        render(
            &self.templates.tot_answer,
            &[
                ("story", &Self::story(p)),
                ("question", &p.question),
                ("choices", &choices),
                ("observations", observations),
            ],
        )
    }

    pub fn struct_represent_prompt(&self, p: &ProblemInstance, format: &str) -> String {
        render(
            &self.templates.struct_represent,
            &[("story", &Self::story(p)), ("format", format)],
        )
    }

    pub fn struct_answer_prompt(
        &self,
        p: &ProblemInstance,
        format: &str,
        representation: &str,
    ) -> String {
        let repr = representation.trim();
        let repr = if repr.is_empty() {
            String::new()
        } else {
            format!("{repr}\n")
        };
        let choices = Self::choices_block(p);
        render(
            &self.templates.struct_answer,
            &[
                ("story", &Self::story(p)),
                ("format", format),
                ("representation", &repr),
                ("question", &p.question),
                ("choices", &choices),
            ],
        )
    }

    pub fn run<B: ChatBackend + ?Sized>(
        &self,
        p: &ProblemInstance,
        cfg: &StrategyConfig,
        backend: &B,
    ) -> Result<(Transcript, ExtractedAnswer), StrategyError> {
        match cfg.strategy {
            Strategy::Dwm => self.dwm_run(p, cfg, backend),
            Strategy::Cot => self.cot_run(p, cfg, backend),
            Strategy::Tot => self.tot_run(p, cfg, backend),
            Strategy::StructJson | Strategy::StructYaml => self.struct_run(p, cfg, backend),
        }
    }

    fn start<'a, B: ChatBackend + ?Sized>(
        p: &ProblemInstance,
        cfg: &'a StrategyConfig,
        backend: &'a B,
        expected: &[Strategy],
    ) -> Result<Session<'a, B>, StrategyError> {
        if !expected.contains(&cfg.strategy) {
            return Err(StrategyError::InvalidConfig(format!(
                "strategy {} passed to the {} runner",
                cfg.strategy, expected[0]
            )));
        }
        cfg.validate()?;
        if p.sentences.is_empty() {
            return Err(StrategyError::EmptyProblem);
        }
        Ok(Session {
            backend,
            cfg,
            transcript: Transcript::new(cfg.strategy),
        })
    }

    /// Chunk plan for a DWM run: explicit cuts when configured, otherwise
    /// the uniform split.
    pub fn plan(p: &ProblemInstance, cfg: &StrategyConfig) -> Result<ChunkPlan, StrategyError> {
        match &cfg.cuts {
            Some(cuts) => ChunkPlan::after(p.sentences.len(), cuts),
            None => split_sentences(p, cfg.splits),
        }
    }

    /// Feeds the story chunk by chunk, asking for a state description after
    /// each, then asks the question over the accumulated conversation.
    pub fn dwm_run<B: ChatBackend + ?Sized>(
        &self,
        p: &ProblemInstance,
        cfg: &StrategyConfig,
        backend: &B,
    ) -> Result<(Transcript, ExtractedAnswer), StrategyError> {
        let mut s = Self::start(p, cfg, backend, &[Strategy::Dwm])?;
        let plan = Self::plan(p, cfg)?;
        let last = plan.len() - 1;
        s.transcript.push(
            TurnRole::User,
            TurnTag::PreambleX,
            self.templates.dwm_preamble.clone(),
        );
        let mut final_text = None;
        for (i, range) in plan.boundaries.iter().enumerate() {
            s.transcript.push(
                TurnRole::User,
                TurnTag::ChunkP,
                render_chunk(p, range.clone()),
            );
            s.transcript.push(
                TurnRole::User,
                TurnTag::InterleaveW,
                self.templates.dwm_interleave.clone(),
            );
            if i == last && cfg.fuse_final {
                s.transcript
                    .push(TurnRole::User, TurnTag::FinalY, self.final_query(p));
            }
            let text = s.converse(TurnTag::AnswerA)?;
            if i == last && cfg.fuse_final {
                final_text = Some(text);
            }
        }
        let final_text = match final_text {
            Some(t) => t,
            None => {
                s.transcript
                    .push(TurnRole::User, TurnTag::FinalY, self.final_query(p));
                s.converse(TurnTag::AnswerA)?
            }
        };
        Ok((s.transcript, extract_answer(&final_text)))
    }

    pub fn cot_run<B: ChatBackend + ?Sized>(
        &self,
        p: &ProblemInstance,
        cfg: &StrategyConfig,
        backend: &B,
    ) -> Result<(Transcript, ExtractedAnswer), StrategyError> {
        let mut s = Self::start(p, cfg, backend, &[Strategy::Cot])?;
        s.transcript.push(
            TurnRole::User,
            TurnTag::PreambleX,
            self.templates.cot_preamble.clone(),
        );
        s.transcript
            .push(TurnRole::User, TurnTag::ChunkP, Self::story(p));
        s.transcript
            .push(TurnRole::User, TurnTag::FinalY, self.final_query(p));
        let text = s.converse(TurnTag::AnswerA)?;
        Ok((s.transcript, extract_answer(&text)))
    }

    /// Propose, vote, answer. Voter `i` uses seed `seed + i` so sampled
    /// votes differ but stay reproducible.
    pub fn tot_run<B: ChatBackend + ?Sized>(
        &self,
        p: &ProblemInstance,
        cfg: &StrategyConfig,
        backend: &B,
    ) -> Result<(Transcript, ExtractedAnswer), StrategyError> {
        let mut s = Self::start(p, cfg, backend, &[Strategy::Tot])?;
        let proposals = s.single(self.tot_propose_prompt(p), cfg.seed)?;
        let candidates = parse_candidates(&proposals);

        let mut votes = Vec::new();
        if !candidates.is_empty() {
            let prompt = self.tot_vote_prompt(p, &candidates);
            for i in 0..cfg.tot_experts {
                let seed = cfg.seed.map(|s| s.wrapping_add(i as u64));
                let reply = s.single(prompt.clone(), seed)?;
                match parse_vote(&reply, candidates.len()) {
                    Some(v) => votes.push(v),
                    None => log::debug!("{}: voter {} gave no usable choice", p.id, i + 1),
                }
            }
        }

        let observations = match tally_votes(&votes, candidates.len()) {
            Some(best) => format!("Best observation: {}", candidates[best - 1]),
            None if candidates.is_empty() => String::new(),
            None => {
                let lines: Vec<String> = candidates
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("Choice {}: {}", i + 1, c))
                    .collect();
                format!("Possible observations:\n{}", lines.join("\n"))
            }
        };
        let answer = s.single(self.tot_answer_prompt(p, &observations), cfg.seed)?;
        Ok((s.transcript, extract_answer(&answer)))
    }

    pub fn struct_run<B: ChatBackend + ?Sized>(
        &self,
        p: &ProblemInstance,
        cfg: &StrategyConfig,
        backend: &B,
    ) -> Result<(Transcript, ExtractedAnswer), StrategyError> {
        let mut s = Self::start(
            p,
            cfg,
            backend,
            &[Strategy::StructJson, Strategy::StructYaml],
        )?;
        let format = cfg.strategy.format_word().expect("structured strategy");
        let repr = s.single(self.struct_represent_prompt(p, format), cfg.seed)?;
        let answer = s.single(self.struct_answer_prompt(p, format, &repr), cfg.seed)?;
        Ok((s.transcript, extract_answer(&answer)))
    }
}

/// `A`, `B`, ... `Z`, then `AA`, `AB`, ...
pub fn choice_letter(i: usize) -> String {
    let mut n = i + 1;
    let mut out = Vec::new();
    while n > 0 {
        n -= 1;
        out.push(b'A' + (n % 26) as u8);
        n /= 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// One candidate per non-empty line with list markers removed, at most
/// [`MAX_CANDIDATES`].
pub fn parse_candidates(text: &str) -> Vec<String> {
    text.lines()
        .map(strip_list_marker)
        .filter(|l| !l.is_empty())
        .take(MAX_CANDIDATES)
        .map(str::to_string)
        .collect()
}

fn strip_list_marker(line: &str) -> &str {
    let l = line.trim();
    let l = l.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = l.len() - l.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &l[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')', ':']) {
            return r.trim();
        }
    }
    l
}

/// Reads the id after the last "The best choice is" (any case). Returns
/// `None` when the phrase is missing or the id is not in `1..=n`.
pub fn parse_vote(text: &str, n: usize) -> Option<usize> {
    const PHRASE: &str = "the best choice is";
    let lower = text.to_ascii_lowercase();
    let at = lower.rfind(PHRASE)? + PHRASE.len();
    let rest = text[at..].trim_start_matches(|c: char| {
        c.is_whitespace() || matches!(c, '{' | '"' | '\'' | ':' | '*' | '(' | '[' | '#')
    });
    let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
    let id: usize = digits.parse().ok()?;
    (1..=n).contains(&id).then_some(id)
}

/// Majority vote over 1-based candidate ids; ties go to the lowest id.
pub fn tally_votes(votes: &[usize], n: usize) -> Option<usize> {
    let mut counts = vec![0usize; n + 1];
    for &v in votes {
        if (1..=n).contains(&v) {
            counts[v] += 1;
        }
    }
    let best = *counts.iter().max()?;
    if best == 0 {
        return None;
    }
    counts.iter().position(|&c| c == best)
}
