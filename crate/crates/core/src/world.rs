//! Synthetic Sally-Anne / ToMi style stories backed by an exact world and
//! belief state machine.
//!
//! Every action is one sentence, so time `t` in a [`WorldTrace`] is the
//! state after sentence `t` and `states[0]` is the all-`⊥` initial state.
//!
//! Observation rule: a place or move of the object updates a belief with
//! owner chain `[a1, .., ak]` iff every agent of the chain is in the room.
//! Absent agents keep their last observed value, and re-entering a room
//! does not reveal container contents.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::types::{
    render_belief, AnnotationSet, Benchmark, ObjectKind, ProblemInstance, StateDescription,
    StateEventMark, TrackedObject, INITIAL_STATE,
};

struct Vocabulary {
    names: Vec<&'static str>,
    rooms: Vec<&'static str>,
    objects: Vec<&'static str>,
    containers: Vec<&'static str>,
    distractors: Vec<&'static str>,
    attitudes: Vec<&'static str>,
}

fn vocabulary() -> &'static Vocabulary {
    static VOCAB: OnceLock<Vocabulary> = OnceLock::new();
    fn lines(s: &'static str) -> Vec<&'static str> {
        s.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
    }
    VOCAB.get_or_init(|| Vocabulary {
        names: lines(include_str!("../data/names.txt")),
        rooms: lines(include_str!("../data/rooms.txt")),
        objects: lines(include_str!("../data/objects.txt")),
        containers: lines(include_str!("../data/containers.txt")),
        distractors: lines(include_str!("../data/distractors.txt")),
        attitudes: lines(include_str!("../data/attitudes.txt")),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum WorldAction {
    Enter {
        agent: String,
        room: String,
    },
    Exit {
        agent: String,
        room: String,
    },
    Place {
        object: String,
        container: String,
    },
    Move {
        agent: String,
        object: String,
        from: String,
        to: String,
    },
    /// An irrelevant statement such as "Isabella hates the onion";
    /// `subject` is the distractor object it establishes.
    Distractor {
        agent: String,
        statement: String,
        subject: String,
    },
}

impl WorldAction {
    /// The ToMi-style sentence for this action.
    pub fn sentence(&self) -> String {
        match self {
            WorldAction::Enter { agent, room } => format!("{agent} entered the {room}."),
            WorldAction::Exit { agent, room } => format!("{agent} exited the {room}."),
            WorldAction::Place { object, container } => {
                format!("The {object} is in the {container}.")
            }
            WorldAction::Move {
                agent, object, to, ..
            } => format!("{agent} moved the {object} to the {to}."),
            WorldAction::Distractor {
                agent, statement, ..
            } => format!("{agent} {statement}"),
        }
    }
}

/// The configuration of one tracked object at one time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateValue {
    Unknown,
    /// In (or believed to be in) a container.
    At(String),
    /// A belief frozen at its last observed container while the world has
    /// moved on unseen. Only produced with `exit_counts_as_event`.
    Stale(String),
    /// Established by a distractor statement.
    Statement(String),
}

impl StateValue {
    pub fn container(&self) -> Option<&str> {
        match self {
            StateValue::At(c) | StateValue::Stale(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for StateValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateValue::Unknown => f.write_str(INITIAL_STATE),
            StateValue::At(c) => f.write_str(c),
            StateValue::Stale(c) => write!(f, "{c}|stale"),
            StateValue::Statement(s) => f.write_str(s),
        }
    }
}

/// Which tracked object the story's question asks about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub object_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),
    #[error("action {time} is invalid: {reason}")]
    InvalidAction { time: usize, reason: String },
    #[error("question does not target a locatable object: `{0}`")]
    UnknownQuestion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldParams {
    pub n_agents: usize,
    pub n_distractors: usize,
    pub n_moves: usize,
    /// Highest belief order tracked, in `0..=2`.
    pub k_max: u32,
    /// Mark the exit that leaves a belief behind an unseen change as a
    /// state event for that belief.
    pub exit_counts_as_event: bool,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            n_agents: 3,
            n_distractors: 2,
            n_moves: 1,
            k_max: 1,
            exit_counts_as_event: false,
        }
    }
}

/// The complete state history of a story.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldTrace {
    pub problem_id: String,
    pub actions: Vec<WorldAction>,
    pub objects: Vec<TrackedObject>,
    /// `states[t][i]` is the value of `objects[i]` after `t` actions.
    pub states: Vec<Vec<StateValue>>,
    pub question: Question,
}

impl WorldTrace {
    fn index_of(&self, object_id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.object_id == object_id)
    }

    pub fn value(&self, time: usize, object_id: &str) -> Option<&StateValue> {
        let i = self.index_of(object_id)?;
        self.states.get(time).map(|row| &row[i])
    }

    /// Canonical rendering of an object's value; beliefs render as
    /// `believes(<chain>, <object>=<value>)`.
    pub fn rendered(&self, time: usize, object_id: &str) -> Option<String> {
        let i = self.index_of(object_id)?;
        let value = self.states.get(time)?.get(i)?;
        let obj = &self.objects[i];
        Some(match (obj.kind, value) {
            (_, StateValue::Unknown) => INITIAL_STATE.to_string(),
            (ObjectKind::Belief, v) => render_belief(
                &obj.owner_chain,
                belief_subject(&obj.object_id),
                &v.to_string(),
            ),
            (ObjectKind::Physical, v) => v.to_string(),
        })
    }

    pub fn state_descriptions(&self, object_id: &str) -> Vec<StateDescription> {
        (0..self.states.len())
            .filter_map(|t| {
                self.rendered(t, object_id).map(|value| StateDescription {
                    object_id: object_id.to_string(),
                    time: t,
                    value,
                    prefix_end: t,
                })
            })
            .collect()
    }
}

fn belief_subject(object_id: &str) -> &str {
    object_id.rsplit(':').next().unwrap_or(object_id)
}

fn slug(name: &str) -> String {
    name.to_lowercase()
}

pub fn belief_id(owner_chain: &[String], object: &str) -> String {
    format!("belief:{}:{}", owner_chain.join(">"), object)
}

/// Replays a scripted list of actions into an exact trace.
///
/// Tracked objects are: every placed object, every distractor subject, and
/// (for `k_max >= 1`) every belief chain of distinct agents up to `k_max`
/// about each placed object. Agent names are lowercased in object ids.
pub fn replay(
    problem_id: &str,
    actions: &[WorldAction],
    question: Question,
    k_max: u32,
    exit_counts_as_event: bool,
) -> Result<WorldTrace, WorldError> {
    let mut agents: Vec<String> = Vec::new();
    let mut physical: Vec<String> = Vec::new();
    let mut subjects: Vec<String> = Vec::new();
    let mut room: Option<&str> = None;
    for (t, a) in actions.iter().enumerate() {
        let mut note_agent = |agent: &str| {
            let s = slug(agent);
            if !agents.contains(&s) {
                agents.push(s);
            }
        };
        match a {
            WorldAction::Enter { agent, room: r } | WorldAction::Exit { agent, room: r } => {
                note_agent(agent);
                match room {
                    None => room = Some(r),
                    Some(existing) if existing != r => {
                        return Err(WorldError::InvalidAction {
                            time: t + 1,
                            reason: format!(
                                "stories use a single room, saw `{r}` after `{existing}`"
                            ),
                        })
                    }
                    _ => {}
                }
            }
            WorldAction::Place { object, .. } => {
                if !physical.contains(object) {
                    physical.push(object.clone());
                }
            }
            WorldAction::Move { agent, object, .. } => {
                note_agent(agent);
                if !physical.contains(object) {
                    physical.push(object.clone());
                }
            }
            WorldAction::Distractor { agent, subject, .. } => {
                note_agent(agent);
                if !subjects.contains(subject) {
                    subjects.push(subject.clone());
                }
            }
        }
    }

    let mut objects: Vec<TrackedObject> = Vec::new();
    // (object index, owning physical object, owner chain) for beliefs
    let mut beliefs: Vec<(usize, String, Vec<String>)> = Vec::new();
    for obj in &physical {
        objects.push(TrackedObject::physical(
            obj,
            format!("location of the {obj}"),
        ));
    }
    for obj in &physical {
        for chain in belief_chains(&agents, k_max) {
            let id = belief_id(&chain, obj);
            let label = format!("{}'s belief about the {obj}", chain.join(" > "));
            beliefs.push((objects.len(), obj.clone(), chain.clone()));
            objects.push(TrackedObject::belief(id, chain, label));
        }
    }
    for s in &subjects {
        objects.push(TrackedObject::physical(s, format!("the {s}")));
    }
    let index = |id: &str| objects.iter().position(|o| o.object_id == id).unwrap();

    let mut states = vec![vec![StateValue::Unknown; objects.len()]];
    // presence[t] = agents in the room after t actions
    let mut presence: Vec<BTreeSet<String>> = vec![BTreeSet::new()];
    // times at which a placed object changed, with the object name
    let mut changes: Vec<(usize, String)> = Vec::new();

    for (i, action) in actions.iter().enumerate() {
        let t = i + 1;
        let mut row = states[i].clone();
        let mut present = presence[i].clone();
        let invalid = |reason: String| WorldError::InvalidAction { time: t, reason };
        match action {
            WorldAction::Enter { agent, .. } => {
                if !present.insert(slug(agent)) {
                    return Err(invalid(format!("{agent} is already in the room")));
                }
            }
            WorldAction::Exit { agent, .. } => {
                if !present.remove(&slug(agent)) {
                    return Err(invalid(format!("{agent} is not in the room")));
                }
            }
            WorldAction::Place { object, container } => {
                let oi = index(object);
                if row[oi] != StateValue::Unknown {
                    return Err(invalid(format!("the {object} was already placed")));
                }
                row[oi] = StateValue::At(container.clone());
                changes.push((t, object.clone()));
            }
            WorldAction::Move {
                agent,
                object,
                from,
                to,
            } => {
                if !present.contains(&slug(agent)) {
                    return Err(invalid(format!(
                        "{agent} must be in the room to move the {object}"
                    )));
                }
                let oi = index(object);
                if row[oi] != StateValue::At(from.clone()) {
                    return Err(invalid(format!(
                        "the {object} is not in the {from} (it is {})",
                        row[oi]
                    )));
                }
                if from == to {
                    return Err(invalid(format!(
                        "move of the {object} does not change its container"
                    )));
                }
                row[oi] = StateValue::At(to.clone());
                changes.push((t, object.clone()));
            }
            WorldAction::Distractor {
                agent,
                statement,
                subject,
            } => {
                let verb = statement.split_whitespace().next().unwrap_or(statement);
                row[index(subject)] = StateValue::Statement(format!("{} {verb}", slug(agent)));
            }
        }
        if let WorldAction::Place { object, .. } | WorldAction::Move { object, .. } = action {
            let new = row[index(object)].clone();
            for (bi, owner, chain) in &beliefs {
                if owner == object && chain.iter().all(|a| present.contains(a)) {
                    row[*bi] = new.clone();
                }
            }
        }
        states.push(row);
        presence.push(present);
    }

    if exit_counts_as_event {
        mark_stale(&mut states, &presence, &beliefs, &changes);
    }

    Ok(WorldTrace {
        problem_id: problem_id.to_string(),
        actions: actions.to_vec(),
        objects,
        states,
        question,
    })
}

fn belief_chains(agents: &[String], k_max: u32) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<String>> = vec![Vec::new()];
    for _ in 0..k_max {
        let mut next = Vec::new();
        for chain in &frontier {
            for a in agents {
                if chain.last() != Some(a) && !chain.contains(a) {
                    let mut c = chain.clone();
                    c.push(a.clone());
                    next.push(c);
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// For every unseen change that leaves a live belief behind, mark the belief
/// stale from the exit that broke its owner chain until its next update.
fn mark_stale(
    states: &mut [Vec<StateValue>],
    presence: &[BTreeSet<String>],
    beliefs: &[(usize, String, Vec<String>)],
    changes: &[(usize, String)],
) {
    let full = |t: usize, chain: &[String]| chain.iter().all(|a| presence[t].contains(a));
    for (bi, owner, chain) in beliefs {
        for (tc, obj) in changes {
            if obj != owner || full(tc - 1, chain) {
                continue;
            }
            let before = states[tc - 1][*bi].clone();
            let StateValue::At(container) = before else {
                continue;
            };
            // chain broke at the latest exit before the unseen change
            let Some(tx) = (1..*tc)
                .rev()
                .find(|&t| full(t - 1, chain) && !full(t, chain))
            else {
                continue;
            };
            for row in states[tx..].iter_mut() {
                if row[*bi] != StateValue::At(container.clone()) {
                    break;
                }
                row[*bi] = StateValue::Stale(container.clone());
            }
        }
    }
}

/// Marks every sentence `t` at which `states[t-1] != states[t]`, for every
/// tracked object.
pub fn derive_annotation(trace: &WorldTrace) -> AnnotationSet {
    let mut events = Vec::new();
    for (i, obj) in trace.objects.iter().enumerate() {
        for t in 1..trace.states.len() {
            if trace.states[t - 1][i] != trace.states[t][i] {
                events.push(StateEventMark::new(&obj.object_id, t));
            }
        }
    }
    AnnotationSet {
        problem_id: trace.problem_id.clone(),
        objects: trace.objects.clone(),
        events,
        question_object_id: trace.question.object_id.clone(),
    }
}

/// The final container of the questioned object or belief.
pub fn gold_answer(trace: &WorldTrace, question: &Question) -> Result<String, WorldError> {
    let last = trace.states.len() - 1;
    trace
        .value(last, &question.object_id)
        .and_then(StateValue::container)
        .map(str::to_string)
        .ok_or_else(|| WorldError::UnknownQuestion(question.object_id.clone()))
}

/// A generated story with its exact trace.
#[derive(Debug, Clone)]
pub struct GeneratedStory {
    pub problem: ProblemInstance,
    pub trace: WorldTrace,
}

/// Generates a reproducible false-belief story.
///
/// Structure: every agent enters, the object is placed, then each move is
/// made by a present agent; before the final move at least one other agent
/// has left the room. Agents who leave never return, so a present agent's
/// first-order belief always matches the object. Distractor statements are
/// spliced in at random positions.
pub fn generate(seed: u64, params: WorldParams) -> Result<GeneratedStory, WorldError> {
    let vocab = vocabulary();
    let infeasible = |m: String| Err(WorldError::InfeasibleParams(m));
    if params.n_agents < 2 {
        return infeasible(format!("need at least 2 agents, got {}", params.n_agents));
    }
    if params.n_agents > vocab.names.len() {
        return infeasible(format!("at most {} agents available", vocab.names.len()));
    }
    if params.n_moves < 1 {
        return infeasible("need at least one move".into());
    }
    if params.k_max > 2 {
        return infeasible(format!("k_max must be 0, 1 or 2, got {}", params.k_max));
    }
    if params.n_distractors > vocab.distractors.len() {
        return infeasible(format!(
            "at most {} distractors available",
            vocab.distractors.len()
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let agents: Vec<&str> = vocab
        .names
        .choose_multiple(&mut rng, params.n_agents)
        .copied()
        .collect();
    let room = *vocab.rooms.choose(&mut rng).unwrap();
    let object = *vocab.objects.choose(&mut rng).unwrap();
    let pool_size = (params.n_moves + 1).clamp(2, vocab.containers.len());
    let containers: Vec<&str> = vocab
        .containers
        .choose_multiple(&mut rng, pool_size)
        .copied()
        .collect();

    let mut actions = Vec::new();
    let mut present: Vec<&str> = Vec::new();
    let mut order = agents.clone();
    order.shuffle(&mut rng);
    for a in order {
        actions.push(WorldAction::Enter {
            agent: a.into(),
            room: room.into(),
        });
        present.push(a);
    }
    let mut current = containers[0];
    actions.push(WorldAction::Place {
        object: object.into(),
        container: current.into(),
    });

    let mut someone_left = false;
    for m in 0..params.n_moves {
        let mover = *present.choose(&mut rng).unwrap();
        let last = m + 1 == params.n_moves;
        let others: Vec<&str> = present.iter().copied().filter(|&a| a != mover).collect();
        if !others.is_empty() && ((last && !someone_left) || rng.random_bool(0.5)) {
            let leaver = *others.choose(&mut rng).unwrap();
            actions.push(WorldAction::Exit {
                agent: leaver.into(),
                room: room.into(),
            });
            present.retain(|&a| a != leaver);
            someone_left = true;
        }
        let next = **containers
            .iter()
            .filter(|&&c| c != current)
            .collect::<Vec<_>>()
            .choose(&mut rng)
            .unwrap();
        actions.push(WorldAction::Move {
            agent: mover.into(),
            object: object.into(),
            from: current.into(),
            to: next.into(),
        });
        current = next;
    }
    if rng.random_bool(0.5) {
        let leaver = *present.choose(&mut rng).unwrap();
        actions.push(WorldAction::Exit {
            agent: leaver.into(),
            room: room.into(),
        });
    }

    let subjects: Vec<&str> = vocab
        .distractors
        .choose_multiple(&mut rng, params.n_distractors)
        .copied()
        .collect();
    for subject in subjects {
        let agent = *agents.choose(&mut rng).unwrap();
        let attitude = *vocab.attitudes.choose(&mut rng).unwrap();
        let at = rng.random_range(0..=actions.len());
        actions.insert(
            at,
            WorldAction::Distractor {
                agent: agent.into(),
                statement: format!("{attitude} the {subject}"),
                subject: subject.into(),
            },
        );
    }

    let problem_id = format!("synthetic-{seed}");
    let placeholder = Question {
        object_id: object.into(),
        text: String::new(),
    };
    let mut trace = replay(
        &problem_id,
        &actions,
        placeholder,
        params.k_max,
        params.exit_counts_as_event,
    )?;

    let last = trace.states.len() - 1;
    let candidates: Vec<&TrackedObject> = trace
        .objects
        .iter()
        .enumerate()
        .filter(|(i, o)| {
            (o.kind == ObjectKind::Belief || o.object_id == object)
                && trace.states[last][*i].container().is_some()
        })
        .map(|(_, o)| o)
        .collect();
    let target = *candidates.choose(&mut rng).unwrap();
    let display = |s: &str| {
        agents
            .iter()
            .find(|a| slug(a) == s)
            .map(|a| a.to_string())
            .unwrap_or_else(|| s.to_string())
    };
    let text = match target.owner_chain.as_slice() {
        [] => format!("Where is the {object} really?"),
        [a] => format!("Where does {} think that the {object} is?", display(a)),
        [a, b, ..] => format!(
            "Where does {} think that {} searches for the {object}?",
            display(a),
            display(b)
        ),
    };
    trace.question = Question {
        object_id: target.object_id.clone(),
        text,
    };
    let gold = gold_answer(&trace, &trace.question)?;

    let mut problem = ProblemInstance::new(
        problem_id,
        Benchmark::Synthetic,
        trace.actions.iter().map(WorldAction::sentence),
        trace.question.text.clone(),
        gold,
    );
    problem.metadata.insert(
        "question_object_id".into(),
        trace.question.object_id.clone(),
    );
    problem.metadata.insert("seed".into(), seed.to_string());
    Ok(GeneratedStory { problem, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::statefulness;

    fn enter(a: &str) -> WorldAction {
        WorldAction::Enter {
            agent: a.into(),
            room: "kitchen".into(),
        }
    }
    fn exit(a: &str) -> WorldAction {
        WorldAction::Exit {
            agent: a.into(),
            room: "kitchen".into(),
        }
    }

    /// Bob sees the apple placed, leaves, then Alice moves it.
    fn sally_anne() -> Vec<WorldAction> {
        vec![
            enter("Bob"),
            WorldAction::Place {
                object: "apple".into(),
                container: "basket".into(),
            },
            enter("Alice"),
            exit("Bob"),
            WorldAction::Move {
                agent: "Alice".into(),
                object: "apple".into(),
                from: "basket".into(),
                to: "box".into(),
            },
        ]
    }

    fn question(id: &str) -> Question {
        Question {
            object_id: id.into(),
            text: String::new(),
        }
    }

    fn events_of(a: &AnnotationSet, id: &str) -> Vec<usize> {
        a.events
            .iter()
            .filter(|e| e.object_id == id)
            .map(|e| e.boundary_after_sentence)
            .collect()
    }

    #[test]
    fn place_then_move_gives_two_physical_events() {
        let trace = replay("sa", &sally_anne(), question("apple"), 1, false).unwrap();
        let a = derive_annotation(&trace);
        assert_eq!(events_of(&a, "apple"), vec![2, 5]);
        assert_eq!(gold_answer(&trace, &question("apple")).unwrap(), "box");
    }

    #[test]
    fn absent_agent_keeps_the_establishing_event_only() {
        let bob = belief_id(&["bob".into()], "apple");
        let trace = replay("sa", &sally_anne(), question(&bob), 1, false).unwrap();
        let a = derive_annotation(&trace);
        assert_eq!(events_of(&a, &bob), vec![2]);
        assert_eq!(statefulness(&a, &bob).unwrap(), 1);
        assert_eq!(gold_answer(&trace, &question(&bob)).unwrap(), "basket");
    }

    #[test]
    fn exit_flag_turns_the_exit_into_an_event() {
        let bob = belief_id(&["bob".into()], "apple");
        let trace = replay("sa", &sally_anne(), question(&bob), 1, true).unwrap();
        let a = derive_annotation(&trace);
        assert_eq!(events_of(&a, &bob), vec![2, 4]);
        assert_eq!(statefulness(&a, &bob).unwrap(), 2);
        // the stale belief still answers with the last observed container
        assert_eq!(gold_answer(&trace, &question(&bob)).unwrap(), "basket");
        assert_eq!(
            trace.rendered(5, &bob).unwrap(),
            "believes(bob, apple=basket|stale)"
        );
    }

    #[test]
    fn exit_without_later_change_is_not_an_event() {
        let mut actions = sally_anne();
        actions.pop();
        let bob = belief_id(&["bob".into()], "apple");
        let trace = replay("sa", &actions, question(&bob), 1, true).unwrap();
        assert_eq!(events_of(&derive_annotation(&trace), &bob), vec![2]);
    }

    #[test]
    fn present_agent_belief_mirrors_the_object() {
        let alice = belief_id(&["alice".into()], "apple");
        let mut actions = sally_anne();
        actions.insert(0, enter("Alice"));
        actions.remove(3);
        let trace = replay("sa", &actions, question(&alice), 1, false).unwrap();
        let a = derive_annotation(&trace);
        assert_eq!(events_of(&a, &alice), events_of(&a, "apple"));
    }

    #[test]
    fn second_order_belief_needs_the_whole_chain() {
        let bob_alice = belief_id(&["bob".into(), "alice".into()], "apple");
        let trace = replay("sa", &sally_anne(), question(&bob_alice), 2, false).unwrap();
        // Alice was not in the room for the placement, Bob was not there for the move
        assert_eq!(trace.value(5, &bob_alice), Some(&StateValue::Unknown));
    }

    #[test]
    fn invalid_moves_are_rejected() {
        let mut actions = sally_anne();
        actions[4] = WorldAction::Move {
            agent: "Bob".into(),
            object: "apple".into(),
            from: "basket".into(),
            to: "box".into(),
        };
        assert!(matches!(
            replay("sa", &actions, question("apple"), 1, false),
            Err(WorldError::InvalidAction { time: 5, .. })
        ));
        let mut actions = sally_anne();
        actions.push(exit("Bob"));
        assert!(replay("sa", &actions, question("apple"), 1, false).is_err());
    }

    #[test]
    fn distractor_establishes_its_subject() {
        let mut actions = sally_anne();
        actions.insert(
            1,
            WorldAction::Distractor {
                agent: "Isabella".into(),
                statement: "hates the onion".into(),
                subject: "onion".into(),
            },
        );
        let trace = replay("sa", &actions, question("apple"), 1, false).unwrap();
        assert_eq!(trace.actions[1].sentence(), "Isabella hates the onion");
        assert_eq!(events_of(&derive_annotation(&trace), "onion"), vec![2]);
    }

    #[test]
    fn state_descriptions_start_at_bottom() {
        let trace = replay("sa", &sally_anne(), question("apple"), 0, false).unwrap();
        let d = trace.state_descriptions("apple");
        assert_eq!(d[0], StateDescription::initial("apple"));
        assert_eq!(d.len(), 6);
        assert_eq!(d[5].value, "box");
        assert_eq!(d[5].prefix_end, 5);
    }

    #[test]
    fn generation_is_deterministic() {
        let params = WorldParams {
            n_agents: 2,
            n_distractors: 0,
            n_moves: 1,
            k_max: 1,
            exit_counts_as_event: false,
        };
        let a = generate(1, params).unwrap();
        let b = generate(1, params).unwrap();
        assert_eq!(a.problem, b.problem);
        assert_eq!(a.trace, b.trace);
        assert!(a.problem.len() <= 10);
        assert!(crate::types::validate_problem(&a.problem).is_empty());
    }

    #[test]
    fn infeasible_params_are_rejected() {
        let base = WorldParams::default();
        for bad in [
            WorldParams {
                n_agents: 1,
                ..base
            },
            WorldParams { n_moves: 0, ..base },
            WorldParams { k_max: 3, ..base },
            WorldParams {
                n_agents: 500,
                ..base
            },
            WorldParams {
                n_distractors: 500,
                ..base
            },
        ] {
            assert!(matches!(
                generate(0, bad),
                Err(WorldError::InfeasibleParams(_))
            ));
        }
    }

    #[test]
    fn generated_physical_objects_are_conserved() {
        for seed in 0..200 {
            let g = generate(
                seed,
                WorldParams {
                    n_moves: 3,
                    ..Default::default()
                },
            )
            .unwrap();
            let obj = g.trace.objects[0].object_id.clone();
            let placed_at = g
                .trace
                .actions
                .iter()
                .position(|a| matches!(a, WorldAction::Place { .. }))
                .unwrap()
                + 1;
            for t in placed_at..g.trace.states.len() {
                assert!(matches!(g.trace.value(t, &obj), Some(StateValue::At(_))));
            }
        }
    }
}
