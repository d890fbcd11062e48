//! Deterministic stand-in for a model.
//!
//! A policy is an ordered list of rules; the first rule whose matcher accepts
//! the request supplies the reply. Replies are canned text or a named
//! responder that reads the visible transcript and computes an answer.
//! The backend holds no mutable state: the step index is the number of model
//! turns already in the request, so the same transcript always gets the same
//! reply and one instance can serve many episodes at once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{validate, BackendError, ChatBackend, ChatRequest, Completion, Role, Usage};
use crate::code::CODE_MARKER;
use crate::dsl::random_query;
use crate::graph::{ClassId, NodeId};
use crate::prompt::PROMPT_CLOSING;
use crate::tokens::CountingMode;
use crate::tool::{parse_action, Action, ToolVariant, TOOL_MARKER, TOOL_PLUS_MARKER};

/// Regex matcher that (de)serializes as its source string.
#[derive(Clone)]
pub struct Pattern(Regex);

impl fmt::Debug for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pattern({:?})", self.0.as_str())
    }
}

impl TryFrom<String> for Pattern {
    type Error = regex::Error;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Regex::new(&s).map(Pattern)
    }
}

impl From<Pattern> for String {
    fn from(p: Pattern) -> String {
        p.0.as_str().to_string()
    }
}

impl Serialize for Pattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.0.as_str())
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Pattern::try_from(s).map_err(serde::de::Error::custom)
    }
}

/// When a rule fires. `contains` and `pattern` look at the latest message.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Step(usize),
    Contains(String),
    Pattern(Pattern),
    Always,
}

impl Matcher {
    fn matches(&self, request: &ChatRequest) -> bool {
        match self {
            Matcher::Step(n) => request.step() == *n,
            Matcher::Contains(s) => request.last_text().contains(s.as_str()),
            Matcher::Pattern(p) => p.0.is_match(request.last_text()),
            Matcher::Always => true,
        }
    }
}

/// Computed replies over the visible transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Responder {
    /// Looks up the labels of the target's 1-hop neighbors through whatever
    /// the mode offers and answers their most common known class.
    OneHopModalLabel,
    /// Answers a uniformly random class.
    RandomAnswer,
    /// Random actions or queries over ids `0..node_bound`; occasionally
    /// answers or emits garbage.
    RandomAction { node_bound: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Reply {
    Text(String),
    Responder { responder: Responder },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rule {
    #[serde(default = "always")]
    pub when: Matcher,
    pub reply: Reply,
}

fn always() -> Matcher {
    Matcher::Always
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    #[serde(default)]
    pub rules: Vec<Rule>,
    #[serde(default)]
    pub default: Option<Reply>,
    /// Mixed into the randomness of random responders.
    #[serde(default)]
    pub seed: u64,
}

impl ScriptedPolicy {
    /// Reply `replies[i]` at step `i`, nothing afterwards.
    pub fn sequence<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self {
            rules: replies
                .into_iter()
                .enumerate()
                .map(|(i, r)| Rule {
                    when: Matcher::Step(i),
                    reply: Reply::Text(r.into()),
                })
                .collect(),
            ..Self::default()
        }
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        Self {
            default: Some(Reply::Text(text.into())),
            ..Self::default()
        }
    }

    pub fn responder(responder: Responder) -> Self {
        Self {
            default: Some(Reply::Responder { responder }),
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        serde_json::from_str(text).map_err(|e| BackendError::InvalidPolicy(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidPolicy(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn reply(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let reply = self
            .rules
            .iter()
            .find(|r| r.when.matches(request))
            .map(|r| &r.reply)
            .or(self.default.as_ref())
            .ok_or(BackendError::PolicyExhausted {
                step: request.step(),
            })?;
        Ok(match reply {
            Reply::Text(t) => t.clone(),
            Reply::Responder { responder } => respond(responder, request, self.seed),
        })
    }
}

pub struct ScriptedBackend {
    policy: ScriptedPolicy,
    counting: CountingMode,
}

impl ScriptedBackend {
    pub fn new(policy: ScriptedPolicy) -> Self {
        Self {
            policy,
            counting: CountingMode::default(),
        }
    }

    pub fn policy(&self) -> &ScriptedPolicy {
        &self.policy
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Completion, BackendError> {
        validate(request)?;
        let text = self.policy.reply(request)?;
        let usage = Usage {
            tokens_in: request
                .messages
                .iter()
                .map(|m| self.counting.count(&m.content))
                .sum(),
            tokens_out: self.counting.count(&text),
        };
        Ok(Completion { text, usage })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Prompt,
    Tool(ToolVariant),
    Code,
    Unknown,
}

struct Transcript<'a> {
    request: &'a ChatRequest,
    mode: Mode,
    target: Option<NodeId>,
    num_classes: usize,
}

fn regex(cell: &'static OnceLock<Regex>, src: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(src).expect("static regex"))
}

impl<'a> Transcript<'a> {
    fn read(request: &'a ChatRequest) -> Self {
        static TARGET: OnceLock<Regex> = OnceLock::new();
        static CLASS_LINE: OnceLock<Regex> = OnceLock::new();
        let task = request.messages.first().map(|m| m.content.as_str()).unwrap_or("");
        let mode = if task.contains(PROMPT_CLOSING) {
            Mode::Prompt
        } else if task.contains(TOOL_PLUS_MARKER) {
            Mode::Tool(ToolVariant::Plus)
        } else if task.contains(TOOL_MARKER) {
            Mode::Tool(ToolVariant::Basic)
        } else if task.contains(CODE_MARKER) {
            Mode::Code
        } else {
            Mode::Unknown
        };
        let target = regex(&TARGET, r"determine the label for node (\d+)")
            .captures(task)
            .and_then(|c| c[1].parse().ok());
        let num_classes = task
            .split("Available class labels:")
            .nth(1)
            .map(|rest| {
                rest.lines()
                    .skip(1)
                    .take_while(|l| regex(&CLASS_LINE, r"^\s+\d+: ").is_match(l))
                    .count()
            })
            .unwrap_or(0);
        Self {
            request,
            mode,
            target,
            num_classes,
        }
    }

    /// (model reply, environment observation) pairs so far.
    fn exchanges(&self) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        let msgs = &self.request.messages;
        msgs.windows(2).filter_map(|w| match (w[0].role, w[1].role) {
            (Role::Assistant, Role::User) => Some((w[0].content.as_str(), w[1].content.as_str())),
            _ => None,
        })
    }

    fn answer(&self, class: ClassId) -> String {
        match self.mode {
            Mode::Prompt => format!("Answer: [{class}]"),
            Mode::Tool(_) => format!("Action 0, answer {class}"),
            Mode::Code => format!("Answer [{class}]"),
            Mode::Unknown => format!("Answer: {class}"),
        }
    }
}

/// Most frequent class, lowest index on ties.
fn modal(labels: impl IntoIterator<Item = ClassId>) -> Option<ClassId> {
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|&(_, n)| n == best).map(|(c, _)| c)
}

fn parse_ids(text: &str) -> Vec<NodeId> {
    text.trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .filter_map(|t| t.trim().parse().ok())
        .collect()
}

fn one_hop_modal(t: &Transcript<'_>) -> String {
    static PROMPT_LABEL: OnceLock<Regex> = OnceLock::new();
    static LISTING: OnceLock<Regex> = OnceLock::new();
    static COUNT: OnceLock<Regex> = OnceLock::new();
    let Some(target) = t.target else {
        return t.answer(0);
    };
    match t.mode {
        Mode::Prompt | Mode::Unknown => {
            let task = t.request.messages[0].content.as_str();
            let header = format!("Node {target} has the following neighbors 1-hop away:");
            let labels = task
                .split(header.as_str())
                .nth(1)
                .map(|section| {
                    section
                        .lines()
                        .skip(1)
                        .take_while(|l| !l.trim().is_empty())
                        .filter_map(|l| {
                            regex(&PROMPT_LABEL, r"belongs to label class (\d+)\.$")
                                .captures(l)
                                .and_then(|c| c[1].parse().ok())
                        })
                        .collect::<Vec<ClassId>>()
                })
                .unwrap_or_default();
            let class = modal(labels).unwrap_or(0);
            format!("Most labeled 1-hop neighbors are class {class}.\n{}", t.answer(class))
        }
        Mode::Tool(variant) => {
            let mut neighbors: Option<Vec<NodeId>> = None;
            let mut seen: BTreeMap<NodeId, Option<ClassId>> = BTreeMap::new();
            for (said, obs) in t.exchanges() {
                match parse_action(said, ToolVariant::Plus) {
                    Ok(Action::Neighbors(n)) if n == target => neighbors = Some(parse_ids(obs)),
                    Ok(Action::Label(n)) => {
                        seen.insert(n, obs.trim().parse().ok());
                    }
                    Ok(Action::HopLabels(n, 1)) if n == target => {
                        let mut ids = Vec::new();
                        for line in obs.lines() {
                            if let Some(c) = regex(&LISTING, r"^Node (\d+): (\S+)$").captures(line) {
                                if let Ok(id) = c[1].parse::<NodeId>() {
                                    ids.push(id);
                                    seen.insert(id, c[2].parse().ok());
                                }
                            }
                        }
                        neighbors = Some(ids);
                    }
                    _ => {}
                }
            }
            let Some(neighbors) = neighbors else {
                return match variant {
                    ToolVariant::Plus => format!("I need the neighbors' labels.\nAction 5, node {target}, hop 1"),
                    ToolVariant::Basic => format!("I need the neighbors first.\nAction 1, node {target}"),
                };
            };
            if let Some(next) = neighbors.iter().find(|n| !seen.contains_key(n)) {
                return format!("Checking a neighbor's label.\nAction 3, node {next}");
            }
            let class = modal(neighbors.iter().filter_map(|n| seen.get(n).copied().flatten())).unwrap_or(0);
            format!("Neighbors mostly have class {class}.\n{}", t.answer(class))
        }
        Mode::Code => {
            let Some((_, obs)) = t.exchanges().last() else {
                return format!("Count the neighbor labels.\ncount_labels(neighbors({target}))");
            };
            let mut counts: Vec<(ClassId, usize)> = obs
                .lines()
                .filter_map(|l| {
                    let c = regex(&COUNT, r"^(\d+): (\d+)$").captures(l)?;
                    Some((c[1].parse().ok()?, c[2].parse().ok()?))
                })
                .collect();
            counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            let class = counts.first().map(|&(c, _)| c).unwrap_or(0);
            format!("The most common neighbor label is {class}.\n{}", t.answer(class))
        }
    }
}

fn fnv1a(seed: u64, request: &ChatRequest) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    let mut feed = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for m in &request.messages {
        feed(&[m.role as u8]);
        feed(m.content.as_bytes());
        feed(&[0xff]);
    }
    h
}

fn random_action(t: &Transcript<'_>, rng: &mut ChaCha8Rng, node_bound: usize) -> String {
    let bound = node_bound.max(1);
    let classes = t.num_classes.max(1);
    let roll = rng.random_range(0..100);
    if roll < 8 {
        return t.answer(rng.random_range(0..classes));
    }
    if roll < 12 {
        return "Let me think about this some more.".into();
    }
    match t.mode {
        Mode::Tool(variant) => {
            let top = if variant == ToolVariant::Plus { 5 } else { 3 };
            let node = rng.random_range(0..bound + 2);
            let action = match rng.random_range(1..=top) {
                1 => Action::Neighbors(node),
                2 => Action::Features(node),
                3 => Action::Label(node),
                4 => Action::HopFeatures(node, rng.random_range(1..4)),
                _ => Action::HopLabels(node, rng.random_range(1..4)),
            };
            format!("Exploring.\n{action}")
        }
        Mode::Code => format!("Querying.\n{}", random_query(rng, bound, classes)),
        Mode::Prompt | Mode::Unknown => t.answer(rng.random_range(0..classes)),
    }
}

fn respond(responder: &Responder, request: &ChatRequest, seed: u64) -> String {
    let t = Transcript::read(request);
    match responder {
        Responder::OneHopModalLabel => one_hop_modal(&t),
        Responder::RandomAnswer => {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, request));
            t.answer(rng.random_range(0..t.num_classes.max(1)))
        }
        Responder::RandomAction { node_bound } => {
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, request));
            random_action(&t, &mut rng, *node_bound)
        }
    }
}
