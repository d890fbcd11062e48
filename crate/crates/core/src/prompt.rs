//! Single-turn prompting: serialize the target and its k-hop neighborhood,
//! ask once, parse `Answer: [class_id]`.

use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ChatBackend;
use crate::episode::{AnswerForm, Episode, EpisodeEnv, EpisodeStatus, TraceStep, TurnRole};
use crate::graph::{bfs_rings, ClassId, GraphError, LabelView, NodeId, TextGraph};
use crate::render::label_value;
use crate::tokens::TokenBudget;
use crate::tool::Action;

/// Closing instruction; also how scripted responders recognise this mode.
pub const PROMPT_CLOSING: &str = "Think and end your response with: Answer: [class_id].";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub hops: usize,
    /// Neighbors kept per node expansion; `None` keeps all.
    pub budget_cap: Option<usize>,
    pub seed: u64,
}

impl PromptConfig {
    pub fn hops(hops: usize) -> Self {
        Self {
            hops,
            budget_cap: None,
            seed: 0,
        }
    }

    pub fn budget(hops: usize, cap: usize, seed: u64) -> Self {
        Self {
            hops,
            budget_cap: Some(cap),
            seed,
        }
    }

    pub fn display_name(&self) -> String {
        match self.budget_cap {
            Some(_) => format!("{}-hop budget prompt", self.hops),
            None => format!("{}-hop prompt", self.hops),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptOutcome {
    Prompt(String),
    /// Assembled prompt is over the context limit; it is kept for audit.
    TokenLimit {
        prompt: String,
        tokens: usize,
        limit: usize,
    },
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("budget_cap must be at least 1")]
    ZeroCap,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnswerError {
    #[error("no answer pattern found")]
    NotFound,
    #[error("answer {index} out of range for {classes} classes")]
    OutOfRange { index: String, classes: usize },
}

fn mix(seed: u64, node: NodeId) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ (node as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Neighbors of `node` kept under `cap`: the prefix of a per-node seeded
/// permutation, so a larger cap always keeps a superset.
pub fn capped_neighbors(graph: &TextGraph, node: NodeId, cap: usize, seed: u64) -> Vec<NodeId> {
    let nbrs = graph.neighbors(node);
    if nbrs.len() <= cap {
        return nbrs.to_vec();
    }
    let mut order = nbrs.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, node)));
    order.truncate(cap);
    order.sort_unstable();
    order
}

/// Rings `1..=hops` as they appear in the prompt. Each node appears once,
/// at its smallest hop distance under the (possibly capped) expansion.
pub fn prompt_rings(
    graph: &TextGraph,
    node: NodeId,
    cfg: &PromptConfig,
) -> Result<Vec<Vec<NodeId>>, GraphError> {
    if !graph.contains(node) {
        return Err(GraphError::InvalidNode(node));
    }
    let rings = match cfg.budget_cap {
        None => graph.rings(node, cfg.hops)?,
        Some(cap) => bfs_rings(node, cfg.hops, |u| {
            capped_neighbors(graph, u, cap, cfg.seed).into_iter()
        }),
    };
    Ok(rings.into_iter().skip(1).collect())
}

fn node_line(graph: &TextGraph, labels: &LabelView, id: NodeId) -> String {
    format!(
        "Node {id} has the textual description {} and belongs to label class {}.",
        graph.text(id),
        label_value(labels.visible(id))
    )
}

/// Renders the prompt text without any budget check.
pub fn render_prompt(
    graph: &TextGraph,
    labels: &LabelView,
    node: NodeId,
    cfg: &PromptConfig,
) -> Result<String, PromptError> {
    if cfg.budget_cap == Some(0) {
        return Err(PromptError::ZeroCap);
    }
    let rings = prompt_rings(graph, node, cfg)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Task: You are solving a node-based task. Your goal is to determine the label for node {node}.\n"
    );
    out.push_str(
        "The final answer must be submitted as an integer corresponding to a class label. \
         Below is the mapping from each integer index to its associated label.\n\n",
    );
    out.push_str("Available class labels:\n");
    for (i, desc) in graph.classes().iter().enumerate() {
        let _ = writeln!(out, "  {i}: {desc}");
    }
    out.push('\n');
    let _ = writeln!(out, "{}\n", node_line(graph, labels, node));
    for (h, ring) in rings.iter().enumerate() {
        let h = h + 1;
        let unit = if h == 1 { "hop" } else { "hops" };
        let _ = writeln!(out, "Node {node} has the following neighbors {h}-{unit} away:");
        for &id in ring {
            let _ = writeln!(out, "  {}", node_line(graph, labels, id));
        }
        out.push('\n');
    }
    out.push_str(PROMPT_CLOSING);
    out.push('\n');
    Ok(out)
}

pub fn build_prompt(
    graph: &TextGraph,
    labels: &LabelView,
    node: NodeId,
    cfg: &PromptConfig,
    budget: &TokenBudget,
) -> Result<PromptOutcome, PromptError> {
    let prompt = render_prompt(graph, labels, node, cfg)?;
    let tokens = budget.count(&prompt);
    Ok(if budget.exceeds(tokens) {
        PromptOutcome::TokenLimit {
            prompt,
            tokens,
            limit: budget.context_limit,
        }
    } else {
        PromptOutcome::Prompt(prompt)
    })
}

fn answer_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\banswer\s*:?\s*(\[\s*)?(\d+)").expect("static regex"))
}

/// Class index from the last `Answer: N` / `Answer: [N]` / `Answer N` in the
/// response.
pub fn parse_answer(response: &str, num_classes: usize) -> Result<(ClassId, AnswerForm), AnswerError> {
    let caps = answer_regex()
        .captures_iter(response)
        .last()
        .ok_or(AnswerError::NotFound)?;
    let digits = &caps[2];
    let form = if caps.get(1).is_some() {
        AnswerForm::Bracketed
    } else {
        AnswerForm::Bare
    };
    match digits.parse::<usize>() {
        Ok(i) if i < num_classes => Ok((i, form)),
        _ => Err(AnswerError::OutOfRange {
            index: digits.to_string(),
            classes: num_classes,
        }),
    }
}

pub fn run_prompt_episode(
    backend: &dyn ChatBackend,
    env: &EpisodeEnv<'_>,
    node: NodeId,
    cfg: &PromptConfig,
) -> Result<Episode, PromptError> {
    let mut ep = Episode::new(node);
    let prompt = match build_prompt(env.graph, env.labels, node, cfg, env.budget)? {
        PromptOutcome::TokenLimit { prompt, .. } => {
            ep.push(TurnRole::System, prompt);
            ep.status = EpisodeStatus::TokenLimit;
            return Ok(ep);
        }
        PromptOutcome::Prompt(p) => p,
    };
    ep.push(TurnRole::System, prompt);
    let reply = match backend.complete(&ep.request(env.settings)) {
        Ok(r) => r,
        Err(e) => {
            ep.status = EpisodeStatus::BackendError;
            ep.error = Some(e.to_string());
            return Ok(ep);
        }
    };
    ep.tokens_in = reply.usage.tokens_in;
    ep.tokens_out = reply.usage.tokens_out;
    ep.push(TurnRole::Model, reply.text.clone());
    match parse_answer(&reply.text, env.graph.num_classes()) {
        Ok((class, form)) => {
            log::debug!("node {node}: answer form {form:?}");
            ep.actions.push(TraceStep::Action(Action::Answer(class)));
            ep.predicted = Some(class);
            ep.answer_form = Some(form);
            ep.status = EpisodeStatus::Answered;
        }
        Err(e) => {
            log::debug!("node {node}: {e}");
            ep.status = EpisodeStatus::ParseFailure;
        }
    }
    Ok(ep)
}
