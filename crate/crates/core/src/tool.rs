//! GraphTool / GraphTool+ loop: the model picks one action per turn from a
//! fixed set and the environment answers with an observation.

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::ChatBackend;
use crate::episode::{final_line, run_loop, AnswerForm, Episode, EpisodeEnv, StepOutcome, TraceStep};
use crate::graph::{ClassId, LabelView, NodeId, TextGraph};
use crate::render::{self, cap_observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolVariant {
    /// Actions 0-3.
    Basic,
    /// Actions 0-5, adding exact-k hop retrieval.
    Plus,
}

impl ToolVariant {
    pub fn display_name(self) -> &'static str {
        match self {
            Self::Basic => "GraphTool",
            Self::Plus => "GraphTool+",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Answer(ClassId),
    Neighbors(NodeId),
    Features(NodeId),
    Label(NodeId),
    HopFeatures(NodeId, usize),
    HopLabels(NodeId, usize),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Answer(c) => write!(f, "Action 0, answer {c}"),
            Self::Neighbors(n) => write!(f, "Action 1, node {n}"),
            Self::Features(n) => write!(f, "Action 2, node {n}"),
            Self::Label(n) => write!(f, "Action 3, node {n}"),
            Self::HopFeatures(n, k) => write!(f, "Action 4, node {n}, hop {k}"),
            Self::HopLabels(n, k) => write!(f, "Action 5, node {n}, hop {k}"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ActionError {
    #[error("empty response")]
    Empty,
    #[error("could not parse action line {0:?}")]
    Unparseable(String),
    #[error("unknown action {0}")]
    UnknownAction(String),
    #[error("action {0} unavailable in this variant")]
    Unavailable(u8),
    #[error("malformed integer {0:?}")]
    MalformedInteger(String),
    #[error("hop must be at least 1")]
    HopNotPositive,
    #[error("action {0} takes {1}")]
    WrongArguments(u8, &'static str),
}

fn action_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?ix)^
            action \s* ([^\s,]+) \s* , \s*
            (answer|node) \s* :? \s* \[? \s* ([^\s,\]]+) \s* \]? \s*
            (?: , \s* hop \s* :? \s* ([^\s,]+) )? \s* $",
        )
        .expect("static regex")
    })
}

/// Drops markdown decoration models like to wrap around the action line.
pub(crate) fn clean_line(line: &str) -> &str {
    let l = line.trim().trim_start_matches(['-', '*', '>', ' ']);
    l.trim_matches(|c: char| c == '`' || c == '*' || c == '.' || c.is_whitespace())
}

fn parse_int(tok: &str) -> Result<usize, ActionError> {
    tok.parse::<usize>()
        .map_err(|_| ActionError::MalformedInteger(tok.to_string()))
}

/// Parses the final non-empty line of a model reply.
pub fn parse_action(response: &str, variant: ToolVariant) -> Result<Action, ActionError> {
    let line = clean_line(final_line(response).ok_or(ActionError::Empty)?);
    let caps = action_regex()
        .captures(line)
        .ok_or_else(|| ActionError::Unparseable(line.to_string()))?;
    let code: u8 = caps[1]
        .parse()
        .map_err(|_| ActionError::UnknownAction(caps[1].to_string()))?;
    let keyword = caps[2].to_ascii_lowercase();
    let arg = parse_int(&caps[3])?;
    let hop = caps.get(4).map(|m| parse_int(m.as_str())).transpose()?;

    let action = match (code, keyword.as_str(), hop) {
        (0, "answer", None) => Action::Answer(arg),
        (1, "node", None) => Action::Neighbors(arg),
        (2, "node", None) => Action::Features(arg),
        (3, "node", None) => Action::Label(arg),
        (4 | 5, "node", Some(0)) => return Err(ActionError::HopNotPositive),
        (4, "node", Some(k)) => Action::HopFeatures(arg, k),
        (5, "node", Some(k)) => Action::HopLabels(arg, k),
        (0, ..) => return Err(ActionError::WrongArguments(0, "`answer <class_id>`")),
        (1..=3, ..) => return Err(ActionError::WrongArguments(code, "`node <node_id>`")),
        (4 | 5, ..) => {
            return Err(ActionError::WrongArguments(
                code,
                "`node <node_id>, hop <num_hop>`",
            ))
        }
        _ => return Err(ActionError::UnknownAction(code.to_string())),
    };
    if variant == ToolVariant::Basic && code >= 4 {
        return Err(ActionError::Unavailable(code));
    }
    Ok(action)
}

fn invalid_node(graph: &TextGraph, node: NodeId) -> String {
    format!(
        "Error: node {node} does not exist; valid node ids are 0 to {}.",
        graph.num_nodes().saturating_sub(1)
    )
}

/// Observation for a non-terminal action. Labels are only shown for known
/// nodes; query and unlabeled nodes both read `None`.
pub fn execute_action(
    graph: &TextGraph,
    labels: &LabelView,
    action: &Action,
    cap: usize,
) -> String {
    let node = match *action {
        Action::Answer(_) => return "Error: answers are not executed.".into(),
        Action::Neighbors(n)
        | Action::Features(n)
        | Action::Label(n)
        | Action::HopFeatures(n, _)
        | Action::HopLabels(n, _) => n,
    };
    if !graph.contains(node) {
        return invalid_node(graph, node);
    }
    let text = match *action {
        Action::Neighbors(n) => render::id_list(graph.neighbors(n)),
        Action::Features(n) => graph.text(n).to_string(),
        Action::Label(n) => render::label_value(labels.visible(n)),
        Action::HopFeatures(n, k) => {
            let ring = graph.khop(n, k).unwrap_or_default();
            render::features_listing(graph, &ring)
        }
        Action::HopLabels(n, k) => {
            let ring = graph.khop(n, k).unwrap_or_default();
            render::labels_listing(labels, &ring)
        }
        Action::Answer(_) => unreachable!(),
    };
    cap_observation(text, cap)
}

/// Marker line present only in tool-mode task text.
pub const TOOL_MARKER: &str = "- Action 1, node node_id:";
pub const TOOL_PLUS_MARKER: &str = "- Action 5, node node_id, hop num_hop:";

pub fn task_text(graph: &TextGraph, node: NodeId, variant: ToolVariant) -> String {
    let mut actions = vec![
        "  - Action 0, answer class_id: Submit your final answer as an integer label.",
        "  - Action 1, node node_id: Retrieve the list of neighboring nodes connected to the specified node.",
        "  - Action 2, node node_id: Retrieve the textual description (features) of the specified node.",
        "  - Action 3, node node_id: Retrieve the label of the specified node if it is in the training set; otherwise, return None.",
    ];
    if variant == ToolVariant::Plus {
        actions.push("  - Action 4, node node_id, hop num_hop: Retrieve the textual descriptions (features) of all nodes that are exactly num_hop hops away from the specified node.");
        actions.push("  - Action 5, node node_id, hop num_hop: Retrieve the labels (or None) of all nodes that are exactly num_hop hops away from the specified node.");
    }
    let classes: Vec<String> = graph
        .classes()
        .iter()
        .enumerate()
        .map(|(i, d)| format!("  {i}: {d}"))
        .collect();
    format!(
        "Task: You are solving a node-based reasoning task using interleaved steps. \
Your goal is to determine the label for node {node}. At each step, you may choose one of several \
available actions to gather information or submit your final prediction.\n\
Instructions: Always begin with reasoning. You may take as many steps as needed, but aim to solve \
the task efficiently using the fewest necessary actions. Before each action, assess what information \
is available, what's missing, which action is most appropriate next, and how many steps likely remain. \
Then, on a new line, specify your chosen action using one of the formats below. It must be the final \
non-empty line of your response.\n\
Available actions:\n{}\n\
Available class labels:\n{}\n\n\
Now begin your reasoning in the Scratchpad below:\n",
        actions.join("\n"),
        classes.join("\n"),
    )
}

pub fn run_tool_episode(
    backend: &dyn ChatBackend,
    env: &EpisodeEnv<'_>,
    node: NodeId,
    variant: ToolVariant,
    max_steps: usize,
) -> Episode {
    let num_classes = env.graph.num_classes();
    run_loop(
        backend,
        env,
        node,
        task_text(env.graph, node, variant),
        max_steps,
        |reply| match parse_action(reply, variant) {
            Ok(Action::Answer(c)) if c < num_classes => StepOutcome::Answer(c, AnswerForm::Action),
            Ok(Action::Answer(c)) => StepOutcome::Invalid(format!(
                "Invalid answer: class {c} does not exist; valid classes are 0 to {}.",
                num_classes.saturating_sub(1)
            )),
            Ok(action) => StepOutcome::Observe(
                TraceStep::Action(action),
                execute_action(env.graph, env.labels, &action, env.observation_cap),
            ),
            Err(e) => StepOutcome::Invalid(format!(
                "Invalid action: {e}. End your response with exactly one action line, for example: Action 1, node {node}"
            )),
        },
    )
}
