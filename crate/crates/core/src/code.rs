//! Query-language mode: each turn the model either writes one query over the
//! node table or finishes with `Answer [class_id]`.

use std::sync::OnceLock;

use regex::Regex;

use crate::backend::ChatBackend;
use crate::dsl::{parse_query, Evaluator, GRAMMAR};
use crate::episode::{final_line, run_loop, AnswerForm, Episode, EpisodeEnv, StepOutcome, TraceStep};
use crate::graph::{NodeId, TextGraph};
use crate::tool::clean_line;

/// Heading that only appears in query-mode task text.
pub const CODE_MARKER: &str = "Query language:";

pub fn task_text(graph: &TextGraph, node: NodeId) -> String {
    let classes: Vec<String> = graph
        .classes()
        .iter()
        .enumerate()
        .map(|(i, d)| format!("  {i}: {d}"))
        .collect();
    format!(
        "Task: You are solving a node-based reasoning task using interleaved steps. \
Your goal is to determine the label for node {node}. You have a node table where each row \
corresponds to a node, indexed by its node_id.\n\
Instructions: Always begin with reasoning. At each step, assess what information is available, \
what's missing, and which query is most useful next.\n\
Schema structure:\n\
  - The table index is the node id. Access a row by node id with: row(node_id).\n\
  - The column features stores each node's textual description: features(node_id).\n\
  - The column neighbors stores a list of neighbor node IDs: neighbors(node_id).\n\
  - The column label contains the integer node label if it belongs to the training set; otherwise None: label(node_id).\n\
You may query any column of the table with any expression of the query language below. \
The table can be long, so you may want to avoid queries that print many rows.\n\
{CODE_MARKER}\n{GRAMMAR}\n\
Response format:\n\
  - For intermediate steps: reason then on the final line output a single valid query expression.\n\
  - To finish: reason then on the final line respond exactly as: Answer [class_id].\n\
Available class labels:\n{}\n",
        classes.join("\n")
    )
}

fn terminal_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^answer\s*:?\s*(\[\s*)?([^\s\]]+)\s*\]?$").expect("static regex")
    })
}

/// `Some(Ok(class))` for a terminal line, `Some(Err(msg))` for a malformed
/// one, `None` when the line is not an answer at all.
fn parse_terminal(line: &str, num_classes: usize) -> Option<Result<(usize, AnswerForm), String>> {
    let caps = terminal_regex().captures(line)?;
    let form = if caps.get(1).is_some() {
        AnswerForm::Bracketed
    } else {
        AnswerForm::Bare
    };
    Some(match caps[2].parse::<usize>() {
        Ok(c) if c < num_classes => Ok((c, form)),
        _ => Err(format!(
            "Invalid answer {}: valid classes are 0 to {}.",
            &caps[2],
            num_classes.saturating_sub(1)
        )),
    })
}

pub fn run_code_episode(
    backend: &dyn ChatBackend,
    env: &EpisodeEnv<'_>,
    node: NodeId,
    max_steps: usize,
) -> Episode {
    let num_classes = env.graph.num_classes();
    run_loop(
        backend,
        env,
        node,
        task_text(env.graph, node),
        max_steps,
        |reply| {
            let Some(line) = final_line(reply).map(clean_line) else {
                return StepOutcome::Invalid("Invalid query: empty response.".into());
            };
            match parse_terminal(line, num_classes) {
                Some(Ok((class, form))) => return StepOutcome::Answer(class, form),
                Some(Err(msg)) => return StepOutcome::Invalid(msg),
                None => {}
            }
            match parse_query(line) {
                Ok(expr) => {
                    let observation = Evaluator::new(env.graph, env.labels)
                        .with_seed(env.seed)
                        .with_render_cap(env.observation_cap)
                        .observe(&expr);
                    StepOutcome::Observe(TraceStep::Query(line.to_string()), observation)
                }
                Err(e) => StepOutcome::Invalid(format!(
                    "Invalid query: {e}. End your response with one query expression or Answer [class_id]."
                )),
            }
        },
    )
}
