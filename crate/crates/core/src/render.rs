//! Text renderings shared by tool observations and query results, so that
//! equivalent tool actions and queries produce identical bytes.

use crate::graph::{ClassId, LabelView, NodeId, TextGraph};

pub const TRUNCATION_MARKER: &str = "[truncated]";
pub const DEFAULT_OBSERVATION_CAP: usize = 4000;

pub fn id_list(ids: &[NodeId]) -> String {
    let body: Vec<String> = ids.iter().map(ToString::to_string).collect();
    format!("[{}]", body.join(", "))
}

pub fn label_value(label: Option<ClassId>) -> String {
    match label {
        Some(c) => c.to_string(),
        None => "None".to_string(),
    }
}

fn listing(lines: impl Iterator<Item = String>) -> String {
    let lines: Vec<String> = lines.collect();
    if lines.is_empty() {
        "(no nodes)".to_string()
    } else {
        lines.join("\n")
    }
}

/// One `Node <id>: <text>` line per node.
pub fn features_listing(graph: &TextGraph, ids: &[NodeId]) -> String {
    listing(ids.iter().map(|&i| format!("Node {i}: {}", graph.text(i))))
}

/// One `Node <id>: <label or None>` line per node, visible labels only.
pub fn labels_listing(labels: &LabelView, ids: &[NodeId]) -> String {
    listing(
        ids.iter()
            .map(|&i| format!("Node {i}: {}", label_value(labels.visible(i)))),
    )
}

pub fn class_catalog(classes: &[String]) -> String {
    classes
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{i}: {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Caps `text` at `cap` characters, appending the truncation marker on its
/// own line when anything was cut.
pub fn cap_observation(text: String, cap: usize) -> String {
    match text.char_indices().nth(cap) {
        Some((i, _)) => format!("{}\n{TRUNCATION_MARKER}", &text[..i]),
        None => text,
    }
}
