//! Immutable text-attributed graphs: loading, label views, k-hop rings and
//! dataset statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokens::CountingMode;

pub type NodeId = usize;
pub type ClassId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("node {node}: label {label} out of range (class count {classes})")]
    LabelOutOfRange {
        node: NodeId,
        label: ClassId,
        classes: usize,
    },
    #[error("dangling endpoint: edge ({from}, {to}) but graph has {nodes} nodes")]
    DanglingEndpoint { from: NodeId, to: NodeId, nodes: usize },
    #[error("invalid node id {0}")]
    InvalidNode(NodeId),
    #[error("graph has no edges")]
    NoEdges,
    #[error("node {0} is unlabeled")]
    Unlabeled(NodeId),
    #[error("invalid splits: {0}")]
    InvalidSplits(String),
}

/// Undirected graph with one text per node, optional ground-truth labels and
/// a class catalog. Immutable once built; perturbations produce new graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct TextGraph {
    adjacency: Vec<Vec<NodeId>>,
    features: Vec<String>,
    labels: Vec<Option<ClassId>>,
    classes: Vec<String>,
}

impl TextGraph {
    /// Builds a graph from node records and an edge list. Edges may be given
    /// in either or both directions; they are symmetrized and deduplicated.
    /// Self-loops are dropped.
    pub fn new(
        features: Vec<String>,
        labels: Vec<Option<ClassId>>,
        classes: Vec<String>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        let n = features.len();
        if labels.len() != n {
            return Err(GraphError::Malformed {
                line: 0,
                message: format!("{} features but {} labels", n, labels.len()),
            });
        }
        for (node, label) in labels.iter().enumerate() {
            if let Some(label) = *label {
                if label >= classes.len() {
                    return Err(GraphError::LabelOutOfRange {
                        node,
                        label,
                        classes: classes.len(),
                    });
                }
            }
        }
        let mut sets: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(GraphError::DanglingEndpoint {
                    from: a,
                    to: b,
                    nodes: n,
                });
            }
            if a == b {
                continue;
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        let adjacency = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        Ok(Self {
            adjacency,
            features,
            labels,
            classes,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node < self.num_nodes()
    }

    fn check(&self, node: NodeId) -> Result<(), GraphError> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(GraphError::InvalidNode(node))
        }
    }

    /// Neighbors in ascending id order.
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node].len()
    }

    pub fn text(&self, node: NodeId) -> &str {
        &self.features[node]
    }

    /// Ground-truth label. Never show this to a model directly; go through a
    /// [`LabelView`].
    pub fn label(&self, node: NodeId) -> Option<ClassId> {
        self.labels[node]
    }

    pub fn labels(&self) -> &[Option<ClassId>] {
        &self.labels
    }

    /// Undirected edges as `(low, high)` pairs in ascending order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for (i, adj) in self.adjacency.iter().enumerate() {
            out.extend(adj.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// Same nodes and labels, with a different edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Self {
        Self::new(
            self.features.clone(),
            self.labels.clone(),
            self.classes.clone(),
            edges,
        )
        .expect("edges drawn from an existing graph stay valid")
    }

    /// Same structure and labels, with texts replaced by `f(node, text)`.
    pub fn map_features(&self, mut f: impl FnMut(NodeId, &str) -> String) -> Self {
        Self {
            adjacency: self.adjacency.clone(),
            features: self
                .features
                .iter()
                .enumerate()
                .map(|(i, t)| f(i, t))
                .collect(),
            labels: self.labels.clone(),
            classes: self.classes.clone(),
        }
    }

    /// Nodes exactly `k` hops from `node`, ascending. `khop(v, 0) == [v]`.
    pub fn khop(&self, node: NodeId, k: usize) -> Result<Vec<NodeId>, GraphError> {
        Ok(self.rings(node, k)?.into_iter().nth(k).unwrap_or_default())
    }

    /// BFS rings `0..=k` around `node`; ring `h` holds the nodes at distance
    /// exactly `h`, ascending. Stops at the first empty ring, so the result
    /// has at most `k + 1` entries and none of them is empty.
    pub fn rings(&self, node: NodeId, k: usize) -> Result<Vec<Vec<NodeId>>, GraphError> {
        self.check(node)?;
        Ok(bfs_rings(node, k, |u| self.adjacency[u].iter().copied()))
    }
}

/// Layered BFS with a caller-supplied expansion. Shared by plain k-hop
/// queries and the budgeted (subsampled) prompt neighborhoods.
pub(crate) fn bfs_rings<I>(
    start: NodeId,
    k: usize,
    mut expand: impl FnMut(NodeId) -> I,
) -> Vec<Vec<NodeId>>
where
    I: Iterator<Item = NodeId>,
{
    let mut seen = HashSet::new();
    seen.insert(start);
    let mut rings = vec![vec![start]];
    for _ in 0..k {
        let mut next = Vec::new();
        if let Some(frontier) = rings.last() {
            for &u in frontier {
                for v in expand(u) {
                    if seen.insert(v) {
                        next.push(v);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_unstable();
        rings.push(next);
    }
    rings
}

/// The harness's view of which labels may be revealed. `known` is K with its
/// labels, `query` is Q. Nodes in neither set are simply unlabeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelView {
    known: BTreeMap<NodeId, ClassId>,
    query: BTreeSet<NodeId>,
}

impl LabelView {
    pub fn new(
        known: BTreeMap<NodeId, ClassId>,
        query: BTreeSet<NodeId>,
    ) -> Result<Self, GraphError> {
        if let Some(node) = known.keys().find(|k| query.contains(k)) {
            return Err(GraphError::InvalidSplits(format!(
                "node {node} is both known and query"
            )));
        }
        Ok(Self { known, query })
    }

    /// Reveals the ground truth of `known` ids and marks `query` ids as
    /// queries.
    pub fn from_split(graph: &TextGraph, split: &Split) -> Result<Self, GraphError> {
        let mut known = BTreeMap::new();
        for &id in &split.known {
            graph.check(id)?;
            let label = graph.label(id).ok_or(GraphError::Unlabeled(id))?;
            known.insert(id, label);
        }
        let mut query = BTreeSet::new();
        for &id in &split.query {
            graph.check(id)?;
            query.insert(id);
        }
        Self::new(known, query)
    }

    /// Label visible to a model, `None` for query and unlabeled nodes alike.
    pub fn visible(&self, node: NodeId) -> Option<ClassId> {
        self.known.get(&node).copied()
    }

    pub fn known(&self) -> &BTreeMap<NodeId, ClassId> {
        &self.known
    }

    pub fn query(&self) -> &BTreeSet<NodeId> {
        &self.query
    }

    pub fn is_query(&self, node: NodeId) -> bool {
        self.query.contains(&node)
    }

    /// Same query set with a subset of the known labels.
    pub fn retain_known(&self, mut keep: impl FnMut(NodeId) -> bool) -> Self {
        Self {
            known: self
                .known
                .iter()
                .filter(|(&k, _)| keep(k))
                .map(|(&k, &v)| (k, v))
                .collect(),
            query: self.query.clone(),
        }
    }
}

/// Splits file contents: `{"known": [...], "query": [...]}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub known: Vec<NodeId>,
    pub query: Vec<NodeId>,
}

pub fn load_split(path: &Path) -> Result<Split, GraphError> {
    let file = File::open(path).map_err(|source| io_err(path, source))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| GraphError::InvalidSplits(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    num_nodes: usize,
    classes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    text: String,
    label: Option<ClassId>,
    neighbors: Vec<NodeId>,
}

fn io_err(path: &Path, source: std::io::Error) -> GraphError {
    GraphError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads the JSONL dataset format: a header line
/// `{"num_nodes": N, "classes": [...]}` followed by one record per node.
pub fn load_graph(path: &Path) -> Result<TextGraph, GraphError> {
    let file = File::open(path).map_err(|source| io_err(path, source))?;
    read_graph(BufReader::new(file)).map_err(|e| match e {
        GraphError::Io { source, .. } => io_err(path, source),
        other => other,
    })
}

pub fn read_graph(reader: impl BufRead) -> Result<TextGraph, GraphError> {
    let mut lines = reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));

    let (line_no, header) = lines.next().ok_or(GraphError::Malformed {
        line: 1,
        message: "missing header".into(),
    })?;
    let header = header.map_err(|source| GraphError::Io {
        path: String::new(),
        source,
    })?;
    let header: Header = serde_json::from_str(&header).map_err(|e| GraphError::Malformed {
        line: line_no,
        message: e.to_string(),
    })?;

    let n = header.num_nodes;
    let mut records: Vec<Option<NodeRecord>> = (0..n).map(|_| None).collect();
    for (line_no, line) in lines {
        let line = line.map_err(|source| GraphError::Io {
            path: String::new(),
            source,
        })?;
        let rec: NodeRecord = serde_json::from_str(&line).map_err(|e| GraphError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let slot = records.get_mut(rec.id).ok_or_else(|| GraphError::Malformed {
            line: line_no,
            message: format!("node id {} outside [0, {n})", rec.id),
        })?;
        if slot.is_some() {
            return Err(GraphError::Malformed {
                line: line_no,
                message: format!("duplicate node id {}", rec.id),
            });
        }
        *slot = Some(rec);
    }

    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut edges = Vec::new();
    for (id, rec) in records.into_iter().enumerate() {
        let rec = rec.ok_or_else(|| GraphError::Malformed {
            line: 0,
            message: format!("node id {id} missing"),
        })?;
        features.push(rec.text);
        labels.push(rec.label);
        edges.extend(rec.neighbors.into_iter().map(|nb| (id, nb)));
    }
    TextGraph::new(features, labels, header.classes, edges)
}

pub fn save_graph(graph: &TextGraph, path: &Path) -> Result<(), GraphError> {
    let file = File::create(path).map_err(|source| io_err(path, source))?;
    let mut out = BufWriter::new(file);
    write_graph(graph, &mut out)
        .and_then(|_| out.flush())
        .map_err(|source| io_err(path, source))
}

pub fn write_graph(graph: &TextGraph, out: &mut impl Write) -> std::io::Result<()> {
    let header = Header {
        num_nodes: graph.num_nodes(),
        classes: graph.classes.clone(),
    };
    serde_json::to_writer(&mut *out, &header)?;
    writeln!(out)?;
    for id in 0..graph.num_nodes() {
        let rec = NodeRecord {
            id,
            text: graph.features[id].clone(),
            label: graph.labels[id],
            neighbors: graph.adjacency[id].clone(),
        };
        serde_json::to_writer(&mut *out, &rec)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Percentage of edges whose endpoints share a ground-truth label.
pub fn edge_homophily(graph: &TextGraph) -> Result<f64, GraphError> {
    let edges = graph.edges();
    if edges.is_empty() {
        return Err(GraphError::NoEdges);
    }
    let mut same = 0usize;
    for &(a, b) in &edges {
        let la = graph.label(a).ok_or(GraphError::Unlabeled(a))?;
        let lb = graph.label(b).ok_or(GraphError::Unlabeled(b))?;
        if la == lb {
            same += 1;
        }
    }
    // isolated nodes carry no edge but must still be labeled
    if let Some(node) = graph.labels.iter().position(Option::is_none) {
        return Err(GraphError::Unlabeled(node));
    }
    Ok(100.0 * same as f64 / edges.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub avg_degree: f64,
    /// Mean character count of node texts.
    pub avg_text_length: f64,
    /// Mean harness-token count of node texts under the default counting mode.
    pub avg_text_tokens: f64,
    pub class_count: usize,
    /// Edge homophily in percent; `None` when undefined (no edges or
    /// unlabeled nodes).
    pub homophily: Option<f64>,
}

pub fn stats(graph: &TextGraph) -> GraphStats {
    stats_with(graph, &CountingMode::default())
}

pub fn stats_with(graph: &TextGraph, mode: &CountingMode) -> GraphStats {
    let n = graph.num_nodes();
    let mean = |total: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    let chars: usize = graph.features.iter().map(|t| t.chars().count()).sum();
    let tokens: usize = graph.features.iter().map(|t| mode.count(t)).sum();
    GraphStats {
        num_nodes: n,
        num_edges: graph.num_edges(),
        avg_degree: mean(2 * graph.num_edges()),
        avg_text_length: mean(chars),
        avg_text_tokens: mean(tokens),
        class_count: graph.num_classes(),
        homophily: edge_homophily(graph).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("node {i}")).collect()
    }

    fn path(n: usize) -> TextGraph {
        TextGraph::new(
            texts(n),
            vec![Some(0); n],
            vec!["a".into()],
            (0..n.saturating_sub(1)).map(|i| (i, i + 1)),
        )
        .unwrap()
    }

    #[test]
    fn loads_three_node_file() {
        let data = r#"{"num_nodes": 3, "classes": ["x", "y"]}
{"id": 0, "text": "a", "label": 0, "neighbors": [1]}
{"id": 1, "text": "b", "label": 1, "neighbors": [2]}
{"id": 2, "text": "c", "label": null, "neighbors": []}
"#;
        let g = read_graph(data.as_bytes()).unwrap();
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.labels(), &[Some(0), Some(1), None]);
        assert_eq!(g.num_edges(), 2);
    }

    #[test]
    fn rejects_dangling_endpoint() {
        let data = r#"{"num_nodes": 3, "classes": ["x"]}
{"id": 0, "text": "a", "label": 0, "neighbors": [5]}
{"id": 1, "text": "b", "label": 0, "neighbors": []}
{"id": 2, "text": "c", "label": 0, "neighbors": []}
"#;
        let err = read_graph(data.as_bytes()).unwrap_err();
        assert!(matches!(err, GraphError::DanglingEndpoint { to: 5, .. }));
        assert!(err.to_string().contains("dangling endpoint"));
    }

    #[test]
    fn symmetrizes_duplicate_directions() {
        let data = r#"{"num_nodes": 2, "classes": ["x"]}
{"id": 0, "text": "a", "label": 0, "neighbors": [1]}
{"id": 1, "text": "b", "label": 0, "neighbors": [0]}
"#;
        let g = read_graph(data.as_bytes()).unwrap();
        assert_eq!(g.degree(0), 1);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn malformed_record_reports_line() {
        let data = "{\"num_nodes\": 2, \"classes\": [\"x\"]}\n{\"id\": 0, \"text\": \"a\", \"label\": 0, \"neighbors\": []}\n{\"id\": 1, \"text\": oops}\n";
        match read_graph(data.as_bytes()).unwrap_err() {
            GraphError::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_label_out_of_range() {
        let data = r#"{"num_nodes": 1, "classes": ["x"]}
{"id": 0, "text": "a", "label": 1, "neighbors": []}
"#;
        assert!(matches!(
            read_graph(data.as_bytes()).unwrap_err(),
            GraphError::LabelOutOfRange { label: 1, .. }
        ));
    }

    #[test]
    fn rejects_missing_and_duplicate_ids() {
        let missing = r#"{"num_nodes": 2, "classes": ["x"]}
{"id": 0, "text": "a", "label": 0, "neighbors": []}
"#;
        assert!(read_graph(missing.as_bytes()).is_err());
        let dup = r#"{"num_nodes": 2, "classes": ["x"]}
{"id": 0, "text": "a", "label": 0, "neighbors": []}
{"id": 0, "text": "a", "label": 0, "neighbors": []}
"#;
        assert!(read_graph(dup.as_bytes()).is_err());
    }

    #[test]
    fn khop_on_path() {
        let g = path(4);
        assert_eq!(g.khop(0, 2).unwrap(), vec![2]);
        assert_eq!(g.khop(2, 0).unwrap(), vec![2]);
        assert_eq!(g.khop(1, 1).unwrap(), vec![0, 2]);
        assert!(g.khop(0, 7).unwrap().is_empty());
        assert!(matches!(g.khop(9, 1), Err(GraphError::InvalidNode(9))));
    }

    #[test]
    fn homophily_examples() {
        let tri = TextGraph::new(
            texts(3),
            vec![Some(0); 3],
            vec!["a".into()],
            [(0, 1), (1, 2), (0, 2)],
        )
        .unwrap();
        assert_eq!(edge_homophily(&tri).unwrap(), 100.0);

        let pair = TextGraph::new(
            texts(2),
            vec![Some(0), Some(1)],
            vec!["a".into(), "b".into()],
            [(0, 1)],
        )
        .unwrap();
        assert_eq!(edge_homophily(&pair).unwrap(), 0.0);

        let empty = TextGraph::new(texts(2), vec![Some(0); 2], vec!["a".into()], []).unwrap();
        assert!(matches!(edge_homophily(&empty), Err(GraphError::NoEdges)));

        let unlabeled = TextGraph::new(
            texts(3),
            vec![Some(0), Some(0), None],
            vec!["a".into()],
            [(0, 1)],
        )
        .unwrap();
        assert!(matches!(
            edge_homophily(&unlabeled),
            Err(GraphError::Unlabeled(2))
        ));
    }

    #[test]
    fn stats_examples() {
        let tri = TextGraph::new(
            texts(3),
            vec![Some(0); 3],
            vec!["a".into()],
            [(0, 1), (1, 2), (0, 2)],
        )
        .unwrap();
        assert_eq!(stats(&tri).avg_degree, 2.0);

        let two = TextGraph::new(
            vec!["ab".into(), "abcd".into()],
            vec![None, None],
            vec!["a".into()],
            [],
        )
        .unwrap();
        let s = stats(&two);
        assert_eq!(s.avg_text_length, 3.0);
        assert_eq!(s.homophily, None);
    }

    #[test]
    fn split_overlap_rejected() {
        let g = path(3);
        let split = Split {
            known: vec![0, 1],
            query: vec![1],
        };
        assert!(matches!(
            LabelView::from_split(&g, &split),
            Err(GraphError::InvalidSplits(_))
        ));
    }

    #[test]
    fn label_view_hides_query_labels() {
        let g = path(3);
        let view = LabelView::from_split(
            &g,
            &Split {
                known: vec![0],
                query: vec![2],
            },
        )
        .unwrap();
        assert_eq!(view.visible(0), Some(0));
        assert_eq!(view.visible(1), None);
        assert_eq!(view.visible(2), None);
    }
}
