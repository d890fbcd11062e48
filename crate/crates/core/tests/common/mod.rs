#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::PathBuf;

use graphbench::backend::{Responder, ScriptedBackend, ScriptedPolicy};
use graphbench::dsl::{parse_query, random_query, Evaluator};
use graphbench::episode::{EpisodeEnv, DEFAULT_MAX_STEPS};
use graphbench::graph::{load_graph, load_split, LabelView, NodeId, TextGraph};
use graphbench::tokens::TokenBudget;
use graphbench::tool::{run_tool_episode, ToolVariant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Loads `<name>.jsonl` with `<name>_splits.json`.
pub fn load_fixture(name: &str) -> (TextGraph, LabelView) {
    let g = load_graph(&fixture(&format!("{name}.jsonl"))).expect("fixture graph");
    let s = load_split(&fixture(&format!("{name}_splits.json"))).expect("fixture splits");
    let v = LabelView::from_split(&g, &s).expect("fixture split");
    (g, v)
}

/// Erdos-Renyi style graph with `c` classes, every node labeled.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64, c: usize) -> TextGraph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let labels = (0..n).map(|_| Some(rng.random_range(0..c))).collect();
    TextGraph::new(
        (0..n).map(|i| format!("text of node {i}")).collect(),
        labels,
        (0..c).map(|i| format!("class {i}")).collect(),
        edges,
    )
    .expect("random graph")
}

/// Random known/query split: each node is known with probability `p_known`.
pub fn random_split(rng: &mut impl Rng, g: &TextGraph, p_known: f64) -> LabelView {
    let mut known = BTreeMap::new();
    let mut query = BTreeSet::new();
    for v in 0..g.num_nodes() {
        if rng.random_bool(p_known) {
            known.insert(v, g.label(v).expect("labeled"));
        } else {
            query.insert(v);
        }
    }
    LabelView::new(known, query).expect("disjoint")
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hop distances from `src` by plain BFS over the adjacency lists; `None`
/// for unreachable nodes.
pub fn bfs_distances(g: &TextGraph, src: NodeId) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.num_nodes()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].expect("visited");
        for &v in g.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Nodes at exactly distance `k`, ascending.
pub fn ring_oracle(g: &TextGraph, src: NodeId, k: usize) -> Vec<NodeId> {
    bfs_distances(g, src)
        .into_iter()
        .enumerate()
        .filter(|&(_, d)| d == Some(k))
        .map(|(v, _)| v)
        .collect()
}

/// Dense `(D^-1 A)^steps Y` via nalgebra's matrix power (squaring), with
/// zero rows for isolated nodes.
pub fn lp_oracle(g: &TextGraph, labels: &LabelView, steps: u32) -> nalgebra::DMatrix<f64> {
    let n = g.num_nodes();
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    for u in 0..n {
        let d = g.degree(u);
        for &v in g.neighbors(u) {
            a[(u, v)] = 1.0 / d as f64;
        }
    }
    let mut y = nalgebra::DMatrix::<f64>::zeros(n, g.num_classes());
    for (&v, &c) in labels.known() {
        y[(v, c)] = 1.0;
    }
    a.pow(steps) * y
}

/// Balanced synthetic dataset: `per_class` nodes per class, sparse random
/// edges, every fifth node known.
pub fn balanced_dataset(classes: usize, per_class: usize, seed: u64) -> (TextGraph, LabelView) {
    let mut r = rng(seed);
    let n = classes * per_class;
    let labels: Vec<Option<usize>> = (0..n).map(|v| Some(v % classes)).collect();
    let edges: Vec<(NodeId, NodeId)> = (0..n * 2)
        .map(|_| (r.random_range(0..n), r.random_range(0..n)))
        .collect();
    let g = TextGraph::new(
        (0..n).map(|v| format!("synthetic node {v}")).collect(),
        labels,
        (0..classes).map(|c| format!("class {c}")).collect(),
        edges,
    )
    .expect("synthetic graph");
    let known: BTreeMap<NodeId, usize> = (0..n).filter(|v| v % 5 == 0).map(|v| (v, v % classes)).collect();
    let query: BTreeSet<NodeId> = (0..n).filter(|v| v % 5 != 0).collect();
    (g, LabelView::new(known, query).expect("disjoint"))
}

/// Same graph with every query node's true label rotated to another class.
pub fn rotate_held_out(g: &TextGraph, v: &LabelView) -> TextGraph {
    let c = g.num_classes();
    let labels = (0..g.num_nodes())
        .map(|n| match g.label(n) {
            Some(l) if v.is_query(n) => Some((l + 1) % c),
            other => other,
        })
        .collect();
    let texts = (0..g.num_nodes()).map(|n| g.text(n).to_string()).collect();
    TextGraph::new(texts, labels, g.classes().to_vec(), g.edges()).unwrap()
}

/// Random-action tool episodes (alternating variants) whose transcripts
/// differ between the fixture and its held-out-rotated twin.
pub fn tool_violations(episodes: u64) -> usize {
    let (g, v) = load_fixture("homophilic");
    let twin = rotate_held_out(&g, &v);
    let budget = TokenBudget::default();
    let query: Vec<usize> = v.query().iter().copied().collect();
    let mut violations = 0;
    for i in 0..episodes {
        let policy = ScriptedPolicy::responder(Responder::RandomAction {
            node_bound: g.num_nodes(),
        })
        .with_seed(i);
        let backend = ScriptedBackend::new(policy);
        let target = query[i as usize % query.len()];
        let variant = if i % 2 == 0 { ToolVariant::Basic } else { ToolVariant::Plus };
        let a = run_tool_episode(&backend, &EpisodeEnv::new(&g, &v, &budget), target, variant, DEFAULT_MAX_STEPS);
        let b = run_tool_episode(&backend, &EpisodeEnv::new(&twin, &v, &budget), target, variant, DEFAULT_MAX_STEPS);
        if a.turns != b.turns {
            violations += 1;
        }
    }
    violations
}

/// Random queries whose observations differ between the twins.
pub fn dsl_violations(queries: u64) -> usize {
    let (g, v) = load_fixture("homophilic");
    let twin = rotate_held_out(&g, &v);
    let mut r = rng(99);
    let mut violations = 0;
    for i in 0..queries {
        let text = random_query(&mut r, g.num_nodes(), g.num_classes());
        if let Ok(expr) = parse_query(&text) {
            let a = Evaluator::new(&g, &v).with_seed(i).observe(&expr);
            let b = Evaluator::new(&twin, &v).with_seed(i).observe(&expr);
            if a != b {
                violations += 1;
            }
        }
    }
    violations
}
