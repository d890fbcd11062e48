use std::collections::{BTreeMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Builtin, Expr};
use crate::graph::{ClassId, LabelView, NodeId, TextGraph};
use crate::render::{self, cap_observation, DEFAULT_OBSERVATION_CAP};

/// Node visits allowed per evaluation.
pub const DEFAULT_VISIT_CAP: usize = 200_000;
pub const DEFAULT_RENDER_CAP: usize = DEFAULT_OBSERVATION_CAP;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("node {id} does not exist; valid node ids are 0 to {max}.")]
    InvalidNode { id: i64, max: usize },
    #[error("{what} must be non-negative, got {value}")]
    Negative { what: &'static str, value: i64 },
    #[error("class {0} does not exist")]
    InvalidClass(i64),
    #[error("result too large")]
    TooLarge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Value {
    Int(i64),
    Str(String),
    Ids(Vec<NodeId>),
    Label(Option<ClassId>),
    Text(String),
    Row(NodeId),
    FeatureTable(Vec<NodeId>),
    LabelTable(Vec<NodeId>),
    Counts(Vec<NodeId>),
    Catalog,
}

/// Evaluates queries against a graph through a label view. Holds the visit
/// budget for one evaluation.
pub struct Evaluator<'a> {
    graph: &'a TextGraph,
    labels: &'a LabelView,
    /// Used by `sample` when no seed argument is given.
    pub seed: u64,
    pub visit_cap: usize,
    pub render_cap: usize,
    visits: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(graph: &'a TextGraph, labels: &'a LabelView) -> Self {
        Self {
            graph,
            labels,
            seed: 0,
            visit_cap: DEFAULT_VISIT_CAP,
            render_cap: DEFAULT_RENDER_CAP,
            visits: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_render_cap(mut self, cap: usize) -> Self {
        self.render_cap = cap;
        self
    }

    /// Evaluates and renders. Evaluation errors become `Error: ...` text;
    /// they are information for the model, not failures of the episode.
    pub fn observe(&mut self, expr: &Expr) -> String {
        match self.eval(expr) {
            Ok(text) => text,
            Err(e) => format!("Error: {e}"),
        }
    }

    pub fn eval(&mut self, expr: &Expr) -> Result<String, EvalError> {
        self.visits = 0;
        let value = self.value(expr)?;
        Ok(cap_observation(self.render(value)?, self.render_cap))
    }

    fn charge(&mut self, n: usize) -> Result<(), EvalError> {
        self.visits = self.visits.saturating_add(n);
        if self.visits > self.visit_cap {
            Err(EvalError::TooLarge)
        } else {
            Ok(())
        }
    }

    fn node(&self, id: i64) -> Result<NodeId, EvalError> {
        match usize::try_from(id) {
            Ok(n) if self.graph.contains(n) => Ok(n),
            _ => Err(EvalError::InvalidNode {
                id,
                max: self.graph.num_nodes().saturating_sub(1),
            }),
        }
    }

    fn count(what: &'static str, value: i64) -> Result<usize, EvalError> {
        usize::try_from(value).map_err(|_| EvalError::Negative { what, value })
    }

    fn int(&mut self, expr: &Expr) -> Result<i64, EvalError> {
        match self.value(expr)? {
            Value::Int(i) => Ok(i),
            other => unreachable!("type checker admitted {other:?} as integer"),
        }
    }

    fn ids(&mut self, expr: &Expr) -> Result<Vec<NodeId>, EvalError> {
        match self.value(expr)? {
            Value::Ids(ids) => Ok(ids),
            other => unreachable!("type checker admitted {other:?} as id list"),
        }
    }

    fn value(&mut self, expr: &Expr) -> Result<Value, EvalError> {
        match expr {
            Expr::Int(i) => Ok(Value::Int(*i)),
            Expr::Str(s) => Ok(Value::Str(s.clone())),
            Expr::IdList(ids) => {
                self.charge(ids.len())?;
                ids.iter()
                    .map(|&i| self.node(i))
                    .collect::<Result<_, _>>()
                    .map(Value::Ids)
            }
            Expr::Call(builtin, args) => self.call(*builtin, args),
        }
    }

    fn call(&mut self, builtin: Builtin, args: &[Expr]) -> Result<Value, EvalError> {
        let g = self.graph;
        Ok(match builtin {
            Builtin::Row => {
                let n = self.int(&args[0]).and_then(|i| self.node(i))?;
                self.charge(1 + g.degree(n))?;
                Value::Row(n)
            }
            Builtin::Features => {
                let n = self.int(&args[0]).and_then(|i| self.node(i))?;
                self.charge(1)?;
                Value::Text(g.text(n).to_string())
            }
            Builtin::Label => {
                let n = self.int(&args[0]).and_then(|i| self.node(i))?;
                self.charge(1)?;
                Value::Label(self.labels.visible(n))
            }
            Builtin::Neighbors => {
                let n = self.int(&args[0]).and_then(|i| self.node(i))?;
                self.charge(1 + g.degree(n))?;
                Value::Ids(g.neighbors(n).to_vec())
            }
            Builtin::Degree => {
                let n = self.int(&args[0]).and_then(|i| self.node(i))?;
                self.charge(1)?;
                Value::Int(g.degree(n) as i64)
            }
            Builtin::Hop => {
                let n = self.int(&args[0]).and_then(|i| self.node(i))?;
                let k = self.int(&args[1]).and_then(|k| Self::count("hop", k))?;
                Value::Ids(self.ring(n, k)?)
            }
            Builtin::FeaturesOf => {
                let ids = self.ids(&args[0])?;
                self.charge(ids.len())?;
                Value::FeatureTable(ids)
            }
            Builtin::LabelsOf => {
                let ids = self.ids(&args[0])?;
                self.charge(ids.len())?;
                Value::LabelTable(ids)
            }
            Builtin::CountLabels => {
                let ids = self.ids(&args[0])?;
                self.charge(ids.len())?;
                Value::Counts(ids)
            }
            Builtin::FilterLabel => {
                let ids = self.ids(&args[0])?;
                let wanted = match self.value(&args[1])? {
                    Value::Int(c) => match usize::try_from(c) {
                        Ok(c) if c < g.num_classes() => Some(c),
                        _ => return Err(EvalError::InvalidClass(c)),
                    },
                    // only "None" passes the type checker
                    _ => None,
                };
                self.charge(ids.len())?;
                Value::Ids(
                    ids.into_iter()
                        .filter(|&i| self.labels.visible(i) == wanted)
                        .collect(),
                )
            }
            Builtin::Sample => {
                let ids = self.ids(&args[0])?;
                let n = self.int(&args[1]).and_then(|n| Self::count("sample size", n))?;
                let seed = match args.get(2) {
                    Some(e) => self.int(e)? as u64,
                    None => self.seed,
                };
                self.charge(ids.len())?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let n = n.min(ids.len());
                let mut picked: Vec<NodeId> = rand::seq::index::sample(&mut rng, ids.len(), n)
                    .into_iter()
                    .map(|i| ids[i])
                    .collect();
                picked.sort_unstable();
                Value::Ids(picked)
            }
            Builtin::Head => {
                let mut ids = self.ids(&args[0])?;
                let n = self.int(&args[1]).and_then(|n| Self::count("head size", n))?;
                ids.truncate(n);
                Value::Ids(ids)
            }
            Builtin::Size => {
                let ids = self.ids(&args[0])?;
                Value::Int(ids.len() as i64)
            }
            Builtin::Classes => {
                self.charge(g.num_classes())?;
                Value::Catalog
            }
        })
    }

    /// Exact-k ring with every scanned edge charged to the visit budget.
    fn ring(&mut self, start: NodeId, k: usize) -> Result<Vec<NodeId>, EvalError> {
        let mut seen = HashSet::from([start]);
        let mut frontier = vec![start];
        self.charge(1)?;
        for _ in 0..k {
            let mut next = Vec::new();
            for &u in &frontier {
                self.charge(self.graph.degree(u))?;
                for &v in self.graph.neighbors(u) {
                    if seen.insert(v) {
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                return Ok(next);
            }
            frontier = next;
        }
        frontier.sort_unstable();
        Ok(frontier)
    }

    fn render(&mut self, value: Value) -> Result<String, EvalError> {
        let g = self.graph;
        Ok(match value {
            Value::Int(i) => i.to_string(),
            Value::Str(s) => s,
            Value::Ids(ids) => render::id_list(&ids),
            Value::Label(l) => render::label_value(l),
            Value::Text(t) => t,
            Value::Row(n) => format!(
                "node_id: {n}\nfeatures: {}\nneighbors: {}\nlabel: {}",
                g.text(n),
                render::id_list(g.neighbors(n)),
                render::label_value(self.labels.visible(n))
            ),
            Value::FeatureTable(ids) => render::features_listing(g, &ids),
            Value::LabelTable(ids) => render::labels_listing(self.labels, &ids),
            Value::Counts(ids) => {
                let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
                let mut unknown = 0usize;
                for &i in &ids {
                    match self.labels.visible(i) {
                        Some(c) => *counts.entry(c).or_default() += 1,
                        None => unknown += 1,
                    }
                }
                let mut lines: Vec<String> =
                    counts.iter().map(|(c, n)| format!("{c}: {n}")).collect();
                if unknown > 0 {
                    lines.push(format!("None: {unknown}"));
                }
                if lines.is_empty() {
                    "(no nodes)".to_string()
                } else {
                    lines.join("\n")
                }
            }
            Value::Catalog => render::class_catalog(g.classes()),
        })
    }
}

/// Evaluates `expr` with default caps and the given `sample` seed.
pub fn eval_query(
    graph: &TextGraph,
    labels: &LabelView,
    expr: &Expr,
    render_cap: usize,
    seed: u64,
) -> String {
    Evaluator::new(graph, labels)
        .with_seed(seed)
        .with_render_cap(render_cap)
        .observe(expr)
}
