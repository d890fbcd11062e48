//! Reference predictors: uniform random, majority label, and label
//! propagation as a pure power iteration `Y <- D^-1 A Y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{ClassId, LabelView, NodeId, TextGraph};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BaselineError {
    #[error("class catalog is empty")]
    NoClasses,
    #[error("no known labels")]
    NoKnownLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub node: NodeId,
    pub class_index: ClassId,
    /// Propagated scores, label propagation only.
    pub score_vector: Option<Vec<f64>>,
}

impl Prediction {
    fn hard(node: NodeId, class_index: ClassId) -> Self {
        Self {
            node,
            class_index,
            score_vector: None,
        }
    }
}

/// Index of the largest entry, lowest index on ties. `None` when every entry
/// is zero (no signal).
pub fn argmax(scores: &[f64]) -> Option<ClassId> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    match best {
        Some((_, s)) if s == 0.0 && scores.iter().all(|&x| x == 0.0) => None,
        other => other.map(|(i, _)| i),
    }
}

pub fn predict_random(
    num_classes: usize,
    query: &[NodeId],
    seed: u64,
) -> Result<Vec<Prediction>, BaselineError> {
    if num_classes == 0 {
        return Err(BaselineError::NoClasses);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(query
        .iter()
        .map(|&node| Prediction::hard(node, rng.random_range(0..num_classes)))
        .collect())
}

/// Most frequent class among known labels; ties go to the lowest index.
pub fn majority_class(labels: &LabelView) -> Result<ClassId, BaselineError> {
    let known = labels.known();
    let width = known.values().max().ok_or(BaselineError::NoKnownLabels)? + 1;
    let mut counts = vec![0usize; width];
    for &c in known.values() {
        counts[c] += 1;
    }
    let top = *counts.iter().max().unwrap_or(&0);
    Ok(counts.iter().position(|&c| c == top).unwrap_or(0))
}

pub fn predict_majority(
    labels: &LabelView,
    query: &[NodeId],
) -> Result<Vec<Prediction>, BaselineError> {
    let class = majority_class(labels)?;
    Ok(query.iter().map(|&n| Prediction::hard(n, class)).collect())
}

/// Computes `(D^-1 A)^steps Y` with `Y` one-hot on known nodes and zero
/// elsewhere. Rows of isolated nodes stay zero. Returned matrix is row-major,
/// `num_nodes * num_classes`.
pub fn propagate(graph: &TextGraph, labels: &LabelView, steps: usize) -> Vec<f64> {
    let n = graph.num_nodes();
    let c = graph.num_classes();
    let mut y = vec![0.0; n * c];
    for (&node, &class) in labels.known() {
        y[node * c + class] = 1.0;
    }
    let mut next = vec![0.0; n * c];
    for _ in 0..steps {
        for i in 0..n {
            let row = &mut next[i * c..(i + 1) * c];
            row.fill(0.0);
            let nbrs = graph.neighbors(i);
            if nbrs.is_empty() {
                continue;
            }
            for &j in nbrs {
                for (acc, &v) in row.iter_mut().zip(&y[j * c..(j + 1) * c]) {
                    *acc += v;
                }
            }
            let inv = 1.0 / nbrs.len() as f64;
            row.iter_mut().for_each(|v| *v *= inv);
        }
        std::mem::swap(&mut y, &mut next);
    }
    y
}

/// Label propagation over `steps` iterations. Queries whose row is all zero
/// fall back to the majority known class (class 0 when nothing is known).
pub fn label_propagation(
    graph: &TextGraph,
    labels: &LabelView,
    query: &[NodeId],
    steps: usize,
) -> Vec<Prediction> {
    let c = graph.num_classes();
    let scores = propagate(graph, labels, steps);
    let fallback = majority_class(labels).unwrap_or(0);
    query
        .iter()
        .map(|&node| {
            let row = scores[node * c..(node + 1) * c].to_vec();
            Prediction {
                node,
                class_index: argmax(&row).unwrap_or(fallback),
                score_vector: Some(row),
            }
        })
        .collect()
}

pub const DEFAULT_LP_STEPS: usize = 10;
