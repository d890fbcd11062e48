//! Feature, edge and label ablations and the 2D accuracy grids built on them.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::episode::EpisodeStatus;
use crate::graph::{LabelView, NodeId, TextGraph};
use crate::runner::{
    io_err, load_inputs, mean_std, sample_query_nodes, write_transcripts, ExperimentConfig, Harness,
    RunError, SeedSummary,
};
use crate::tokens::{truncate_to_fraction, CountingMode};

/// One perturbation axis. Every axis is parameterised by a removal rate in
/// `[0, 1]`; for features the kept fraction is `1 - rate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    FeatureTruncation,
    EdgeDeletion,
    LabelDeletion,
}

impl AxisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FeatureTruncation => "feature_truncation",
            Self::EdgeDeletion => "edge_deletion",
            Self::LabelDeletion => "label_deletion",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Self::FeatureTruncation => 0x6665_6174,
            Self::EdgeDeletion => 0x6564_6765,
            Self::LabelDeletion => 0x6c61_6265,
        }
    }

    /// Perturbation removing `rate` along this axis.
    pub fn at(self, rate: f64, seed: u64) -> Perturbation {
        let kind = match self {
            Self::FeatureTruncation => PerturbationKind::FeatureTruncation { keep: 1.0 - rate },
            Self::EdgeDeletion => PerturbationKind::EdgeDeletion { rate },
            Self::LabelDeletion => PerturbationKind::LabelDeletion { rate },
        };
        Perturbation { kind, seed }
    }
}

impl fmt::Display for AxisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AxisKind {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "feature_truncation" | "features" => Ok(Self::FeatureTruncation),
            "edge_deletion" | "edges" => Ok(Self::EdgeDeletion),
            "label_deletion" | "labels" => Ok(Self::LabelDeletion),
            other => Err(RunError::Config(format!("unknown axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Keep this fraction of each node's text tokens.
    FeatureTruncation { keep: f64 },
    EdgeDeletion { rate: f64 },
    LabelDeletion { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub seed: u64,
}

fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `floor(rate * total)`, tolerant of representation error such as
/// `0.7 * 10 = 6.999...`.
fn removal_count(rate: f64, total: usize) -> usize {
    let exact = rate.clamp(0.0, 1.0) * total as f64;
    ((exact + 1e-9).floor() as usize).min(total)
}

/// Seeded order in which an axis removes its items; deleting a prefix keeps
/// deletions nested across rates.
pub fn removal_order<T>(mut items: Vec<T>, axis: AxisKind, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, axis.tag()));
    items.shuffle(&mut rng);
    items
}

/// Undirected edges removed by an edge deletion at `rate`.
pub fn removed_edges(graph: &TextGraph, rate: f64, seed: u64) -> Vec<(NodeId, NodeId)> {
    let order = removal_order(graph.edges(), AxisKind::EdgeDeletion, seed);
    let k = removal_count(rate, order.len());
    order.into_iter().take(k).collect()
}

/// Known nodes whose labels a label deletion at `rate` hides.
pub fn removed_labels(labels: &LabelView, rate: f64, seed: u64) -> Vec<NodeId> {
    let known: Vec<NodeId> = labels.known().keys().copied().collect();
    let order = removal_order(known, AxisKind::LabelDeletion, seed);
    let k = removal_count(rate, order.len());
    order.into_iter().take(k).collect()
}

/// Derived copies; the inputs are not modified. `mode` is the token
/// counting rule used by feature truncation.
pub fn apply_perturbation(
    graph: &TextGraph,
    labels: &LabelView,
    perturbation: &Perturbation,
    mode: &CountingMode,
) -> (TextGraph, LabelView) {
    match perturbation.kind {
        PerturbationKind::FeatureTruncation { keep } => {
            let keep = keep.clamp(0.0, 1.0);
            let g = graph.map_features(|_, text| truncate_to_fraction(text, keep, mode).to_string());
            (g, labels.clone())
        }
        PerturbationKind::EdgeDeletion { rate } => {
            let removed: std::collections::HashSet<(NodeId, NodeId)> =
                removed_edges(graph, rate, perturbation.seed).into_iter().collect();
            let kept = graph.edges().into_iter().filter(|e| !removed.contains(e));
            (graph.with_edges(kept), labels.clone())
        }
        PerturbationKind::LabelDeletion { rate } => {
            let removed: std::collections::HashSet<NodeId> =
                removed_labels(labels, rate, perturbation.seed).into_iter().collect();
            (graph.clone(), labels.retain_known(|n| !removed.contains(&n)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCell {
    pub x_rate: f64,
    pub y_rate: f64,
    /// One entry per seed, in config order.
    pub seeds: Vec<SeedSummary>,
}

impl GridCell {
    pub fn mean_std(&self) -> (f64, f64) {
        let accs: Vec<f64> = self.seeds.iter().map(SeedSummary::accuracy).collect();
        mean_std(&accs)
    }

    pub fn total(&self, status: EpisodeStatus) -> usize {
        self.seeds.iter().map(|s| s.count(status)).sum()
    }

    /// More than half of the cell's episodes hit the context limit.
    pub fn is_token_limited(&self) -> bool {
        let n: usize = self.seeds.iter().map(|s| s.n).sum();
        n > 0 && 2 * self.total(EpisodeStatus::TokenLimit) > n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResult {
    pub dataset: String,
    pub mode: String,
    pub x_axis: AxisKind,
    pub y_axis: AxisKind,
    /// Row-major over `(x_rate, y_rate)`.
    pub cells: Vec<GridCell>,
}

impl GridResult {
    /// Per-seed rows followed by a `seed=ALL` row for every cell.
    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "dataset",
            "mode",
            "x_kind",
            "x_rate",
            "y_kind",
            "y_rate",
            "seed",
            "accuracy",
            "n",
            "answered",
            "token_limit",
            "parse_failure",
            "step_limit",
            "backend_error",
            "stddev",
            "flag",
        ])?;
        let prefix = |cell: &GridCell| {
            vec![
                self.dataset.clone(),
                self.mode.clone(),
                self.x_axis.to_string(),
                cell.x_rate.to_string(),
                self.y_axis.to_string(),
                cell.y_rate.to_string(),
            ]
        };
        let statuses = |count: &dyn Fn(EpisodeStatus) -> usize| {
            [
                EpisodeStatus::Answered,
                EpisodeStatus::TokenLimit,
                EpisodeStatus::ParseFailure,
                EpisodeStatus::StepLimit,
                EpisodeStatus::BackendError,
            ]
            .map(|s| count(s).to_string())
        };
        for cell in &self.cells {
            for s in &cell.seeds {
                let mut row = prefix(cell);
                row.extend([s.seed.to_string(), format!("{:.6}", s.accuracy()), s.n.to_string()]);
                row.extend(statuses(&|st| s.count(st)));
                row.extend([String::new(), String::new()]);
                w.write_record(&row)?;
            }
            let (mean, std) = cell.mean_std();
            let mut row = prefix(cell);
            row.extend([
                "ALL".to_string(),
                format!("{mean:.6}"),
                cell.seeds.iter().map(|s| s.n).sum::<usize>().to_string(),
            ]);
            row.extend(statuses(&|st| cell.total(st)));
            row.extend([
                format!("{std:.6}"),
                if cell.is_token_limited() { "TokenLimit".into() } else { String::new() },
            ]);
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_rates(name: &str, rates: &[f64]) -> Result<(), RunError> {
    if rates.is_empty() {
        return Err(RunError::Config(format!("{name} must be non-empty")));
    }
    if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(RunError::Config(format!("{name} must lie in [0, 1]")));
    }
    if rates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RunError::Config(format!("{name} must be strictly ascending")));
    }
    Ok(())
}

/// Axes and rates of a grid config, validated.
pub fn grid_axes(cfg: &ExperimentConfig) -> Result<(AxisKind, AxisKind), RunError> {
    let x: AxisKind = cfg
        .x_axis
        .as_deref()
        .ok_or_else(|| RunError::Config("grid needs x_axis".into()))?
        .parse()?;
    let y: AxisKind = cfg
        .y_axis
        .as_deref()
        .ok_or_else(|| RunError::Config("grid needs y_axis".into()))?
        .parse()?;
    if x == y {
        return Err(RunError::Config("grid axes must differ".into()));
    }
    check_rates("x_rates", &cfg.x_rates)?;
    check_rates("y_rates", &cfg.y_rates)?;
    Ok((x, y))
}

/// Query nodes are sampled once per seed and reused in every cell. Writes
/// `heatmaps/<dataset>_<mode>_<x>_<y>.csv` and, when enabled, per-cell
/// transcripts under `transcripts/grid/`.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<(GridResult, PathBuf), RunError> {
    cfg.validate()?;
    let (x_axis, y_axis) = grid_axes(cfg)?;
    let started = Instant::now();
    let (graph, labels) = load_inputs(cfg)?;
    let harness = Harness::from_config(cfg)?;
    let counting = cfg.counting()?;
    let dataset = cfg.dataset_name();
    let mode = harness.mode.to_string();

    let samples = cfg
        .seeds
        .iter()
        .map(|&seed| sample_query_nodes(&labels, cfg.episodes_per_seed, seed))
        .collect::<Result<Vec<_>, _>>()?;

    let mut cells = Vec::with_capacity(cfg.x_rates.len() * cfg.y_rates.len());
    for &x_rate in &cfg.x_rates {
        for &y_rate in &cfg.y_rates {
            let mut seeds = Vec::with_capacity(cfg.seeds.len());
            for (&seed, nodes) in cfg.seeds.iter().zip(&samples) {
                let (g1, l1) = apply_perturbation(&graph, &labels, &x_axis.at(x_rate, seed), &counting);
                let (g2, l2) = apply_perturbation(&g1, &l1, &y_axis.at(y_rate, seed), &counting);
                let episodes = harness.run(&g2, &l2, nodes, seed)?;
                if cfg.write_transcripts && harness.mode.uses_backend() {
                    let tag = serde_json::json!({
                        "dataset": dataset, "mode": mode, "seed": seed,
                        x_axis.as_str(): x_rate, y_axis.as_str(): y_rate,
                    });
                    let path = cfg
                        .output_dir
                        .join("transcripts")
                        .join("grid")
                        .join(format!("x{x_rate}_y{y_rate}_seed_{seed}.jsonl"));
                    write_transcripts(&path, &tag, &episodes)?;
                }
                seeds.push(SeedSummary::from_episodes(seed, &graph, &episodes));
            }
            log::info!("cell ({x_axis}={x_rate}, {y_axis}={y_rate}) done");
            cells.push(GridCell { x_rate, y_rate, seeds });
        }
    }
    let result = GridResult {
        dataset: dataset.clone(),
        mode: mode.clone(),
        x_axis,
        y_axis,
        cells,
    };

    let dir = cfg.output_dir.join("heatmaps");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let slug = mode_slug(&mode);
    let path = dir.join(format!("{dataset}_{slug}_{x_axis}_{y_axis}.csv"));
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut out = BufWriter::new(file);
    result.write_csv(&mut out).map_err(|e| RunError::Io {
        path: path.display().to_string(),
        source: e.into(),
    })?;
    out.flush().map_err(io_err(&path))?;
    log::info!("grid finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok((result, path))
}

/// File-name form of a mode name, e.g. "GraphTool+" -> "graphtool_plus".
fn mode_slug(mode: &str) -> String {
    let mut slug = String::new();
    for c in mode.replace('+', " plus").chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.ends_with('_') {
            slug.push('_');
        }
    }
    slug.trim_matches('_').to_string()
}
