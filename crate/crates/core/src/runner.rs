//! Experiment orchestration: config, query sampling, episode dispatch,
//! aggregation and report files.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::{
    BackendError, ChatBackend, HttpBackend, HttpConfig, RetryPolicy, ScriptedBackend, ScriptedPolicy,
};
use crate::baselines::{label_propagation, predict_majority, predict_random, BaselineError, DEFAULT_LP_STEPS};
use crate::code::run_code_episode;
use crate::episode::{Episode, EpisodeEnv, EpisodeStatus, RequestSettings, DEFAULT_MAX_STEPS};
use crate::graph::{load_graph, load_split, GraphError, LabelView, NodeId, TextGraph};
use crate::prompt::{run_prompt_episode, PromptConfig};
use crate::render::DEFAULT_OBSERVATION_CAP;
use crate::tokens::{CountingMode, TokenBudget};
use crate::tool::{run_tool_episode, ToolVariant};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("query set is empty")]
    EmptyQuery,
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How query nodes are classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Prompt { hops: usize, budget_cap: Option<usize> },
    Tool(ToolVariant),
    Code,
    Random,
    Majority,
    LabelPropagation { steps: usize },
}

impl Mode {
    pub fn uses_backend(self) -> bool {
        matches!(self, Mode::Prompt { .. } | Mode::Tool(_) | Mode::Code)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Mode::Prompt { hops, budget_cap } => {
                let cfg = PromptConfig { hops, budget_cap, seed: 0 };
                f.write_str(&cfg.display_name())
            }
            Mode::Tool(v) => f.write_str(v.display_name()),
            Mode::Code => f.write_str("Graph-as-Code"),
            Mode::Random => f.write_str("Random"),
            Mode::Majority => f.write_str("Majority"),
            Mode::LabelPropagation { .. } => f.write_str("Label Propagation"),
        }
    }
}

fn default_mode() -> String {
    "prompt".into()
}
fn default_backend() -> String {
    "scripted".into()
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_episodes() -> usize {
    1000
}
fn default_max_steps() -> usize {
    DEFAULT_MAX_STEPS
}
fn default_lp_steps() -> usize {
    DEFAULT_LP_STEPS
}
fn default_context_limit() -> usize {
    128_000
}
fn default_counting_mode() -> String {
    "chars_div_4".into()
}
fn default_observation_cap() -> usize {
    DEFAULT_OBSERVATION_CAP
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_max_output_tokens() -> usize {
    4096
}
fn default_max_retries() -> u32 {
    3
}
fn default_permits() -> usize {
    8
}
fn default_timeout() -> u64 {
    300
}

/// One experiment, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub splits: PathBuf,
    /// Name used in outputs; defaults to the dataset file stem.
    #[serde(default)]
    pub dataset_name: Option<String>,

    /// prompt | tool | tool-plus | code | random | majority | lp
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default)]
    pub hops: usize,
    #[serde(default)]
    pub budget_cap: Option<usize>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_lp_steps")]
    pub lp_steps: usize,

    /// scripted | http
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Scripted policy: a path to a JSON file or the policy object itself.
    #[serde(default)]
    pub policy: Option<Value>,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub model_name: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: usize,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_permits")]
    pub permits: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,

    #[serde(default = "default_context_limit")]
    pub context_limit: usize,
    #[serde(default = "default_counting_mode")]
    pub counting_mode: String,
    #[serde(default = "default_observation_cap")]
    pub observation_cap: usize,

    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_episodes")]
    pub episodes_per_seed: usize,
    /// Worker threads; 0 uses one per core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "yes")]
    pub write_transcripts: bool,

    /// Grid axes: edge_deletion | feature_truncation | label_deletion.
    #[serde(default)]
    pub x_axis: Option<String>,
    #[serde(default)]
    pub x_rates: Vec<f64>,
    #[serde(default)]
    pub y_axis: Option<String>,
    #[serde(default)]
    pub y_rates: Vec<f64>,
}

fn yes() -> bool {
    true
}

/// Applies `key=value` onto a config document. The value is read as JSON
/// when it parses, otherwise as a plain string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), RunError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| RunError::Config(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let map = doc
        .as_object_mut()
        .ok_or_else(|| RunError::Config("config must be a JSON object".into()))?;
    map.insert(key.trim().to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Reads a config file, applies overrides, and resolves relative dataset,
    /// splits and policy paths against the file's directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut doc: Value = serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: Self = serde_json::from_value(doc)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        cfg.dataset = resolve(&cfg.dataset);
        cfg.splits = resolve(&cfg.splits);
        if let Some(Value::String(p)) = &cfg.policy {
            cfg.policy = Some(Value::String(resolve(Path::new(p)).display().to_string()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.seeds.is_empty() {
            return Err(RunError::Config("seeds must be non-empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(RunError::Config("seeds must be distinct".into()));
        }
        if self.episodes_per_seed == 0 {
            return Err(RunError::Config("episodes_per_seed must be at least 1".into()));
        }
        if self.context_limit == 0 {
            return Err(RunError::Config("context_limit must be positive".into()));
        }
        if self.budget_cap == Some(0) {
            return Err(RunError::Config("budget_cap must be positive".into()));
        }
        self.mode()?;
        self.counting()?;
        Ok(())
    }

    pub fn mode(&self) -> Result<Mode, RunError> {
        Ok(match self.mode.as_str() {
            "prompt" => Mode::Prompt {
                hops: self.hops,
                budget_cap: self.budget_cap,
            },
            "tool" => Mode::Tool(ToolVariant::Basic),
            "tool-plus" | "tool_plus" => Mode::Tool(ToolVariant::Plus),
            "code" => Mode::Code,
            "random" => Mode::Random,
            "majority" => Mode::Majority,
            "lp" | "label_propagation" => Mode::LabelPropagation {
                steps: self.lp_steps,
            },
            other => return Err(RunError::Config(format!("unknown mode {other:?}"))),
        })
    }

    pub fn counting(&self) -> Result<CountingMode, RunError> {
        CountingMode::from_name(&self.counting_mode)
            .ok_or_else(|| RunError::Config(format!("unknown counting_mode {:?}", self.counting_mode)))
    }

    pub fn dataset_name(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| {
            self.dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }

    pub fn build_backend(&self) -> Result<Arc<dyn ChatBackend>, RunError> {
        match self.backend.as_str() {
            "scripted" => {
                let policy = match &self.policy {
                    None => return Err(RunError::Config("scripted backend needs a policy".into())),
                    Some(Value::String(path)) => ScriptedPolicy::load(Path::new(path))?,
                    Some(v) => serde_json::from_value(v.clone())
                        .map_err(|e| RunError::Config(format!("policy: {e}")))?,
                };
                Ok(Arc::new(ScriptedBackend::new(policy)))
            }
            "http" => {
                let defaults = HttpConfig::default();
                let config = HttpConfig {
                    endpoint_url: self.endpoint_url.clone().unwrap_or(defaults.endpoint_url),
                    model_name: self.model_name.clone().unwrap_or(defaults.model_name),
                    api_key_env: match self.api_key_env.as_deref() {
                        Some("") => None,
                        Some(v) => Some(v.to_string()),
                        None => defaults.api_key_env,
                    },
                    timeout: Duration::from_secs(self.timeout_secs),
                    retry: RetryPolicy {
                        max_retries: self.max_retries,
                        ..RetryPolicy::default()
                    },
                    permits: self.permits,
                    counting: self.counting()?,
                };
                Ok(Arc::new(HttpBackend::new(config)?))
            }
            other => Err(RunError::Config(format!("unknown backend {other:?}"))),
        }
    }
}

/// Uniform sample of `min(n, |Q|)` query nodes, ascending.
pub fn sample_query_nodes(labels: &LabelView, n: usize, seed: u64) -> Result<Vec<NodeId>, RunError> {
    let query: Vec<NodeId> = labels.query().iter().copied().collect();
    if query.is_empty() {
        return Err(RunError::EmptyQuery);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<NodeId> = sample(&mut rng, query.len(), n.min(query.len()))
        .into_iter()
        .map(|i| query[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Everything needed to run episodes, independent of which graph copy they
/// run on.
pub struct Harness {
    pub mode: Mode,
    pub backend: Option<Arc<dyn ChatBackend>>,
    pub budget: TokenBudget,
    pub settings: RequestSettings,
    pub observation_cap: usize,
    pub max_steps: usize,
    pool: rayon::ThreadPool,
}

impl Harness {
    pub fn new(mode: Mode, backend: Option<Arc<dyn ChatBackend>>, workers: usize) -> Result<Self, RunError> {
        if mode.uses_backend() && backend.is_none() {
            return Err(RunError::Config(format!("mode {mode} needs a backend")));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| RunError::Config(format!("worker pool: {e}")))?;
        Ok(Self {
            mode,
            backend,
            budget: TokenBudget::default(),
            settings: RequestSettings::default(),
            observation_cap: DEFAULT_OBSERVATION_CAP,
            max_steps: DEFAULT_MAX_STEPS,
            pool,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, RunError> {
        let mode = cfg.mode()?;
        let backend = if mode.uses_backend() {
            Some(cfg.build_backend()?)
        } else {
            None
        };
        let mut h = Self::new(mode, backend, cfg.workers)?;
        h.budget = TokenBudget::new(cfg.context_limit, cfg.counting()?);
        h.settings = RequestSettings {
            model_name: cfg.model_name.clone().unwrap_or_default(),
            temperature: cfg.temperature,
            max_output_tokens: cfg.max_output_tokens,
        };
        h.observation_cap = cfg.observation_cap;
        h.max_steps = cfg.max_steps;
        Ok(h)
    }

    /// One episode per node, in input order.
    pub fn run(
        &self,
        graph: &TextGraph,
        labels: &LabelView,
        nodes: &[NodeId],
        seed: u64,
    ) -> Result<Vec<Episode>, RunError> {
        let predictions = match self.mode {
            Mode::Random => Some(predict_random(graph.num_classes(), nodes, seed)?),
            Mode::Majority => Some(predict_majority(labels, nodes)?),
            Mode::LabelPropagation { steps } => Some(label_propagation(graph, labels, nodes, steps)),
            _ => None,
        };
        if let Some(preds) = predictions {
            return Ok(preds
                .into_iter()
                .map(|p| Episode::predicted(p.node, p.class_index))
                .collect());
        }
        let backend = self.backend.as_deref().expect("checked in Harness::new");
        let env = EpisodeEnv {
            graph,
            labels,
            budget: &self.budget,
            settings: &self.settings,
            observation_cap: self.observation_cap,
            seed,
        };
        let one = |node: NodeId| -> Episode {
            match self.mode {
                Mode::Prompt { hops, budget_cap } => {
                    let cfg = PromptConfig { hops, budget_cap, seed };
                    run_prompt_episode(backend, &env, node, &cfg).unwrap_or_else(|e| {
                        let mut ep = Episode::new(node);
                        ep.status = EpisodeStatus::BackendError;
                        ep.error = Some(e.to_string());
                        ep
                    })
                }
                Mode::Tool(variant) => run_tool_episode(backend, &env, node, variant, self.max_steps),
                Mode::Code => run_code_episode(backend, &env, node, self.max_steps),
                _ => unreachable!("baselines handled above"),
            }
        };
        Ok(self.pool.install(|| nodes.par_iter().map(|&n| one(n)).collect()))
    }
}

/// Outcome counts for one seed (or one grid cell and seed).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub n: usize,
    pub correct: usize,
    /// Indexed like [`EpisodeStatus::ALL`].
    pub status_counts: [usize; 5],
    pub tokens_in: usize,
    pub tokens_out: usize,
}

impl SeedSummary {
    pub fn from_episodes(seed: u64, graph: &TextGraph, episodes: &[Episode]) -> Self {
        let mut s = Self {
            seed,
            n: episodes.len(),
            ..Self::default()
        };
        for ep in episodes {
            if ep.is_correct(graph.label(ep.target)) {
                s.correct += 1;
            }
            let idx = EpisodeStatus::ALL
                .iter()
                .position(|&st| st == ep.status)
                .expect("status listed in ALL");
            s.status_counts[idx] += 1;
            s.tokens_in += ep.tokens_in;
            s.tokens_out += ep.tokens_out;
        }
        s
    }

    /// Fraction correct; failures count as wrong.
    pub fn accuracy(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.correct as f64 / self.n as f64
        }
    }

    pub fn count(&self, status: EpisodeStatus) -> usize {
        let idx = EpisodeStatus::ALL.iter().position(|&s| s == status).unwrap_or(0);
        self.status_counts[idx]
    }
}

/// Mean and sample (n-1) standard deviation; the deviation of one value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct Report {
    pub dataset: String,
    pub mode: String,
    pub seeds: Vec<SeedSummary>,
    /// Accuracy as a fraction.
    pub mean: f64,
    pub stddev: f64,
    pub wall_clock: Duration,
}

impl Report {
    pub fn new(dataset: String, mode: String, seeds: Vec<SeedSummary>, wall_clock: Duration) -> Self {
        let accs: Vec<f64> = seeds.iter().map(SeedSummary::accuracy).collect();
        let (mean, stddev) = mean_std(&accs);
        Self {
            dataset,
            mode,
            seeds,
            mean,
            stddev,
            wall_clock,
        }
    }

    pub fn status_total(&self, status: EpisodeStatus) -> usize {
        self.seeds.iter().map(|s| s.count(status)).sum()
    }

    /// Percent "mean±std" to two decimals.
    pub fn cell(&self) -> String {
        format!("{:.2}±{:.2}", self.mean * 100.0, self.stddev * 100.0)
    }

    pub fn write_csv(&self, out: impl Write) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["dataset", "mode", "seed", "accuracy", "n"];
        header.extend(EpisodeStatus::ALL.iter().map(|s| s.as_str()));
        header.extend(["tokens_in", "tokens_out", "stddev"]);
        w.write_record(&header)?;
        for s in &self.seeds {
            let mut row = vec![
                self.dataset.clone(),
                self.mode.clone(),
                s.seed.to_string(),
                format!("{:.6}", s.accuracy()),
                s.n.to_string(),
            ];
            row.extend(s.status_counts.iter().map(|c| c.to_string()));
            row.extend([s.tokens_in.to_string(), s.tokens_out.to_string(), String::new()]);
            w.write_record(&row)?;
        }
        let mut all = vec![
            self.dataset.clone(),
            self.mode.clone(),
            "ALL".into(),
            format!("{:.6}", self.mean),
            self.seeds.iter().map(|s| s.n).sum::<usize>().to_string(),
        ];
        all.extend(EpisodeStatus::ALL.iter().map(|&st| self.status_total(st).to_string()));
        all.extend([
            self.seeds.iter().map(|s| s.tokens_in).sum::<usize>().to_string(),
            self.seeds.iter().map(|s| s.tokens_out).sum::<usize>().to_string(),
            format!("{:.6}", self.stddev),
        ]);
        w.write_record(&all)?;
        w.flush()?;
        Ok(())
    }

    pub fn markdown(&self) -> String {
        let mut md = format!(
            "| Mode | {} |\n|---|---|\n| {} | {} |\n\n",
            self.dataset,
            self.mode,
            self.cell()
        );
        md.push_str("| Status | Episodes |\n|---|---|\n");
        for st in EpisodeStatus::ALL {
            md.push_str(&format!("| {} | {} |\n", st.as_str(), self.status_total(st)));
        }
        md.push_str(&format!(
            "\nTokens in: {}, tokens out: {}, seeds: {}, wall-clock: {:.1}s\n",
            self.seeds.iter().map(|s| s.tokens_in).sum::<usize>(),
            self.seeds.iter().map(|s| s.tokens_out).sum::<usize>(),
            self.seeds.len(),
            self.wall_clock.as_secs_f64()
        ));
        md
    }
}

/// Loads the dataset and splits named by a config.
pub fn load_inputs(cfg: &ExperimentConfig) -> Result<(TextGraph, LabelView), RunError> {
    let graph = load_graph(&cfg.dataset)?;
    let split = load_split(&cfg.splits)?;
    let labels = LabelView::from_split(&graph, &split)?;
    Ok((graph, labels))
}

pub(crate) fn write_transcripts(
    path: &Path,
    tag: &Value,
    episodes: &[Episode],
) -> Result<(), RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for ep in episodes {
        ep.write_jsonl(tag, &mut out).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn write_episodes_csv(path: &Path, graph: &TextGraph, runs: &[(u64, Vec<Episode>)]) -> Result<(), RunError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| RunError::Io {
        path: path.display().to_string(),
        source: e.into(),
    };
    w.write_record([
        "seed", "node", "truth", "predicted", "status", "correct", "steps", "tokens_in", "tokens_out",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<usize>| v.map(|c| c.to_string()).unwrap_or_default();
    for (seed, episodes) in runs {
        for ep in episodes {
            let truth = graph.label(ep.target);
            w.write_record([
                seed.to_string(),
                ep.target.to_string(),
                opt(truth),
                opt(ep.predicted),
                ep.status.as_str().to_string(),
                u8::from(ep.is_correct(truth)).to_string(),
                ep.model_turns().to_string(),
                ep.tokens_in.to_string(),
                ep.tokens_out.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Runs every seed and writes `results.csv`, `episodes.csv`, `report.md` and
/// `transcripts/seed_<s>.jsonl` under the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, RunError> {
    cfg.validate()?;
    let started = Instant::now();
    let (graph, labels) = load_inputs(cfg)?;
    let harness = Harness::from_config(cfg)?;
    let dataset = cfg.dataset_name();
    let mode_name = harness.mode.to_string();

    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let nodes = sample_query_nodes(&labels, cfg.episodes_per_seed, seed)?;
        log::info!("{dataset} / {mode_name}: seed {seed}, {} episodes", nodes.len());
        let episodes = harness.run(&graph, &labels, &nodes, seed)?;
        runs.push((seed, episodes));
    }
    let summaries: Vec<SeedSummary> = runs
        .iter()
        .map(|(seed, eps)| SeedSummary::from_episodes(*seed, &graph, eps))
        .collect();
    let report = Report::new(dataset.clone(), mode_name.clone(), summaries, started.elapsed());

    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(io_err(out))?;
    if cfg.write_transcripts {
        for (seed, episodes) in &runs {
            let tag = serde_json::json!({"dataset": dataset, "mode": mode_name, "seed": seed});
            write_transcripts(&out.join("transcripts").join(format!("seed_{seed}.jsonl")), &tag, episodes)?;
        }
    }
    write_episodes_csv(&out.join("episodes.csv"), &graph, &runs)?;
    let results = out.join("results.csv");
    let file = File::create(&results).map_err(io_err(&results))?;
    report.write_csv(BufWriter::new(file)).map_err(|e| RunError::Io {
        path: results.display().to_string(),
        source: e.into(),
    })?;
    let md = out.join("report.md");
    fs::write(&md, report.markdown()).map_err(io_err(&md))?;
    Ok(report)
}
