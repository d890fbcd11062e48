//! Episode records and the think-act-observe loop shared by the tool and
//! query modes.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::backend::{ChatBackend, ChatMessage, ChatRequest, Role};
use crate::graph::{ClassId, LabelView, NodeId, TextGraph};
use crate::render::DEFAULT_OBSERVATION_CAP;
use crate::tokens::TokenBudget;
use crate::tool::Action;

/// Consecutive unparseable replies tolerated before giving up.
pub const MAX_CONSECUTIVE_PARSE_FAILURES: usize = 3;
pub const DEFAULT_MAX_STEPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Answered,
    StepLimit,
    TokenLimit,
    ParseFailure,
    BackendError,
}

impl EpisodeStatus {
    pub const ALL: [EpisodeStatus; 5] = [
        Self::Answered,
        Self::TokenLimit,
        Self::ParseFailure,
        Self::StepLimit,
        Self::BackendError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Answered => "answered",
            Self::StepLimit => "step_limit",
            Self::TokenLimit => "token_limit",
            Self::ParseFailure => "parse_failure",
            Self::BackendError => "backend_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnRole {
    System,
    Model,
    Environment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: TurnRole,
    pub text: String,
}

/// Which answer spelling the model used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerForm {
    /// `Answer: [3]`
    Bracketed,
    /// `Answer: 3` or `Answer 3`
    Bare,
    /// `Action 0, answer 3`
    Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceStep {
    Action(Action),
    Query(String),
}

impl std::fmt::Display for TraceStep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Action(a) => write!(f, "{a}"),
            Self::Query(q) => f.write_str(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub target: NodeId,
    pub turns: Vec<Turn>,
    pub actions: Vec<TraceStep>,
    pub predicted: Option<ClassId>,
    pub status: EpisodeStatus,
    pub tokens_in: usize,
    pub tokens_out: usize,
    pub answer_form: Option<AnswerForm>,
    /// Backend error text when `status` is `BackendError`.
    pub error: Option<String>,
}

impl Episode {
    pub fn new(target: NodeId) -> Self {
        Self {
            target,
            turns: Vec::new(),
            actions: Vec::new(),
            predicted: None,
            status: EpisodeStatus::StepLimit,
            tokens_in: 0,
            tokens_out: 0,
            answer_form: None,
            error: None,
        }
    }

    /// Episode produced without a model (baselines).
    pub fn predicted(target: NodeId, class: ClassId) -> Self {
        Self {
            predicted: Some(class),
            status: EpisodeStatus::Answered,
            ..Self::new(target)
        }
    }

    pub fn push(&mut self, role: TurnRole, text: impl Into<String>) {
        self.turns.push(Turn {
            role,
            text: text.into(),
        });
    }

    pub fn model_turns(&self) -> usize {
        self.turns.iter().filter(|t| t.role == TurnRole::Model).count()
    }

    /// Answered with the right class. Every other status counts as wrong.
    pub fn is_correct(&self, truth: Option<ClassId>) -> bool {
        self.status == EpisodeStatus::Answered && self.predicted.is_some() && self.predicted == truth
    }

    /// Chat request carrying the whole history. Harness-authored task text
    /// and environment observations go out as user messages.
    pub fn request(&self, settings: &RequestSettings) -> ChatRequest {
        let messages = self
            .turns
            .iter()
            .map(|t| {
                let role = match t.role {
                    TurnRole::Model => Role::Assistant,
                    TurnRole::System | TurnRole::Environment => Role::User,
                };
                ChatMessage::new(role, t.text.clone())
            })
            .collect();
        ChatRequest {
            messages,
            model_name: settings.model_name.clone(),
            temperature: settings.temperature,
            max_output_tokens: settings.max_output_tokens,
        }
    }

    pub fn request_tokens(&self, budget: &TokenBudget) -> usize {
        budget.count_messages(self.turns.iter().map(|t| t.text.as_str()))
    }

    /// One JSON object per turn, tagged with `tag` (e.g. the seed) and the
    /// target node.
    pub fn write_jsonl(&self, tag: &serde_json::Value, out: &mut impl Write) -> io::Result<()> {
        for (i, turn) in self.turns.iter().enumerate() {
            let line = serde_json::json!({
                "run": tag,
                "node": self.target,
                "turn": i,
                "role": turn.role,
                "text": turn.text,
            });
            serde_json::to_writer(&mut *out, &line)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestSettings {
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: usize,
}

impl Default for RequestSettings {
    fn default() -> Self {
        Self {
            model_name: String::new(),
            temperature: 0.0,
            max_output_tokens: 4096,
        }
    }
}

/// Read-only context shared by every episode of a run.
#[derive(Debug, Clone)]
pub struct EpisodeEnv<'a> {
    pub graph: &'a TextGraph,
    pub labels: &'a LabelView,
    pub budget: &'a TokenBudget,
    pub settings: &'a RequestSettings,
    pub observation_cap: usize,
    /// Seeds prompt subsampling and `sample(...)` without an explicit seed.
    pub seed: u64,
}

impl<'a> EpisodeEnv<'a> {
    pub fn new(graph: &'a TextGraph, labels: &'a LabelView, budget: &'a TokenBudget) -> Self {
        static DEFAULT_SETTINGS: std::sync::OnceLock<RequestSettings> = std::sync::OnceLock::new();
        Self {
            graph,
            labels,
            budget,
            settings: DEFAULT_SETTINGS.get_or_init(RequestSettings::default),
            observation_cap: DEFAULT_OBSERVATION_CAP,
            seed: 0,
        }
    }
}

/// What the environment makes of one model reply.
pub(crate) enum StepOutcome {
    Answer(ClassId, AnswerForm),
    Observe(TraceStep, String),
    Invalid(String),
}

/// Runs think-act-observe turns until an answer, the step bound, the token
/// limit, repeated format failures or a backend error.
pub(crate) fn run_loop(
    backend: &dyn ChatBackend,
    env: &EpisodeEnv<'_>,
    target: NodeId,
    task: String,
    max_steps: usize,
    mut step: impl FnMut(&str) -> StepOutcome,
) -> Episode {
    let mut ep = Episode::new(target);
    ep.push(TurnRole::System, task);
    let mut failures = 0;
    for _ in 0..max_steps.max(1) {
        if env.budget.exceeds(ep.request_tokens(env.budget)) {
            ep.status = EpisodeStatus::TokenLimit;
            return ep;
        }
        let reply = match backend.complete(&ep.request(env.settings)) {
            Ok(c) => c,
            Err(e) => {
                ep.status = EpisodeStatus::BackendError;
                ep.error = Some(e.to_string());
                return ep;
            }
        };
        ep.tokens_in += reply.usage.tokens_in;
        ep.tokens_out += reply.usage.tokens_out;
        ep.push(TurnRole::Model, reply.text.clone());
        match step(&reply.text) {
            StepOutcome::Answer(class, form) => {
                ep.actions.push(TraceStep::Action(Action::Answer(class)));
                ep.predicted = Some(class);
                ep.answer_form = Some(form);
                ep.status = EpisodeStatus::Answered;
                return ep;
            }
            StepOutcome::Observe(trace, observation) => {
                failures = 0;
                ep.actions.push(trace);
                ep.push(TurnRole::Environment, observation);
            }
            StepOutcome::Invalid(reminder) => {
                failures += 1;
                if failures >= MAX_CONSECUTIVE_PARSE_FAILURES {
                    ep.status = EpisodeStatus::ParseFailure;
                    return ep;
                }
                ep.push(TurnRole::Environment, reminder);
            }
        }
    }
    ep.status = EpisodeStatus::StepLimit;
    ep
}

/// Last line of `text` that is not blank, trimmed.
pub fn final_line(text: &str) -> Option<&str> {
    text.lines().map(str::trim).rfind(|l| !l.is_empty())
}
