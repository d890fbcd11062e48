//! Node classification on text-attributed graphs through a chat model, with
//! three interaction modes (one-shot prompt, tool calls, query language),
//! classical baselines and an ablation grid.

pub mod ablation;
pub mod backend;
pub mod baselines;
pub mod code;
pub mod dsl;
pub mod episode;
pub mod graph;
pub mod prompt;
pub mod render;
pub mod runner;
pub mod tokens;
pub mod tool;
