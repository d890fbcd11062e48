//! Token accounting and context-limit checks.
//!
//! Counting is deliberately tokenizer-agnostic. `chars_div_4` counts one
//! token per started run of four characters, `whitespace_words` counts
//! maximal non-whitespace runs, and an external callback lets a backend plug
//! in its own tokenizer.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub type CountFn = Arc<dyn Fn(&str) -> usize + Send + Sync>;

#[derive(Clone, Default)]
pub enum CountingMode {
    #[default]
    CharsDiv4,
    WhitespaceWords,
    /// Backend-supplied counter. Truncation is not defined for it and falls
    /// back to `chars_div_4` boundaries.
    External(CountFn),
}

impl fmt::Debug for CountingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for CountingMode {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::External(a), Self::External(b)) => Arc::ptr_eq(a, b),
            (a, b) => a.name() == b.name(),
        }
    }
}

impl CountingMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::CharsDiv4 => "chars_div_4",
            Self::WhitespaceWords => "whitespace_words",
            Self::External(_) => "external_count_callback",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "chars_div_4" => Some(Self::CharsDiv4),
            "whitespace_words" => Some(Self::WhitespaceWords),
            _ => None,
        }
    }

    pub fn count(&self, text: &str) -> usize {
        match self {
            Self::CharsDiv4 => text.chars().count().div_ceil(4),
            Self::WhitespaceWords => text.split_whitespace().count(),
            Self::External(f) => f(text),
        }
    }
}

pub fn count_tokens(text: &str, mode: &CountingMode) -> usize {
    mode.count(text)
}

/// Keeps the first `keep` tokens of `text`, cut at a token boundary.
pub fn truncate_to_tokens<'a>(text: &'a str, keep: usize, mode: &CountingMode) -> &'a str {
    match mode {
        CountingMode::WhitespaceWords => {
            if keep == 0 {
                return "";
            }
            let mut seen = 0;
            let mut in_word = false;
            for (i, c) in text.char_indices() {
                if c.is_whitespace() {
                    if in_word {
                        seen += 1;
                        if seen == keep {
                            return &text[..i];
                        }
                    }
                    in_word = false;
                } else {
                    in_word = true;
                }
            }
            text
        }
        CountingMode::CharsDiv4 | CountingMode::External(_) => {
            match text.char_indices().nth(keep.saturating_mul(4)) {
                Some((i, _)) => &text[..i],
                None => text,
            }
        }
    }
}

/// Keeps the first `floor(p * count_tokens(text))` tokens. `p = 1` returns
/// the input unchanged and `p = 0` returns the empty string.
pub fn truncate_to_fraction<'a>(text: &'a str, p: f64, mode: &CountingMode) -> &'a str {
    let p = p.clamp(0.0, 1.0);
    let total = mode.count(text);
    let keep = (p * total as f64).floor() as usize;
    if keep >= total {
        return text;
    }
    truncate_to_tokens(text, keep, mode)
}

/// Context window plus the counting rule used to check it.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBudget {
    pub context_limit: usize,
    pub mode: CountingMode,
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            context_limit: 128_000,
            mode: CountingMode::CharsDiv4,
        }
    }
}

impl TokenBudget {
    pub fn new(context_limit: usize, mode: CountingMode) -> Self {
        assert!(context_limit > 0, "context_limit must be positive");
        Self {
            context_limit,
            mode,
        }
    }

    pub fn count(&self, text: &str) -> usize {
        self.mode.count(text)
    }

    /// Tokens of a fully assembled request; each message is counted on its own.
    pub fn count_messages<'a>(&self, texts: impl IntoIterator<Item = &'a str>) -> usize {
        texts.into_iter().map(|t| self.mode.count(t)).sum()
    }

    pub fn exceeds(&self, tokens: usize) -> bool {
        tokens > self.context_limit
    }
}

/// Serializable form of a [`TokenBudget`] for config files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetConfig {
    pub context_limit: usize,
    pub counting_mode: String,
}
