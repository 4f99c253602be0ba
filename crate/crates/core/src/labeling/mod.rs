//! Four-stage LLM labeling pipeline (identify, generate tasks, select a task,
//! apply labels) over a pluggable chat-completion provider, with a JSON-lines
//! response cache and a deterministic offline mock.

mod cache;
mod http;
mod mock;
mod parse;
mod pipeline;
mod prompts;
mod provider;

pub use cache::{CacheKey, CacheRecord, LabelCache, PromptStage};
pub use http::OpenAiChatProvider;
pub use mock::{Lexicon, MockProvider, MOCK_IDENTIFICATION, MOCK_TASKS};
pub use parse::{parse_label_list, parse_tasks, MAX_LABEL_CHARS};
pub use pipeline::{
    generate_labels, generate_tasks, identify_text, label_corpus, select_task, BatchOptions,
    BatchOutcome, LabelFailure,
};
pub use prompts::PromptTemplates;
pub use provider::{
    complete_with_retry, ChatMessage, ChatProvider, ChatProviderConfig, ChatRequest, ProviderError,
    ProviderFingerprint, RetryPolicy,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("could not parse provider response: {reason}")]
    UnparseableResponse {
        reason: String,
        raw_response: String,
    },
    #[error("provider returned no labels for report `{0}`")]
    EmptyLabelList(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no task matches `{0}`")]
    NoMatch(String),
    #[error("pattern `{pattern}` matches several tasks: {}", candidates.join(", "))]
    AmbiguousMatch {
        pattern: String,
        candidates: Vec<String>,
    },
    #[error("cache {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("prompt template {path}: {source}")]
    Template {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A labeling task proposed by the model during task generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDefinition {
    pub task_id: String,
    pub name: String,
    pub instruction: String,
    /// Who the task is meant to serve, when the model said so.
    pub audience: Option<String>,
}

/// Labels produced for one report under one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedLabelSet {
    pub report_id: String,
    pub task_id: String,
    pub labels: Vec<String>,
    pub raw_response: String,
    pub fingerprint: ProviderFingerprint,
}
