//! Model access: chat completion, embeddings and reranker scoring.
//!
//! Every model is reached through a backend trait ([`ChatBackend`],
//! [`EmbedBackend`], [`RerankBackend`]). Backends are either HTTP clients
//! speaking the OpenAI-style wire format ([`http`]) or in-process scripted
//! fixtures ([`scripted`]). The wrappers [`ChatClient`], [`Embedder`] and
//! [`Reranker`] add caching, retries, normalization and usage accounting on
//! top of any backend.

mod cache;
mod chat;
pub mod cost;
mod embed;
pub mod grammar;
pub mod http;
mod rerank;
pub mod scripted;
mod usage;

use serde::{Deserialize, Serialize};

pub use cache::ResponseCache;
pub use chat::{CachePolicy, ChatClient, RetryPolicy};
pub use embed::{cosine, Embedder};
pub use rerank::{RerankDoc, Reranker};
pub use usage::{CallUsage, UsageMeter, UsageRecord, UsageRole};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("unexpected response format: {0}")]
    Format(String),
    #[error("provider misconfigured: {0}")]
    Config(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("scripted provider has no response for prompt: {0}")]
    Unscripted(String),
}

impl ProviderError {
    /// Failures worth retrying with backoff.
    pub fn is_transient(&self) -> bool {
        match self {
            ProviderError::Transport(_) => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Chat,
    Embedding,
    Rerank,
}

/// Static description of one configured model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key, if any.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub price_in_per_mtok: f64,
    #[serde(default)]
    pub price_out_per_mtok: f64,
}

impl ProviderSpec {
    pub fn new(kind: ProviderKind, endpoint: &str, model_name: &str) -> Self {
        Self {
            kind,
            endpoint: endpoint.to_string(),
            model_name: model_name.to_string(),
            auth_env: None,
            price_in_per_mtok: 0.0,
            price_out_per_mtok: 0.0,
        }
    }

    /// Spec for an in-process scripted provider.
    pub fn scripted(kind: ProviderKind, name: &str) -> Self {
        Self::new(kind, &format!("scripted://{name}"), name)
    }

    pub fn with_prices(mut self, input: f64, output: f64) -> Self {
        self.price_in_per_mtok = input;
        self.price_out_per_mtok = output;
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(self.price_in_per_mtok >= 0.0 && self.price_out_per_mtok >= 0.0) {
            return Err(ProviderError::Config(format!(
                "negative price for model `{}`",
                self.model_name
            )));
        }
        let well_formed = ["http://", "https://", "scripted://"]
            .iter()
            .any(|p| self.endpoint.starts_with(p) && self.endpoint.len() > p.len());
        if !well_formed {
            return Err(ProviderError::Config(format!("malformed endpoint `{}`", self.endpoint)));
        }
        Ok(())
    }

    pub fn pricing(&self) -> cost::Pricing {
        cost::Pricing {
            input_per_mtok: self.price_in_per_mtok,
            output_per_mtok: self.price_out_per_mtok,
        }
    }
}

/// Decoding parameters sent with every chat request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub sampling_enabled: bool,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self { temperature: 0.0, top_p: 0.9, max_tokens: 8192, sampling_enabled: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input: u64,
    pub output: u64,
}

/// Raw backend answer. `usage` is `None` when the provider did not report
/// token counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Option<TokenUsage>,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, ProviderError>;
}

pub trait EmbedBackend: Send + Sync {
    /// Raw (not necessarily normalized) vectors, one per input.
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

pub trait RerankBackend: Send + Sync {
    fn score_batch(&self, query: &str, docs: &[RerankDoc]) -> Result<Vec<f64>, ProviderError>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_generation_params() {
        let p = GenerationParams::default();
        assert_eq!(p.temperature, 0.0);
        assert_eq!(p.top_p, 0.9);
        assert_eq!(p.max_tokens, 8192);
        assert!(!p.sampling_enabled);
    }

    #[test]
    fn spec_validation() {
        let ok = ProviderSpec::new(ProviderKind::Chat, "https://api.example.com/v1", "m");
        assert!(ok.validate().is_ok());
        let bad = ProviderSpec::new(ProviderKind::Chat, "api.example.com", "m");
        assert!(bad.validate().is_err());
        let neg = ok.clone().with_prices(-1.0, 0.0);
        assert!(neg.validate().is_err());
    }
}
