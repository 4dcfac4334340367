//! OpenAI-style HTTP backends.
//!
//! Wire formats (all `POST`, JSON bodies, `Authorization: Bearer $KEY` when
//! the provider has an `auth_env`):
//!
//! | backend  | path                 | request                                                           | response                                                                     |
//! |----------|----------------------|-------------------------------------------------------------------|------------------------------------------------------------------------------|
//! | chat     | `/chat/completions`  | `model`, `messages:[{role:"user",content}]`, `temperature`, `top_p`, `max_tokens` | `choices[0].message.content`, optional `usage.prompt_tokens` / `usage.completion_tokens` |
//! | embed    | `/embeddings`        | `model`, `input:[text…]`                                          | `data:[{index, embedding:[f32…]}]`                                           |
//! | rerank   | `/rerank`            | `model`, `query`, `documents:[text…]`                             | `results:[{index, relevance_score}]`                                         |
//!
//! When `sampling_enabled` is false the request carries `temperature: 0`
//! regardless of the configured temperature.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    ChatBackend, Completion, EmbedBackend, GenerationParams, ProviderError, ProviderSpec,
    RerankBackend, RerankDoc, TokenUsage,
};

struct Transport {
    client: reqwest::blocking::Client,
    base: String,
    model: String,
    api_key: Option<String>,
}

impl Transport {
    fn new(spec: &ProviderSpec, timeout: Duration) -> Result<Self, ProviderError> {
        spec.validate()?;
        let api_key = match &spec.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ProviderError::Config(format!("environment variable `{var}` is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self {
            client,
            base: spec.endpoint.trim_end_matches('/').to_string(),
            model: spec.model_name.clone(),
            api_key,
        })
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: &serde_json::Value) -> Result<T, ProviderError> {
        let mut req = self.client.post(format!("{}{path}", self.base)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status { status: status.as_u16(), message: error_message(&text) });
        }
        serde_json::from_str(&text).map_err(|e| ProviderError::Format(e.to_string()))
    }
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<serde_json::Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message")
                .or_else(|| v.get("error"))
                .or_else(|| v.get("message"))
                .and_then(|m| m.as_str().map(str::to_string))
        })
        .unwrap_or_else(|| body.chars().take(500).collect())
}

pub struct HttpChat {
    transport: Transport,
}

impl HttpChat {
    pub fn new(spec: &ProviderSpec) -> Result<Self, ProviderError> {
        Ok(Self { transport: Transport::new(spec, Duration::from_secs(300))? })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

pub(crate) fn chat_request_body(model: &str, prompt: &str, params: &GenerationParams) -> serde_json::Value {
    let temperature = if params.sampling_enabled { params.temperature } else { 0.0 };
    json!({
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": temperature,
        "top_p": params.top_p,
        "max_tokens": params.max_tokens,
    })
}

impl ChatBackend for HttpChat {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, ProviderError> {
        let body = chat_request_body(&self.transport.model, prompt, params);
        let resp: ChatResponse = self.transport.post("/chat/completions", &body)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Format("no choices in completion".into()))?;
        let usage = resp.usage.map(|u| TokenUsage { input: u.prompt_tokens, output: u.completion_tokens });
        Ok(Completion { text, usage })
    }
}

pub struct HttpEmbedder {
    transport: Transport,
}

impl HttpEmbedder {
    pub fn new(spec: &ProviderSpec) -> Result<Self, ProviderError> {
        Ok(Self { transport: Transport::new(spec, Duration::from_secs(120))? })
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedItem>,
}

#[derive(Deserialize)]
struct EmbedItem {
    index: usize,
    embedding: Vec<f32>,
}

impl EmbedBackend for HttpEmbedder {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let body = json!({"model": self.transport.model, "input": texts});
        let mut resp: EmbedResponse = self.transport.post("/embeddings", &body)?;
        resp.data.sort_by_key(|d| d.index);
        if resp.data.iter().enumerate().any(|(i, d)| d.index != i) {
            return Err(ProviderError::Format("embedding indices are not 0..n".into()));
        }
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}

pub struct HttpReranker {
    transport: Transport,
}

impl HttpReranker {
    pub fn new(spec: &ProviderSpec) -> Result<Self, ProviderError> {
        Ok(Self { transport: Transport::new(spec, Duration::from_secs(120))? })
    }
}

#[derive(Deserialize)]
struct RerankResponse {
    results: Vec<RerankItem>,
}

#[derive(Deserialize)]
struct RerankItem {
    index: usize,
    relevance_score: f64,
}

impl RerankBackend for HttpReranker {
    fn score_batch(&self, query: &str, docs: &[RerankDoc]) -> Result<Vec<f64>, ProviderError> {
        let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
        let body = json!({"model": self.transport.model, "query": query, "documents": texts});
        let resp: RerankResponse = self.transport.post("/rerank", &body)?;
        let mut scores = vec![None; docs.len()];
        for item in resp.results {
            let slot = scores
                .get_mut(item.index)
                .ok_or_else(|| ProviderError::Format(format!("rerank index {} out of range", item.index)))?;
            *slot = Some(item.relevance_score);
        }
        scores
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| ProviderError::Format(format!("no score for document {i}"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_requests_force_zero_temperature() {
        let params = GenerationParams { temperature: 0.7, ..GenerationParams::default() };
        let body = chat_request_body("m", "hi", &params);
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["top_p"], 0.9);
        assert_eq!(body["max_tokens"], 8192);
        assert_eq!(body["messages"][0]["content"], "hi");
        let sampled = GenerationParams { temperature: 0.7, sampling_enabled: true, ..params };
        assert_eq!(chat_request_body("m", "hi", &sampled)["temperature"], 0.7);
    }

    #[test]
    fn error_message_prefers_structured_field() {
        assert_eq!(error_message(r#"{"error":{"message":"quota"}}"#), "quota");
        assert_eq!(error_message("plain"), "plain");
    }

    #[test]
    fn missing_auth_env_is_config_error() {
        let mut spec = ProviderSpec::new(super::super::ProviderKind::Chat, "http://localhost:1", "m");
        spec.auth_env = Some("HOPSYNTH_TEST_SURELY_UNSET_VAR".into());
        assert!(matches!(HttpChat::new(&spec), Err(ProviderError::Config(_))));
    }
}
