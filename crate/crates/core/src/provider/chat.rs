use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::usage::estimate_tokens;
use super::{
    CallUsage, ChatBackend, GenerationParams, ProviderError, ProviderSpec, ResponseCache,
    UsageMeter, UsageRole,
};

/// Capped exponential backoff for transient failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(4),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn delay_for(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CachePolicy {
    /// Serve from cache when possible, store the result.
    #[default]
    Use,
    /// Always call upstream, then overwrite the cache entry.
    Refresh,
    /// Always call upstream, leave the cache untouched.
    Bypass,
}

/// A chat model behind caching, retries and usage accounting.
///
/// Cloning is cheap; clones share the cache, meter and call counter.
#[derive(Clone)]
pub struct ChatClient {
    spec: ProviderSpec,
    backend: Arc<dyn ChatBackend>,
    cache: Option<Arc<ResponseCache>>,
    meter: Arc<UsageMeter>,
    role: UsageRole,
    retry: RetryPolicy,
    params: GenerationParams,
    upstream_calls: Arc<AtomicU64>,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("model", &self.spec.model_name)
            .field("role", &self.role)
            .finish()
    }
}

impl ChatClient {
    pub fn new(spec: ProviderSpec, backend: Arc<dyn ChatBackend>) -> Self {
        Self {
            spec,
            backend,
            cache: None,
            meter: Arc::new(UsageMeter::new()),
            role: UsageRole::Synthesis,
            retry: RetryPolicy::default(),
            params: GenerationParams::default(),
            upstream_calls: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_meter(mut self, meter: Arc<UsageMeter>) -> Self {
        self.meter = meter;
        self
    }

    pub fn with_role(mut self, role: UsageRole) -> Self {
        self.role = role;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_params(mut self, params: GenerationParams) -> Self {
        self.params = params;
        self
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    pub fn meter(&self) -> &Arc<UsageMeter> {
        &self.meter
    }

    pub fn role(&self) -> UsageRole {
        self.role
    }

    pub fn params(&self) -> &GenerationParams {
        &self.params
    }

    /// Number of requests that actually reached the backend.
    pub fn upstream_calls(&self) -> u64 {
        self.upstream_calls.load(Ordering::Relaxed)
    }

    /// Complete `prompt` with the client's default parameters, using the cache.
    pub fn chat(&self, prompt: &str) -> Result<String, ProviderError> {
        self.chat_with(prompt, &self.params.clone(), CachePolicy::Use)
    }

    /// Complete with the default parameters under an explicit cache policy.
    pub fn chat_policy(&self, prompt: &str, policy: CachePolicy) -> Result<String, ProviderError> {
        self.chat_with(prompt, &self.params.clone(), policy)
    }

    pub fn chat_with(
        &self,
        prompt: &str,
        params: &GenerationParams,
        policy: CachePolicy,
    ) -> Result<String, ProviderError> {
        let key = self
            .cache
            .as_ref()
            .map(|_| ResponseCache::key(&self.spec.endpoint, &self.spec.model_name, prompt, params));
        if let (Some(cache), Some(key), CachePolicy::Use) = (&self.cache, &key, policy) {
            if let Some(hit) = cache.get(key) {
                return Ok(hit);
            }
        }

        let text = self.call_with_retry(prompt, params)?;

        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if policy != CachePolicy::Bypass {
                cache.put(key, &self.spec.endpoint, &self.spec.model_name, prompt, params, &text);
            }
        }
        Ok(text)
    }

    fn call_with_retry(&self, prompt: &str, params: &GenerationParams) -> Result<String, ProviderError> {
        let attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            self.upstream_calls.fetch_add(1, Ordering::Relaxed);
            match self.backend.complete(prompt, params) {
                Ok(c) => {
                    let (input_tokens, output_tokens, estimated) = match c.usage {
                        Some(u) => (u.input, u.output, false),
                        None => (estimate_tokens(prompt), estimate_tokens(&c.text), true),
                    };
                    self.meter.record(CallUsage {
                        role: self.role,
                        model: self.spec.model_name.clone(),
                        input_tokens,
                        output_tokens,
                        estimated,
                    });
                    return Ok(c.text);
                }
                Err(e) if e.is_transient() && attempt + 1 < attempts => {
                    std::thread::sleep(self.retry.delay_for(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::scripted::ScriptedChat;
    use crate::provider::ProviderKind;

    fn client(backend: ScriptedChat) -> ChatClient {
        ChatClient::new(ProviderSpec::scripted(ProviderKind::Chat, "s"), Arc::new(backend))
            .with_retry(RetryPolicy::no_delay(3))
    }

    #[test]
    fn scripted_response_is_returned() {
        let c = client(ScriptedChat::new().with_response("P", "hello"));
        assert_eq!(c.chat("P").unwrap(), "hello");
    }

    #[test]
    fn cache_hit_skips_upstream() {
        let c = client(ScriptedChat::new().with_response("P", "hello"))
            .with_cache(Arc::new(ResponseCache::in_memory()));
        let a = c.chat("P").unwrap();
        let b = c.chat("P").unwrap();
        assert_eq!(a, b);
        assert_eq!(c.upstream_calls(), 1);
    }

    #[test]
    fn bypass_always_calls_upstream() {
        let c = client(ScriptedChat::new().with_response("P", "hello"))
            .with_cache(Arc::new(ResponseCache::in_memory()));
        let params = GenerationParams::default();
        c.chat_with("P", &params, CachePolicy::Bypass).unwrap();
        c.chat_with("P", &params, CachePolicy::Bypass).unwrap();
        assert_eq!(c.upstream_calls(), 2);
    }

    #[test]
    fn transient_failures_are_retried_then_surface() {
        let c = client(ScriptedChat::new().with_response("P", "ok").failing_first(2));
        assert_eq!(c.chat("P").unwrap(), "ok");
        assert_eq!(c.upstream_calls(), 3);

        let c = client(ScriptedChat::new().with_response("P", "ok").failing_first(3));
        assert!(matches!(c.chat("P"), Err(ProviderError::Transport(_))));
        assert_eq!(c.upstream_calls(), 3);
    }

    #[test]
    fn missing_usage_is_estimated_and_flagged() {
        let c = client(ScriptedChat::new().with_response("abcdefgh", "xyz"));
        c.chat("abcdefgh").unwrap();
        let rec = c.meter().snapshot(UsageRole::Synthesis);
        assert_eq!(rec.request_count, 1);
        assert_eq!(rec.input_tokens, 2);
        assert_eq!(rec.output_tokens, 1);
        assert_eq!(rec.estimated_requests, 1);
    }

    #[test]
    fn backoff_is_capped() {
        let r = RetryPolicy {
            max_attempts: 10,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        assert_eq!(r.delay_for(0), Duration::from_millis(100));
        assert_eq!(r.delay_for(1), Duration::from_millis(200));
        assert_eq!(r.delay_for(2), Duration::from_millis(350));
        assert_eq!(r.delay_for(40), Duration::from_millis(350));
    }
}
