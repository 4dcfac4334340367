//! In-process providers for tests, examples and offline runs.
//!
//! All of them are deterministic functions of their input: a scripted
//! provider answers by prompt (or text, or query/document pair), never by
//! call order, so results are stable under concurrency.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{
    ChatBackend, Completion, EmbedBackend, GenerationParams, ProviderError, RerankBackend,
    RerankDoc, TokenUsage,
};
use crate::text::{lexical_tokens, normalize_entity};

type Responder = Arc<dyn Fn(&str) -> Option<String> + Send + Sync>;
type UsageFn = Arc<dyn Fn(&str, &str) -> Option<TokenUsage> + Send + Sync>;

/// Chat backend answering from a prompt → text table, falling back to an
/// optional responder function.
#[derive(Clone, Default)]
pub struct ScriptedChat {
    table: HashMap<String, String>,
    responder: Option<Responder>,
    usage: Option<UsageFn>,
    transient_failures: Arc<AtomicU64>,
    calls: Arc<AtomicU64>,
}

impl ScriptedChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_response(mut self, prompt: impl Into<String>, text: impl Into<String>) -> Self {
        self.table.insert(prompt.into(), text.into());
        self
    }

    pub fn with_responder(
        mut self,
        f: impl Fn(&str) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.responder = Some(Arc::new(f));
        self
    }

    /// Report token usage computed from `(prompt, response)`. Without this
    /// the backend reports nothing and the client estimates.
    pub fn with_usage(
        mut self,
        f: impl Fn(&str, &str) -> Option<TokenUsage> + Send + Sync + 'static,
    ) -> Self {
        self.usage = Some(Arc::new(f));
        self
    }

    /// Fail the next `n` calls with a transport error.
    pub fn failing_first(self, n: u64) -> Self {
        self.transient_failures.store(n, Ordering::SeqCst);
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedChat {
    fn complete(&self, prompt: &str, _params: &GenerationParams) -> Result<Completion, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let failing = self
            .transient_failures
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if failing {
            return Err(ProviderError::Transport("scripted transient failure".into()));
        }
        let text = self
            .table
            .get(prompt)
            .cloned()
            .or_else(|| self.responder.as_ref().and_then(|f| f(prompt)))
            .ok_or_else(|| ProviderError::Unscripted(prompt.chars().take(80).collect()))?;
        let usage = self.usage.as_ref().and_then(|f| f(prompt, &text));
        Ok(Completion { text, usage })
    }
}

/// Stable 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Feature-hashing bag-of-words embedder. Deterministic across platforms;
/// lexical overlap maps to cosine similarity.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim }
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut tf: HashMap<String, u32> = HashMap::new();
        for t in lexical_tokens(text) {
            *tf.entry(t).or_default() += 1;
        }
        let mut v = vec![0f32; self.dim];
        for (tok, n) in tf {
            let h = fnv1a(tok.as_bytes());
            let slot = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[slot] += sign * (1.0 + (n as f32).ln());
        }
        if v.iter().all(|x| *x == 0.0) {
            // Keep empty texts embeddable.
            v[0] = 1.0;
        }
        v
    }
}

impl EmbedBackend for HashingEmbedder {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Embedder answering from a text → vector table; unknown texts fail
/// unless a fallback is set.
#[derive(Debug, Clone, Default)]
pub struct ScriptedEmbedder {
    table: HashMap<String, Vec<f32>>,
    fallback: Option<HashingEmbedder>,
    failing: BTreeSet<String>,
}

impl ScriptedEmbedder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_vector(mut self, text: impl Into<String>, v: Vec<f32>) -> Self {
        self.table.insert(text.into(), v);
        self
    }

    pub fn with_fallback(mut self, fallback: HashingEmbedder) -> Self {
        self.fallback = Some(fallback);
        self
    }

    /// Any batch containing `text` fails with a transport error.
    pub fn failing_on(mut self, text: impl Into<String>) -> Self {
        self.failing.insert(text.into());
        self
    }
}

impl EmbedBackend for ScriptedEmbedder {
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        texts
            .iter()
            .map(|t| {
                if self.failing.contains(t) {
                    return Err(ProviderError::Transport(format!("scripted failure for `{t}`")));
                }
                self.table
                    .get(t)
                    .cloned()
                    .or_else(|| self.fallback.as_ref().map(|f| f.vector(t)))
                    .ok_or_else(|| ProviderError::Unscripted(t.chars().take(80).collect()))
            })
            .collect()
    }
}

/// Hex SHA-256 of a reranker query, the key used by score tables.
pub fn query_hash(query: &str) -> String {
    hex::encode(Sha256::digest(query.as_bytes()))
}

type RerankFn = Arc<dyn Fn(&str, &RerankDoc) -> f64 + Send + Sync>;

/// Reranker replaying a `(query, doc id) → score` table, with an optional
/// scoring function for pairs not in the table.
#[derive(Clone, Default)]
pub struct ScriptedReranker {
    table: HashMap<(String, String), f64>,
    fallback: Option<RerankFn>,
}

impl ScriptedReranker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_score(mut self, query: &str, doc_id: &str, score: f64) -> Self {
        self.table.insert((query_hash(query), doc_id.to_string()), score);
        self
    }

    pub fn with_fallback(mut self, f: impl Fn(&str, &RerankDoc) -> f64 + Send + Sync + 'static) -> Self {
        self.fallback = Some(Arc::new(f));
        self
    }

    /// Lexical fallback: fraction of query tokens present in the document,
    /// plus 1.0 when the document's first line equals the query.
    pub fn lexical() -> Self {
        Self::new().with_fallback(lexical_score)
    }

    /// Load a `scores.tsv` table: `query_hash<TAB>doc_id<TAB>score` per line.
    /// Lines starting with `#` are ignored.
    pub fn load_scores_tsv(mut self, path: &Path) -> Result<Self, ProviderError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ProviderError::Config(format!("{}: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [hash, doc, score] = cols[..] else {
                return Err(ProviderError::Format(format!("scores.tsv line {}: expected 3 columns", n + 1)));
            };
            let score: f64 = score
                .trim()
                .parse()
                .map_err(|_| ProviderError::Format(format!("scores.tsv line {}: bad score", n + 1)))?;
            self.table.insert((hash.to_string(), doc.to_string()), score);
        }
        Ok(self)
    }
}

fn lexical_score(query: &str, doc: &RerankDoc) -> f64 {
    let q: BTreeSet<String> = lexical_tokens(query).into_iter().collect();
    if q.is_empty() {
        return 0.0;
    }
    let d: BTreeSet<String> = lexical_tokens(&doc.text).into_iter().collect();
    let overlap = q.iter().filter(|t| d.contains(*t)).count() as f64 / q.len() as f64;
    let first_line = doc.text.lines().next().unwrap_or("");
    let title_bonus = if normalize_entity(first_line) == normalize_entity(query) { 1.0 } else { 0.0 };
    overlap + title_bonus
}

impl RerankBackend for ScriptedReranker {
    fn score_batch(&self, query: &str, docs: &[RerankDoc]) -> Result<Vec<f64>, ProviderError> {
        let qh = query_hash(query);
        docs.iter()
            .map(|d| {
                self.table
                    .get(&(qh.clone(), d.id.clone()))
                    .copied()
                    .or_else(|| self.fallback.as_ref().map(|f| f(query, d)))
                    .ok_or_else(|| ProviderError::Unscripted(format!("rerank ({query}, {})", d.id)))
            })
            .collect()
    }
}
