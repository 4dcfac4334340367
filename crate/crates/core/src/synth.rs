//! Shared plumbing for the synthesis pipelines: provider bundle, run
//! parameters, seeded source sampling and ordered parallel execution.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusError, Document};
use crate::provider::{CachePolicy, ChatClient, ProviderError, Reranker};
use crate::polisher::{polish, Polished};
use crate::record::{ProvenanceEvent, QuestionRecord, RejectionLedger};
use crate::validate::validate_record;
use crate::retrieval::{MmrParams, RetrievalError, Retriever};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Invalid(String),
}

impl From<crate::provider::grammar::GrammarError> for SynthError {
    fn from(e: crate::provider::grammar::GrammarError) -> Self {
        SynthError::Invalid(e.to_string())
    }
}

/// Why a stage refused its input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Refusal {
    pub kind: RefusalKind,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefusalKind {
    /// Output did not follow the grammar (after one retry).
    Malformed,
    /// The model declined (sentinel output).
    Declined,
    /// Parsed, but a local invariant does not hold.
    Invariant,
}

impl Refusal {
    pub fn new(kind: RefusalKind, reason: impl Into<String>) -> Self {
        Self { kind, reason: reason.into() }
    }
}

impl std::fmt::Display for Refusal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.reason)
    }
}

/// Ask, parse, and on a parse error ask once more bypassing the cache.
pub fn ask<T>(
    client: &ChatClient,
    prompt: &str,
    parse: impl Fn(&str) -> Result<T, Refusal>,
) -> Result<Result<T, Refusal>, SynthError> {
    let first = parse(&client.chat_policy(prompt, CachePolicy::Use)?);
    match first {
        Err(r) if r.kind == RefusalKind::Malformed => Ok(parse(&client.chat_policy(prompt, CachePolicy::Refresh)?)),
        other => Ok(other),
    }
}

/// Everything a pipeline talks to.
#[derive(Debug, Clone)]
pub struct SynthContext {
    pub retriever: Retriever,
    pub reranker: Reranker,
    pub generator: ChatClient,
    /// Scores comparison profiles.
    pub filter: ChatClient,
    pub polisher: ChatClient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunParams {
    pub seed: u64,
    /// Number of source documents drawn.
    pub budget: usize,
    /// Stop once this many outputs exist (whole waves are processed, the
    /// surplus is discarded together with its accounting).
    pub target: Option<usize>,
    pub parallelism: usize,
    /// Documents never drawn as sources.
    pub exclude_sources: BTreeSet<String>,
    /// When set, sources are drawn only from these documents.
    pub source_pool: Option<BTreeSet<String>>,
    pub mmr: MmrParams,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            seed: 0,
            budget: 10,
            target: None,
            parallelism: 4,
            exclude_sources: BTreeSet::new(),
            source_pool: None,
            mmr: MmrParams::default(),
        }
    }
}

/// Result of processing one source document.
#[derive(Debug, Clone)]
pub struct SourceResult<T> {
    pub ledger: RejectionLedger,
    pub outputs: Vec<T>,
}

impl<T> Default for SourceResult<T> {
    fn default() -> Self {
        Self { ledger: RejectionLedger::new(), outputs: Vec::new() }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub outputs: Vec<T>,
    pub ledger: RejectionLedger,
    pub sources_processed: usize,
}

/// Seeded draw of up to `params.budget` source documents.
pub fn pick_sources(retriever: &Retriever, params: &RunParams) -> Result<Vec<Document>, SynthError> {
    let store = retriever.store();
    let mut exclude = params.exclude_sources.clone();
    if let Some(pool) = &params.source_pool {
        exclude.extend(store.documents().iter().filter(|d| !pool.contains(&d.id)).map(|d| d.id.clone()));
    }
    let available = store.documents().iter().filter(|d| !exclude.contains(&d.id)).count();
    Ok(store.sample_documents(params.budget.min(available), params.seed, &exclude)?)
}

/// Process `sources` in waves of `parallelism`, merging results in source
/// order so output does not depend on scheduling.
pub fn run_waves<T, F>(sources: &[Document], params: &RunParams, f: F) -> Result<RunOutput<T>, SynthError>
where
    T: Send,
    F: Fn(&Document) -> Result<SourceResult<T>, SynthError> + Sync,
{
    let threads = params.parallelism.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| SynthError::Invalid(e.to_string()))?;
    let mut out = RunOutput { outputs: Vec::new(), ledger: RejectionLedger::new(), sources_processed: 0 };
    let wave = if params.target.is_some() { threads } else { sources.len().max(1) };
    for chunk in sources.chunks(wave) {
        let results: Vec<Result<SourceResult<T>, SynthError>> = pool.install(|| chunk.par_iter().map(&f).collect());
        for r in results {
            if params.target.is_some_and(|t| out.outputs.len() >= t) {
                return Ok(out);
            }
            let r = r?;
            out.ledger.merge(&r.ledger);
            out.outputs.extend(r.outputs);
            out.sources_processed += 1;
        }
        if params.target.is_some_and(|t| out.outputs.len() >= t) {
            break;
        }
    }
    Ok(out)
}

/// Polish, validate and finalize. `Err` carries the rejection reason.
pub fn finalize(ctx: &SynthContext, draft: QuestionRecord) -> Result<Result<QuestionRecord, String>, SynthError> {
    let titles = draft
        .evidence
        .iter()
        .map(|e| ctx.retriever.store().get(&e.doc_id).map(|d| d.title.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rec = match polish(&draft, &titles, &ctx.polisher)? {
        Polished::Accepted { record, .. } => record,
        Polished::Rejected { reason } => return Ok(Err(reason)),
    };
    let report = validate_record(&rec);
    if !report.passed() {
        let why = report.failures().map(|i| i.message.clone()).collect::<Vec<_>>().join("; ");
        return Ok(Err(format!("validation failed: {why}")));
    }
    for w in report.warnings() {
        rec.log(ProvenanceEvent::new("validation", format!("warning {}: {}", w.check, w.message)));
    }
    rec.assign_id();
    Ok(Ok(rec))
}
