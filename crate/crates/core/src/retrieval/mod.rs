//! Lexical and dense indexes plus two-stage complementary retrieval.
//!
//! Index directory layout:
//!
//! ```text
//! <dir>/bm25.json   serialized BM25 postings
//! <dir>/dense.bin   packed unit vectors (see DenseIndex::save)
//! <dir>/meta.json   counts, embedding model, postings checksum, failures
//! ```

mod bm25;
mod dense;
mod mmr;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bm25::{Bm25Index, DEFAULT_B, DEFAULT_K1};
pub use dense::{DenseIndex, EmbedFailure};
pub use mmr::{mmr_select, MmrParams, FLAG_K_EXCEEDS_CANDIDATES};

use crate::corpus::{CorpusError, CorpusStore, Document};
use crate::provider::{Embedder, ProviderError, RerankDoc, Reranker};

pub const BM25_FILE: &str = "bm25.json";
pub const DENSE_FILE: &str = "dense.bin";
pub const META_FILE: &str = "meta.json";
pub const FLAG_EMPTY_POOL: &str = "empty_pool";

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("{} of {total} documents failed to embed", failed.len())]
    TooManyFailures { failed: Vec<EmbedFailure>, total: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("corpus is empty")]
    EmptyStore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
}

/// Ranked documents for one query, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query: String,
    pub entries: Vec<RankedEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl RankedList {
    pub fn new(query: impl Into<String>, entries: Vec<RankedEntry>) -> Self {
        Self { query: query.into(), entries, flags: Vec::new() }
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.doc_id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Descending score, ascending doc id on ties.
pub(crate) fn sort_desc(entries: &mut [RankedEntry]) {
    entries.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc_id.cmp(&b.doc_id)));
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RetrievalError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Text handed to the indexes and the reranker: title line, then body.
pub fn index_text(doc: &Document) -> String {
    format!("{}\n{}", doc.title, doc.text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    pub doc_count: usize,
    pub dense_count: usize,
    pub dim: usize,
    pub embed_model: String,
    pub bm25_checksum: String,
    pub embed_failures: Vec<EmbedFailure>,
}

#[derive(Debug, Clone)]
pub struct Indexes {
    pub bm25: Bm25Index,
    pub dense: DenseIndex,
    pub meta: IndexMeta,
}

impl Indexes {
    pub fn build(store: &CorpusStore, embedder: &Embedder, batch_size: usize) -> Result<Self, RetrievalError> {
        if store.is_empty() {
            return Err(RetrievalError::EmptyStore);
        }
        let items: Vec<(String, String)> =
            store.documents().iter().map(|d| (d.id.clone(), index_text(d))).collect();
        let bm25 = Bm25Index::build(items.iter().map(|(id, t)| (id.as_str(), t.as_str())));
        let (dense, embed_failures) = DenseIndex::build(&items, embedder, batch_size)?;
        let meta = IndexMeta {
            doc_count: store.len(),
            dense_count: dense.len(),
            dim: dense.dim(),
            embed_model: embedder.spec().model_name.clone(),
            bm25_checksum: bm25.checksum(),
            embed_failures,
        };
        Ok(Self { bm25, dense, meta })
    }

    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        std::fs::create_dir_all(dir)?;
        let bm25 = serde_json::to_vec(&self.bm25).map_err(|e| RetrievalError::Corrupt(e.to_string()))?;
        write_atomic(&dir.join(BM25_FILE), &bm25)?;
        self.dense.save(&dir.join(DENSE_FILE))?;
        let meta = serde_json::to_vec_pretty(&self.meta).map_err(|e| RetrievalError::Corrupt(e.to_string()))?;
        write_atomic(&dir.join(META_FILE), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self, RetrievalError> {
        let bm25: Bm25Index = serde_json::from_slice(&std::fs::read(dir.join(BM25_FILE))?)
            .map_err(|e| RetrievalError::Corrupt(format!("{BM25_FILE}: {e}")))?;
        let meta: IndexMeta = serde_json::from_slice(&std::fs::read(dir.join(META_FILE))?)
            .map_err(|e| RetrievalError::Corrupt(format!("{META_FILE}: {e}")))?;
        if bm25.checksum() != meta.bm25_checksum {
            return Err(RetrievalError::Corrupt("BM25 checksum mismatch".into()));
        }
        let dense = DenseIndex::load(&dir.join(DENSE_FILE))?;
        if dense.len() != meta.dense_count {
            return Err(RetrievalError::Corrupt("dense index size mismatch".into()));
        }
        Ok(Self { bm25, dense, meta })
    }
}

/// One complementary-retrieval request.
#[derive(Debug, Clone, Copy)]
pub struct ComplementaryQuery<'a> {
    /// Query for the dense pool and the relevance term.
    pub query: &'a str,
    /// Query handed to the reranker in the fine stage.
    pub rerank_query: &'a str,
    pub source: &'a Document,
    /// Extra documents to keep out of the pool (the source is always excluded).
    pub exclude: &'a BTreeSet<String>,
}

/// Read-only query handle over a store and its indexes.
#[derive(Debug, Clone)]
pub struct Retriever {
    store: Arc<CorpusStore>,
    indexes: Arc<Indexes>,
    embedder: Embedder,
}

impl Retriever {
    pub fn new(store: Arc<CorpusStore>, indexes: Arc<Indexes>, embedder: Embedder) -> Self {
        Self { store, indexes, embedder }
    }

    pub fn store(&self) -> &CorpusStore {
        &self.store
    }

    pub fn indexes(&self) -> &Indexes {
        &self.indexes
    }

    pub fn search_bm25(&self, query: &str, k: usize) -> RankedList {
        self.indexes.bm25.search(query, k)
    }

    pub fn search_dense(&self, query: &str, k: usize) -> Result<RankedList, RetrievalError> {
        self.search_dense_excluding(query, k, &BTreeSet::new())
    }

    pub fn search_dense_excluding(
        &self,
        query: &str,
        k: usize,
        exclude: &BTreeSet<String>,
    ) -> Result<RankedList, RetrievalError> {
        if k == 0 {
            return Ok(RankedList::new(query, Vec::new()));
        }
        let q = self.embedder.embed_one(query)?;
        Ok(self.indexes.dense.search(query, &q, k, exclude))
    }

    fn doc_vector(&self, doc: &Document) -> Result<Vec<f32>, RetrievalError> {
        match self.indexes.dense.vector(&doc.id) {
            Some(v) => Ok(v.to_vec()),
            None => Ok(self.embedder.embed_one(&index_text(doc))?),
        }
    }

    /// MMR over explicit candidate ids. Ids missing from the dense index are
    /// embedded on the fly.
    pub fn mmr_select(
        &self,
        query: &str,
        source: &Document,
        candidates: &[String],
        params: &MmrParams,
    ) -> Result<RankedList, RetrievalError> {
        let q = self.embedder.embed_one(query)?;
        let s = self.doc_vector(source)?;
        let cands = candidates
            .iter()
            .map(|id| Ok((id.clone(), self.doc_vector(self.store.get(id)?)?)))
            .collect::<Result<Vec<_>, RetrievalError>>()?;
        mmr_select(query, &q, Some(&s), &cands, params)
    }

    /// Coarse stage: dense pool of `pool_size` documents, then MMR down to `k`.
    pub fn coarse_stage(&self, req: &ComplementaryQuery<'_>, params: &MmrParams) -> Result<RankedList, RetrievalError> {
        params.validate()?;
        let mut exclude = req.exclude.clone();
        exclude.insert(req.source.id.clone());
        let q = self.embedder.embed_one(req.query)?;
        let pool = self.indexes.dense.search(req.query, &q, params.pool_size, &exclude);
        if pool.is_empty() {
            let mut empty = RankedList::new(req.query, Vec::new());
            empty.flags.push(FLAG_EMPTY_POOL.to_string());
            return Ok(empty);
        }
        let s = self.doc_vector(req.source)?;
        let cands: Vec<(String, Vec<f32>)> = pool
            .entries
            .iter()
            .map(|e| (e.doc_id.clone(), self.indexes.dense.vector(&e.doc_id).expect("pooled id is indexed").to_vec()))
            .collect();
        mmr_select(req.query, &q, Some(&s), &cands, params)
    }

    /// Fine stage: reorder by reranker score, stable on ties. Entry scores
    /// become reranker scores.
    pub fn fine_stage(
        &self,
        coarse: &RankedList,
        rerank_query: &str,
        reranker: &Reranker,
    ) -> Result<RankedList, RetrievalError> {
        let docs = coarse
            .entries
            .iter()
            .map(|e| Ok(RerankDoc { id: e.doc_id.clone(), text: index_text(self.store.get(&e.doc_id)?) }))
            .collect::<Result<Vec<_>, RetrievalError>>()?;
        let scores = reranker.score_batch(rerank_query, &docs)?;
        let mut entries: Vec<RankedEntry> = coarse
            .entries
            .iter()
            .zip(scores)
            .map(|(e, score)| RankedEntry { doc_id: e.doc_id.clone(), score })
            .collect();
        entries.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(RankedList { query: coarse.query.clone(), entries, flags: coarse.flags.clone() })
    }

    pub fn retrieve_complementary(
        &self,
        req: &ComplementaryQuery<'_>,
        params: &MmrParams,
        reranker: &Reranker,
    ) -> Result<RankedList, RetrievalError> {
        let coarse = self.coarse_stage(req, params)?;
        if coarse.is_empty() {
            return Ok(coarse);
        }
        self.fine_stage(&coarse, req.rerank_query, reranker)
    }
}
