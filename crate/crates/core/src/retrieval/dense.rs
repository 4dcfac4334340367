use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{RankedEntry, RankedList, RetrievalError};
use crate::provider::{Embedder, ProviderError};

const MAGIC: &[u8; 8] = b"HSDENSE1";

/// A document the embedder could not encode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedFailure {
    pub doc_id: String,
    pub error: String,
}

/// Exact dot-product index over L2-normalized vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    by_id: HashMap<String, usize>,
}

impl DenseIndex {
    pub fn from_vectors(items: Vec<(String, Vec<f32>)>) -> Result<Self, RetrievalError> {
        let dim = items.first().map_or(0, |(_, v)| v.len());
        let mut ids = Vec::with_capacity(items.len());
        let mut data = Vec::with_capacity(items.len() * dim);
        let mut by_id = HashMap::with_capacity(items.len());
        for (id, v) in items {
            if v.len() != dim {
                return Err(ProviderError::DimensionMismatch { expected: dim, got: v.len() }.into());
            }
            if by_id.insert(id.clone(), ids.len()).is_some() {
                return Err(RetrievalError::Corrupt(format!("duplicate id {id} in dense index")));
            }
            ids.push(id);
            data.extend(v);
        }
        Ok(Self { dim, ids, data, by_id })
    }

    /// Embed `(id, text)` pairs in parallel batches. A failing batch is
    /// retried one document at a time so a single bad document does not take
    /// its neighbours down. Fails when more than 1% of documents fail.
    pub fn build(
        items: &[(String, String)],
        embedder: &Embedder,
        batch_size: usize,
    ) -> Result<(Self, Vec<EmbedFailure>), RetrievalError> {
        let batch_size = batch_size.max(1);
        let results: Vec<Vec<(String, Result<Vec<f32>, ProviderError>)>> = items
            .par_chunks(batch_size)
            .map(|chunk| {
                let texts: Vec<String> = chunk.iter().map(|(_, t)| t.clone()).collect();
                match embedder.embed(&texts) {
                    Ok(vs) => chunk.iter().map(|(id, _)| id.clone()).zip(vs.into_iter().map(Ok)).collect(),
                    Err(_) => chunk
                        .iter()
                        .map(|(id, t)| (id.clone(), embedder.embed_one(t)))
                        .collect(),
                }
            })
            .collect();

        let mut ok = Vec::with_capacity(items.len());
        let mut failed = Vec::new();
        for (id, r) in results.into_iter().flatten() {
            match r {
                Ok(v) => ok.push((id, v)),
                Err(e) => failed.push(EmbedFailure { doc_id: id, error: e.to_string() }),
            }
        }
        if failed.len() * 100 > items.len() {
            return Err(RetrievalError::TooManyFailures { failed, total: items.len() });
        }
        Ok((Self::from_vectors(ok)?, failed))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        self.by_id.get(id).map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    fn dot(&self, i: usize, q: &[f32]) -> f64 {
        self.data[i * self.dim..(i + 1) * self.dim]
            .iter()
            .zip(q)
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum()
    }

    /// Top `k` by cosine (dot product of unit vectors), ties by doc id.
    pub fn search(&self, query_text: &str, q: &[f32], k: usize, exclude: &BTreeSet<String>) -> RankedList {
        let mut hits: Vec<RankedEntry> = (0..self.ids.len())
            .filter(|&i| !exclude.contains(&self.ids[i]))
            .map(|i| RankedEntry { doc_id: self.ids[i].clone(), score: self.dot(i, q) })
            .collect();
        super::sort_desc(&mut hits);
        hits.truncate(k);
        RankedList::new(query_text, hits)
    }

    /// Binary layout: magic, `u32` dim, `u32` count, then per document a
    /// `u32` id length, the UTF-8 id and `dim` little-endian `f32`s.
    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let mut buf = Vec::with_capacity(16 + self.data.len() * 4);
        buf.write_all(MAGIC)?;
        buf.write_all(&(self.dim as u32).to_le_bytes())?;
        buf.write_all(&(self.ids.len() as u32).to_le_bytes())?;
        for (i, id) in self.ids.iter().enumerate() {
            buf.write_all(&(id.len() as u32).to_le_bytes())?;
            buf.write_all(id.as_bytes())?;
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                buf.write_all(&x.to_le_bytes())?;
            }
        }
        super::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let bytes = std::fs::read(path)?;
        let mut r = bytes.as_slice();
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(RetrievalError::Corrupt("dense index magic mismatch".into()));
        }
        let dim = read_u32(&mut r)? as usize;
        let n = read_u32(&mut r)? as usize;
        let mut items = Vec::with_capacity(n);
        for _ in 0..n {
            let len = read_u32(&mut r)? as usize;
            let mut id = vec![0u8; len];
            r.read_exact(&mut id)?;
            let id = String::from_utf8(id).map_err(|_| RetrievalError::Corrupt("non-UTF-8 id".into()))?;
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                let mut b = [0u8; 4];
                r.read_exact(&mut b)?;
                v.push(f32::from_le_bytes(b));
            }
            items.push((id, v));
        }
        if !r.is_empty() {
            return Err(RetrievalError::Corrupt("trailing bytes in dense index".into()));
        }
        let mut idx = Self::from_vectors(items)?;
        idx.dim = dim;
        Ok(idx)
    }
}

fn read_u32(r: &mut &[u8]) -> Result<u32, RetrievalError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
