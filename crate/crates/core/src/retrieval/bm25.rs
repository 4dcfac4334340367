use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RankedEntry, RankedList};
use crate::text::lexical_tokens;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Okapi BM25 over lower-cased alphanumeric tokens.
///
/// `idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`, which stays positive for
/// terms present in every document. Repeated query terms contribute once per
/// occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    pub k1: f64,
    pub b: f64,
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    avgdl: f64,
    /// term -> (doc index, term frequency), doc index ascending.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

impl Bm25Index {
    pub fn build<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        Self::with_params(docs, DEFAULT_K1, DEFAULT_B)
    }

    pub fn with_params<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>, k1: f64, b: f64) -> Self {
        let mut doc_ids = Vec::new();
        let mut doc_lens = Vec::new();
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        for (i, (id, text)) in docs.into_iter().enumerate() {
            let toks = lexical_tokens(text);
            doc_ids.push(id.to_string());
            doc_lens.push(toks.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for (t, n) in tf {
                postings.entry(t).or_default().push((i as u32, n));
            }
        }
        let total: u64 = doc_lens.iter().map(|&l| u64::from(l)).sum();
        let avgdl = if doc_ids.is_empty() { 0.0 } else { total as f64 / doc_ids.len() as f64 };
        Self { k1, b, doc_ids, doc_lens, avgdl, postings }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.doc_ids.iter().any(|d| d == id)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_ids.len() as f64;
        let df = self.postings.get(term).map_or(0, Vec::len) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Scores for every document containing at least one query term.
    pub fn scores(&self, query: &str) -> BTreeMap<usize, f64> {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for term in lexical_tokens(query) {
            let Some(list) = self.postings.get(&term) else { continue };
            let idf = self.idf(&term);
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let dl = f64::from(self.doc_lens[doc as usize]);
                let norm = if self.avgdl > 0.0 { dl / self.avgdl } else { 0.0 };
                let s = idf * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * norm));
                *acc.entry(doc as usize).or_default() += s;
            }
        }
        acc
    }

    pub fn score(&self, query: &str, id: &str) -> f64 {
        self.doc_ids
            .iter()
            .position(|d| d == id)
            .and_then(|i| self.scores(query).get(&i).copied())
            .unwrap_or(0.0)
    }

    /// Top `k` matching documents, ties broken by doc id.
    pub fn search(&self, query: &str, k: usize) -> RankedList {
        let mut hits: Vec<RankedEntry> = self
            .scores(query)
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(i, score)| RankedEntry { doc_id: self.doc_ids[i].clone(), score })
            .collect();
        super::sort_desc(&mut hits);
        hits.truncate(k);
        RankedList::new(query, hits)
    }

    /// Hex SHA-256 over the postings and document table.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (id, len) in self.doc_ids.iter().zip(&self.doc_lens) {
            h.update(id.as_bytes());
            h.update([0]);
            h.update(len.to_le_bytes());
        }
        for (term, list) in &self.postings {
            h.update(term.as_bytes());
            h.update([0]);
            for (d, tf) in list {
                h.update(d.to_le_bytes());
                h.update(tf.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Bm25Index {
        Bm25Index::build([
            ("d1", "the cat sat on the mat"),
            ("d2", "the dog sat"),
            ("d3", "a zebra grazed near the river"),
        ])
    }

    #[test]
    fn hand_computed_scores() {
        // N=3, lengths 6/3/6, avgdl=5. "sat": df=2, idf=ln(1+1.5/2.5)=ln 1.6.
        let idx = fixture();
        let idf = 1.6f64.ln();
        let d1 = idf * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 6.0 / 5.0));
        let d2 = idf * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * 3.0 / 5.0));
        assert!((idx.score("sat", "d1") - d1).abs() < 1e-12);
        assert!((idx.score("sat", "d2") - d2).abs() < 1e-12);
        let r = idx.search("sat", 10);
        assert_eq!(r.ids(), vec!["d2", "d1"]);
    }

    #[test]
    fn rare_token_ranks_its_document_first() {
        assert_eq!(fixture().search("zebra", 3).ids(), vec!["d3"]);
    }

    #[test]
    fn non_matching_document_scores_zero() {
        let idx = fixture();
        assert_eq!(idx.score("zebra", "d1"), 0.0);
        assert!(idx.search("unicorn", 5).entries.is_empty());
    }

    #[test]
    fn k_zero_is_empty_and_single_doc_matches() {
        assert!(fixture().search("sat", 0).entries.is_empty());
        let one = Bm25Index::build([("only", "the lonely doc")]);
        assert_eq!(one.search("doc", 5).ids(), vec!["only"]);
    }

    #[test]
    fn checksum_is_stable() {
        assert_eq!(fixture().checksum(), fixture().checksum());
        let other = Bm25Index::build([("d1", "something else")]);
        assert_ne!(fixture().checksum(), other.checksum());
    }
}
