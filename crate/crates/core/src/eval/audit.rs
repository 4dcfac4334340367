//! Evidence accessibility: how well standard retrievers surface the gold
//! evidence when queried with the question text.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::record::QuestionRecord;
use crate::retrieval::{RetrievalError, Retriever};

/// Average precision with binary relevance, normalised by |golden|.
pub fn average_precision(golden: &BTreeSet<String>, ranking: &[String]) -> f64 {
    if golden.is_empty() {
        return 0.0;
    }
    let mut hits = 0.0;
    let mut sum = 0.0;
    for (i, d) in ranking.iter().enumerate() {
        if golden.contains(d) {
            hits += 1.0;
            sum += hits / (i + 1) as f64;
        }
    }
    sum / golden.len() as f64
}

pub fn recall_at(golden: &BTreeSet<String>, ranking: &[String], k: usize) -> f64 {
    if golden.is_empty() {
        return 0.0;
    }
    let top: BTreeSet<&String> = ranking.iter().take(k).collect();
    golden.iter().filter(|g| top.contains(g)).count() as f64 / golden.len() as f64
}

/// Gain 1 per golden document, `log2(rank + 1)` discount.
pub fn ndcg_at(golden: &BTreeSet<String>, ranking: &[String], k: usize) -> f64 {
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg: f64 = ranking.iter().take(k).enumerate().filter(|(_, d)| golden.contains(*d)).map(|(i, _)| discount(i)).sum();
    let idcg: f64 = (0..k.min(golden.len())).map(discount).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Set F1 between the top `cutoff` retrieved ids (default |golden|) and the
/// golden set.
pub fn support_f1(golden: &BTreeSet<String>, ranking: &[String], cutoff: Option<usize>) -> f64 {
    let retrieved: BTreeSet<&String> = ranking.iter().take(cutoff.unwrap_or(golden.len())).collect();
    let inter = golden.iter().filter(|g| retrieved.contains(g)).count() as f64;
    if inter == 0.0 {
        return 0.0;
    }
    let p = inter / retrieved.len() as f64;
    let r = inter / golden.len() as f64;
    2.0 * p * r / (p + r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalAudit {
    pub method_id: String,
    pub map: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub support_f1: f64,
    pub n: usize,
    /// Questions without golden evidence.
    pub skipped: usize,
}

/// Corpus means over `(golden, ranking)` pairs. Empty golden sets are skipped.
pub fn audit_rankings(
    method_id: &str,
    items: &[(BTreeSet<String>, Vec<String>)],
    ks: &[usize],
    support_cutoff: Option<usize>,
) -> RetrievalAudit {
    let scored: Vec<&(BTreeSet<String>, Vec<String>)> = items.iter().filter(|(g, _)| !g.is_empty()).collect();
    let n = scored.len();
    let mean = |f: &dyn Fn(&BTreeSet<String>, &[String]) -> f64| {
        if n == 0 {
            0.0
        } else {
            scored.iter().map(|(g, r)| f(g, r)).sum::<f64>() / n as f64
        }
    };
    RetrievalAudit {
        method_id: method_id.to_string(),
        map: mean(&|g, r| average_precision(g, r)),
        recall_at: ks.iter().map(|&k| (k, mean(&|g, r| recall_at(g, r, k)))).collect(),
        ndcg_at: ks.iter().map(|&k| (k, mean(&|g, r| ndcg_at(g, r, k)))).collect(),
        support_f1: mean(&|g, r| support_f1(g, r, support_cutoff)),
        n,
        skipped: items.len() - n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMethod {
    Bm25,
    Dense,
}

impl AuditMethod {
    pub fn id(self) -> &'static str {
        match self {
            AuditMethod::Bm25 => "bm25",
            AuditMethod::Dense => "dense",
        }
    }
}

/// Query `retriever` with each question and score the rankings against the
/// evidence doc ids.
pub fn retrieval_audit(
    dataset: &[QuestionRecord],
    retriever: &Retriever,
    method: AuditMethod,
    ks: &[usize],
    support_cutoff: Option<usize>,
) -> Result<RetrievalAudit, RetrievalError> {
    let depth = ks.iter().copied().max().unwrap_or(10).max(1);
    let items = dataset
        .iter()
        .map(|r| {
            let golden: BTreeSet<String> = r.evidence.iter().map(|e| e.doc_id.clone()).collect();
            let depth = depth.max(support_cutoff.unwrap_or(golden.len()));
            let ranked = match method {
                AuditMethod::Bm25 => retriever.search_bm25(&r.question, depth),
                AuditMethod::Dense => retriever.search_dense(&r.question, depth)?,
            };
            Ok((golden, ranked.ids().into_iter().map(str::to_string).collect()))
        })
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    Ok(audit_rankings(method.id(), &items, ks, support_cutoff))
}
