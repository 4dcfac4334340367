use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{RankedEntry, RankedList, RetrievalError};
use crate::provider::cosine;

pub const FLAG_K_EXCEEDS_CANDIDATES: &str = "k_exceeds_candidates";

/// Weights and sizes for the coarse stage.
///
/// `score(d) = lambda1·sim(q, d) − lambda2·sim(d, d_s) − lambda3·max_{s∈S} sim(d, s)`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmrParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub pool_size: usize,
    pub k: usize,
}

impl Default for MmrParams {
    fn default() -> Self {
        Self { lambda1: 0.87, lambda2: 0.03, lambda3: 0.1, pool_size: 50, k: 10 }
    }
}

impl MmrParams {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let lambdas = [self.lambda1, self.lambda2, self.lambda3];
        if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(RetrievalError::InvalidParams("lambdas must be finite and non-negative".into()));
        }
        if self.k > self.pool_size {
            return Err(RetrievalError::InvalidParams(format!(
                "k ({}) exceeds pool_size ({})",
                self.k, self.pool_size
            )));
        }
        Ok(())
    }
}

/// Greedy selection of up to `params.k` candidates. The entry score is the
/// objective value at the moment the candidate was picked, so scores are
/// non-increasing. Duplicate candidate ids keep their first occurrence.
pub fn mmr_select(
    query_text: &str,
    query: &[f32],
    source: Option<&[f32]>,
    candidates: &[(String, Vec<f32>)],
    params: &MmrParams,
) -> Result<RankedList, RetrievalError> {
    params.validate()?;
    if candidates.is_empty() {
        return Err(RetrievalError::InvalidParams("no candidates".into()));
    }
    let mut seen = BTreeSet::new();
    let pool: Vec<&(String, Vec<f32>)> = candidates.iter().filter(|(id, _)| seen.insert(id.as_str())).collect();

    let rel: Vec<f64> = pool.iter().map(|(_, v)| cosine(query, v)).collect();
    let red: Vec<f64> = pool.iter().map(|(_, v)| source.map_or(0.0, |s| cosine(v, s))).collect();
    // Running max similarity to the selected set; None until something is picked.
    let mut div: Vec<Option<f64>> = vec![None; pool.len()];
    let mut taken = vec![false; pool.len()];
    let want = params.k.min(pool.len());
    let mut entries = Vec::with_capacity(want);

    for _ in 0..want {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..pool.len()).filter(|&i| !taken[i]) {
            let s = params.lambda1 * rel[i] - params.lambda2 * red[i] - params.lambda3 * div[i].unwrap_or(0.0);
            best = match best {
                Some((j, bs)) if bs > s || (bs == s && pool[j].0 < pool[i].0) => Some((j, bs)),
                _ => Some((i, s)),
            };
        }
        let (pick, score) = best.expect("want <= remaining");
        taken[pick] = true;
        entries.push(RankedEntry { doc_id: pool[pick].0.clone(), score });
        for i in (0..pool.len()).filter(|&i| !taken[i]) {
            let s = cosine(&pool[i].1, &pool[pick].1);
            div[i] = Some(div[i].map_or(s, |d| d.max(s)));
        }
    }

    let mut list = RankedList::new(query_text, entries);
    if params.k > pool.len() {
        list.flags.push(FLAG_K_EXCEEDS_CANDIDATES.to_string());
    }
    Ok(list)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(x: f32, y: f32) -> Vec<f32> {
        let n = (x * x + y * y).sqrt();
        vec![x / n, y / n]
    }

    #[test]
    fn first_pick_score_is_lambda1_on_perfect_match() {
        let c = vec![("d".to_string(), vec![1.0, 0.0])];
        let r = mmr_select("q", &[1.0, 0.0], Some(&[0.0, 1.0]), &c, &MmrParams::default()).unwrap();
        assert!((r.entries[0].score - 0.87).abs() < 1e-12);
    }

    #[test]
    fn pure_relevance_when_penalties_are_zero() {
        let params = MmrParams { lambda2: 0.0, lambda3: 0.0, k: 4, ..MmrParams::default() };
        let c = vec![
            ("a".to_string(), unit(0.2, 1.0)),
            ("b".to_string(), unit(1.0, 0.1)),
            ("c".to_string(), unit(1.0, 0.5)),
            ("d".to_string(), unit(1.0, 0.1)),
        ];
        let r = mmr_select("q", &[1.0, 0.0], None, &c, &params).unwrap();
        assert_eq!(r.ids(), vec!["b", "d", "c", "a"]);
    }

    #[test]
    fn diversity_penalty_skips_near_duplicate() {
        let params = MmrParams { lambda1: 0.5, lambda2: 0.0, lambda3: 0.9, k: 2, ..MmrParams::default() };
        let c = vec![
            ("a".to_string(), unit(1.0, 0.0)),
            ("a2".to_string(), unit(1.0, 0.01)),
            ("b".to_string(), unit(1.0, 1.0)),
        ];
        let r = mmr_select("q", &[1.0, 0.0], None, &c, &params).unwrap();
        assert_eq!(r.ids(), vec!["a", "b"]);
    }

    #[test]
    fn oversize_k_returns_all_with_flag() {
        let c = vec![("a".to_string(), unit(1.0, 0.0)), ("b".to_string(), unit(0.0, 1.0))];
        let r = mmr_select("q", &[1.0, 0.0], None, &c, &MmrParams::default()).unwrap();
        assert_eq!(r.entries.len(), 2);
        assert_eq!(r.flags, vec![FLAG_K_EXCEEDS_CANDIDATES]);
    }

    #[test]
    fn invalid_params_rejected() {
        let c = vec![("a".to_string(), unit(1.0, 0.0))];
        let bad = MmrParams { lambda2: -0.1, ..MmrParams::default() };
        assert!(mmr_select("q", &[1.0, 0.0], None, &c, &bad).is_err());
        let bad = MmrParams { k: 60, ..MmrParams::default() };
        assert!(mmr_select("q", &[1.0, 0.0], None, &c, &bad).is_err());
        assert!(mmr_select("q", &[1.0, 0.0], None, &[], &MmrParams::default()).is_err());
    }
}
