//! Answerability and difficulty diagnostics: solver accuracy with the
//! question alone and with the gold evidence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::prompts;
use crate::provider::ChatClient;
use crate::record::QuestionRecord;
use crate::text::normalize_answer;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("gold answer is empty")]
pub struct EmptyGold;

pub fn em(pred: &str, gold: &str) -> Result<f64, EmptyGold> {
    let g = normalize_answer(gold);
    if g.is_empty() {
        return Err(EmptyGold);
    }
    Ok(if normalize_answer(pred) == g { 1.0 } else { 0.0 })
}

/// Harmonic mean of token precision and recall over token multisets.
pub fn token_f1(pred: &str, gold: &str) -> Result<f64, EmptyGold> {
    let g = normalize_answer(gold);
    if g.is_empty() {
        return Err(EmptyGold);
    }
    let p = normalize_answer(pred);
    let mut gold_toks: Vec<&str> = g.split_whitespace().collect();
    let pred_toks: Vec<&str> = p.split_whitespace().collect();
    if pred_toks.is_empty() {
        return Ok(0.0);
    }
    let mut common = 0usize;
    for t in &pred_toks {
        if let Some(i) = gold_toks.iter().position(|x| x == t) {
            gold_toks.swap_remove(i);
            common += 1;
        }
    }
    if common == 0 {
        return Ok(0.0);
    }
    let precision = common as f64 / pred_toks.len() as f64;
    let recall = common as f64 / g.split_whitespace().count() as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMode {
    QOnly,
    QDocs,
}

impl std::fmt::Display for SolverMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverMode::QOnly => "Q-Only",
            SolverMode::QDocs => "Q+Docs",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub item_id: String,
    pub predicted: String,
    pub em: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticResult {
    pub model_id: String,
    pub mode: SolverMode,
    pub em: f64,
    pub f1: f64,
    /// Items scored.
    pub n: usize,
    /// Items dropped because the provider failed or evidence was missing.
    pub skipped: usize,
    pub predictions: Vec<Prediction>,
}

/// Pull the answer out of a solver reply: the `ANSWER:` line if present,
/// otherwise the first non-empty line.
pub fn extract_answer(raw: &str) -> String {
    raw.lines()
        .find_map(|l| {
            let t = l.trim();
            let (head, rest) = t.split_once(':')?;
            head.trim().eq_ignore_ascii_case("answer").then(|| rest.trim().to_string())
        })
        .or_else(|| raw.lines().map(str::trim).find(|l| !l.is_empty()).map(str::to_string))
        .unwrap_or_default()
}

pub fn diagnostic_qa(dataset: &[QuestionRecord], solver: &ChatClient, model_id: &str, mode: SolverMode) -> DiagnosticResult {
    let results: Vec<Option<Prediction>> = dataset
        .par_iter()
        .map(|r| {
            let passages: Vec<String> = r.evidence.iter().map(|e| e.segment.clone()).collect();
            let prompt = match mode {
                SolverMode::QOnly => prompts::solve(&r.question, None),
                SolverMode::QDocs if passages.iter().all(|p| p.trim().is_empty()) => return None,
                SolverMode::QDocs => prompts::solve(&r.question, Some(&passages)),
            };
            let predicted = extract_answer(&solver.chat(&prompt).ok()?);
            Some(Prediction {
                item_id: r.id.clone(),
                em: em(&predicted, &r.answer).ok()?,
                f1: token_f1(&predicted, &r.answer).ok()?,
                predicted,
            })
        })
        .collect();
    let skipped = results.iter().filter(|p| p.is_none()).count();
    let predictions: Vec<Prediction> = results.into_iter().flatten().collect();
    let n = predictions.len();
    let mean = |f: fn(&Prediction) -> f64| if n == 0 { 0.0 } else { predictions.iter().map(f).sum::<f64>() / n as f64 };
    DiagnosticResult {
        model_id: model_id.to_string(),
        mode,
        em: mean(|p| p.em),
        f1: mean(|p| p.f1),
        n,
        skipped,
        predictions,
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn examples() {
        assert_eq!(em("Paris", "Paris").unwrap(), 1.0);
        assert_eq!(token_f1("Paris", "Paris").unwrap(), 1.0);
        assert_eq!(em("the Paris", "Paris").unwrap(), 1.0);
        assert_eq!((em("London", "Paris").unwrap(), token_f1("London", "Paris").unwrap()), (0.0, 0.0));
        assert_eq!(em("x y", "y x").unwrap(), 0.0);
        assert_eq!(token_f1("x y", "y x").unwrap(), 1.0);
        assert_relative_eq!(token_f1("x y z", "x y").unwrap(), 0.8, epsilon = 1e-12);
        assert_eq!(em("x", "  the "), Err(EmptyGold));
    }

    #[test]
    fn answer_line() {
        assert_eq!(extract_answer("Thinking...\nANSWER: 1821\n"), "1821");
        assert_eq!(extract_answer("\n1821\n"), "1821");
    }

    proptest! {
        #[test]
        fn em_implies_f1(p in "[a-d ]{0,12}", g in "[b-d]{1,3}( [b-d]{1,3}){0,2}") {
            if em(&p, &g).unwrap() == 1.0 {
                prop_assert_eq!(token_f1(&p, &g).unwrap(), 1.0);
            }
            let f = token_f1(&p, &g).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }
    }
}
