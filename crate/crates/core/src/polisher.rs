//! Final review pass over draft questions: accept, adjust, rework or reject.

use serde::{Deserialize, Serialize};

use crate::prompts;
use crate::provider::grammar::{bracket_tag, parse_sectioned, GrammarError, SectionSchema, Sectioned};
use crate::provider::{CachePolicy, ChatClient, ProviderError};
use crate::record::{ProvenanceEvent, QuestionRecord, QuestionType, SubParts};
use crate::text::{mentions, same_entity};

pub const FLAG_REWORKED_UNVERIFIED: &str = "reworked_evidence_unverified";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Decision {
    Pass,
    Adjust,
    Reworked,
    Rejected,
}

impl Decision {
    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "PASS" => Some(Decision::Pass),
            "ADJUST" => Some(Decision::Adjust),
            "REWORKED" => Some(Decision::Reworked),
            "REJECTED" => Some(Decision::Rejected),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Refinements {
    pub question: Option<String>,
    pub answer: Option<String>,
    pub reasoning_path: Option<String>,
    pub fact_a: Option<String>,
    pub fact_b: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolishOutcome {
    pub decision: Decision,
    pub refined: Refinements,
    pub reason: Option<String>,
}

fn schema() -> SectionSchema {
    SectionSchema::new()
        .optional("REFINED_REASONING_PATH")
        .optional("REFINED_QUESTION")
        .optional("REFINED_ANSWER")
        .optional("REFINED_FACT_A")
        .optional("REFINED_FACT_B")
        .optional("REASON")
}

/// Parse a reviewer response. Field requirements depend on the decision:
/// ADJUST needs a question, REWORKED a question and an answer, and a
/// comparison REJECTED needs a reason. PASS ignores any refined fields.
pub fn parse_outcome(raw: &str, qtype: QuestionType) -> Result<PolishOutcome, GrammarError> {
    let (tag, rest) = bracket_tag(raw).ok_or_else(|| GrammarError::Schema("missing decision tag".into()))?;
    let decision = Decision::from_tag(&tag).ok_or_else(|| GrammarError::Schema(format!("unknown decision `{tag}`")))?;
    let sections = match parse_sectioned(rest, &schema())? {
        Sectioned::Sections { sections, .. } => sections,
        Sectioned::Sentinel { .. } => unreachable!("schema has no sentinels"),
    };
    let get = |k: &str| sections.get(k).map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
    let mut refined = Refinements {
        question: get("REFINED_QUESTION"),
        answer: get("REFINED_ANSWER"),
        reasoning_path: get("REFINED_REASONING_PATH"),
        fact_a: get("REFINED_FACT_A"),
        fact_b: get("REFINED_FACT_B"),
    };
    let reason = get("REASON");
    match decision {
        Decision::Pass => refined = Refinements::default(),
        Decision::Adjust if refined.question.is_none() => {
            return Err(GrammarError::MissingSections(vec!["REFINED_QUESTION".into()]));
        }
        Decision::Reworked if refined.question.is_none() || refined.answer.is_none() => {
            return Err(GrammarError::MissingSections(
                ["REFINED_QUESTION", "REFINED_ANSWER"]
                    .iter()
                    .filter(|k| get(k).is_none())
                    .map(|k| k.to_string())
                    .collect(),
            ));
        }
        Decision::Rejected if qtype == QuestionType::Comparison && reason.is_none() => {
            return Err(GrammarError::MissingSections(vec!["REASON".into()]));
        }
        _ => {}
    }
    Ok(PolishOutcome { decision, refined, reason })
}

/// Apply field overrides. Pure and idempotent; REJECTED leaves the record
/// untouched (the caller drops it).
pub fn apply_outcome(record: &QuestionRecord, outcome: &PolishOutcome) -> QuestionRecord {
    let mut r = record.clone();
    if matches!(outcome.decision, Decision::Pass | Decision::Rejected) {
        return r;
    }
    let f = &outcome.refined;
    if let Some(q) = &f.question {
        r.question = q.clone();
    }
    if let Some(a) = &f.answer {
        r.answer = a.clone();
    }
    if let Some(p) = &f.reasoning_path {
        r.reasoning_path = p.clone();
    }
    if outcome.decision == Decision::Reworked {
        match &mut r.sub_parts {
            SubParts::Comparison(core) => {
                if let Some(a) = &f.fact_a {
                    core.fact_a = a.clone();
                }
                if let Some(b) = &f.fact_b {
                    core.fact_b = b.clone();
                }
            }
            SubParts::Bridge { .. } => r.flag(FLAG_REWORKED_UNVERIFIED),
        }
    }
    r
}

/// Local invariants a polished record must still satisfy.
pub fn recheck(record: &QuestionRecord) -> Result<(), String> {
    if record.answer.trim().is_empty() {
        return Err("answer is empty".into());
    }
    if record.question.trim().is_empty() {
        return Err("question is empty".into());
    }
    match &record.sub_parts {
        SubParts::Bridge { hops } => {
            if let Some(h) = hops.iter().find(|h| mentions(&record.question, &h.bridge_entity)) {
                return Err(format!("question names bridge entity `{}`", h.bridge_entity));
            }
            if let Some(last) = record.sub_questions.last() {
                if !same_entity(&last.answer, &record.answer) {
                    return Err("answer no longer matches the sub-question chain".into());
                }
            }
        }
        SubParts::Comparison(core) => {
            if !core.paragraph_a.contains(core.fact_a.trim()) || !core.paragraph_b.contains(core.fact_b.trim()) {
                return Err("refined fact is not inside its paragraph".into());
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Polished {
    Accepted { record: QuestionRecord, decision: Decision },
    Rejected { reason: String },
}

fn prompt_for(record: &QuestionRecord, titles: &[String]) -> String {
    match &record.sub_parts {
        SubParts::Bridge { .. } => {
            let evidence: Vec<(String, String)> = record
                .evidence
                .iter()
                .zip(titles.iter().chain(std::iter::repeat(&String::new())))
                .map(|(e, t)| (t.clone(), e.segment.clone()))
                .collect();
            prompts::bridge_polish(&record.question, &record.answer, &record.reasoning_path, &record.sub_questions, &evidence)
        }
        SubParts::Comparison(c) => prompts::compare_polish(
            &record.question,
            &record.answer,
            (&c.fact_a, &c.fact_b),
            (&c.paragraph_a, &c.paragraph_b),
            (&c.entity_a, &c.entity_b),
        ),
    }
}

/// Review `record`. `titles` runs parallel to `record.evidence`.
/// Malformed output is retried once with a fresh call, then rejected.
pub fn polish(record: &QuestionRecord, titles: &[String], client: &ChatClient) -> Result<Polished, ProviderError> {
    let prompt = prompt_for(record, titles);
    let mut outcome = None;
    let mut last_err = String::new();
    for policy in [CachePolicy::Use, CachePolicy::Refresh] {
        let raw = client.chat_policy(&prompt, policy)?;
        match parse_outcome(&raw, record.qtype) {
            Ok(o) => {
                outcome = Some(o);
                break;
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    let Some(outcome) = outcome else {
        return Ok(Polished::Rejected { reason: format!("malformed review: {last_err}") });
    };
    if outcome.decision == Decision::Rejected {
        return Ok(Polished::Rejected { reason: outcome.reason.unwrap_or_else(|| "rejected by reviewer".into()) });
    }
    let mut polished = apply_outcome(record, &outcome);
    if let Err(why) = recheck(&polished) {
        return Ok(Polished::Rejected { reason: format!("post-review check failed: {why}") });
    }
    let label = format!("{:?}", outcome.decision).to_uppercase();
    match outcome.decision {
        Decision::Pass => polished.log(ProvenanceEvent::new("polish", label)),
        _ => {
            let before = format!("Q: {}\nA: {}", record.question, record.answer);
            let after = format!("Q: {}\nA: {}", polished.question, polished.answer);
            polished.log(ProvenanceEvent::change("polish", label, &before, &after));
        }
    }
    Ok(Polished::Accepted { record: polished, decision: outcome.decision })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::provider::scripted::ScriptedChat;
    use crate::provider::{ProviderKind, ProviderSpec};
    use crate::record::fixtures::{bridge_record, comparison_record};

    fn client(resp: &'static str) -> ChatClient {
        ChatClient::new(
            ProviderSpec::scripted(ProviderKind::Chat, "p"),
            Arc::new(ScriptedChat::new().with_responder(move |_| Some(resp.to_string()))),
        )
    }

    #[test]
    fn pass_keeps_record() {
        let r = bridge_record();
        let Polished::Accepted { record, decision } = polish(&r, &[], &client("[PASS]")).unwrap() else { panic!() };
        assert_eq!(decision, Decision::Pass);
        assert_eq!(record.question, r.question);
        assert_eq!(record.provenance.len(), 1);
    }

    #[test]
    fn adjust_replaces_question_keeps_answer() {
        let r = bridge_record();
        let out = polish(&r, &[], &client("[ADJUST]\nREFINED_QUESTION: When was the man who founded Alder Vale born?")).unwrap();
        let Polished::Accepted { record, .. } = out else { panic!() };
        assert_eq!(record.question, "When was the man who founded Alder Vale born?");
        assert_eq!(record.answer, "1821");
        assert!(record.provenance[0].before.is_some());
    }

    #[test]
    fn reworked_without_answer_is_rejected_as_malformed() {
        let out = polish(&bridge_record(), &[], &client("[REWORKED]\nREFINED_QUESTION: q")).unwrap();
        assert!(matches!(out, Polished::Rejected { reason } if reason.starts_with("malformed")));
    }

    #[test]
    fn unknown_tag_is_malformed() {
        assert!(parse_outcome("[MAYBE]", QuestionType::Bridge).is_err());
        assert!(parse_outcome("no tag", QuestionType::Bridge).is_err());
    }

    #[test]
    fn revealing_adjustment_is_downgraded() {
        let out = polish(&bridge_record(), &[], &client("[ADJUST]\nREFINED_QUESTION: When was Bram Okoro born?")).unwrap();
        assert!(matches!(out, Polished::Rejected { reason } if reason.contains("bridge entity")));
    }

    #[test]
    fn comparison_reject_needs_reason() {
        assert!(parse_outcome("[REJECTED]", QuestionType::Comparison).is_err());
        let o = parse_outcome("[REJECTED]\nREASON: apples and oranges", QuestionType::Comparison).unwrap();
        assert_eq!(o.reason.as_deref(), Some("apples and oranges"));
        assert!(parse_outcome("[REJECTED]", QuestionType::Bridge).is_ok());
    }

    #[test]
    fn bridge_rework_flags_evidence() {
        let o = parse_outcome(
            "[REWORKED]\nREFINED_REASONING_PATH: p\nREFINED_QUESTION: In which year was the founder of Alder Vale born?\nREFINED_ANSWER: 1821",
            QuestionType::Bridge,
        )
        .unwrap();
        let r = apply_outcome(&bridge_record(), &o);
        assert!(r.flags.contains(&FLAG_REWORKED_UNVERIFIED.to_string()));
        assert_eq!(apply_outcome(&r, &o), r);
    }

    #[test]
    fn comparison_rework_updates_facts_idempotently() {
        let o = parse_outcome(
            "[REWORKED]\nREFINED_QUESTION: Which is bigger?\nREFINED_ANSWER: Alder Vale\nREFINED_FACT_A: Alder Vale has a population of 4200.",
            QuestionType::Comparison,
        )
        .unwrap();
        let once = apply_outcome(&comparison_record(), &o);
        assert_eq!(apply_outcome(&once, &o), once);
        assert_eq!(once.question, "Which is bigger?");
    }
}
