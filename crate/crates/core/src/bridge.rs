//! Bridge questions: `d_s → e_b → d_t`.
//!
//! Per source document: pick a bridge entity, retrieve complementary
//! documents, then walk the ranked candidates trying sub-question
//! generation and fusion until one succeeds. The draft is reviewed by the
//! polisher before it is emitted.
//!
//! Accounting unit: a failed extraction, an empty retrieval and every
//! candidate tried each count as one attempt.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::prompts;
use crate::provider::grammar::{parse_delimited_tuples, parse_sectioned, SectionSchema, Sectioned};
use crate::provider::ChatClient;
use crate::record::{
    BridgeHop, Evidence, ProvenanceEvent, QuestionRecord, QuestionType, RejectionLedger, Stage, SubParts,
    SubQuestion, Triple,
};
use crate::retrieval::{ComplementaryQuery, RankedList};
use crate::synth::{ask, finalize, pick_sources, run_waves, Refusal, RefusalKind, RunOutput, RunParams, SourceResult, SynthContext, SynthError};
use crate::text::{mentions, same_entity};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeExtraction {
    pub entity_name: String,
    pub entity_type: String,
    pub segment: String,
    pub query: String,
    pub source_doc: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuestionPair {
    pub sq1: String,
    pub a1: String,
    pub sq2: String,
    pub a2: String,
    pub doc_a_segments: String,
    pub doc_b_segments: String,
    pub reasoning_path_note: String,
}

/// Fused question before review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusedQuestion {
    pub question: String,
    pub answer: String,
    pub reasoning_path: String,
    pub sources: String,
}

pub fn parse_extraction(raw: &str, source: &Document) -> Result<BridgeExtraction, Refusal> {
    let parsed = parse_delimited_tuples(raw).map_err(|e| Refusal::new(RefusalKind::Malformed, e.to_string()))?;
    let field = |tag: &str, i: usize| {
        parsed
            .first(tag)
            .and_then(|r| r.field(i))
            .map(str::to_string)
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| Refusal::new(RefusalKind::Malformed, format!("missing `{tag}` part")))
    };
    let entity_name = field("bridge_entity", 0)?;
    let entity_type = field("bridge_entity", 1)?;
    let segment = field("relevant_segments", 1)?;
    let query = field("query", 1)?;
    if same_entity(&entity_name, &source.title) {
        return Err(Refusal::new(RefusalKind::Invariant, "bridge entity equals the document title"));
    }
    Ok(BridgeExtraction { entity_name, entity_type, segment, query, source_doc: source.id.clone() })
}

/// Bridge entity, segment and query. `required` pins the entity (chain continuation).
pub fn extract_bridge(
    source: &Document,
    client: &ChatClient,
    required: Option<&str>,
    avoid: &[String],
) -> Result<Result<BridgeExtraction, Refusal>, SynthError> {
    let prompt = prompts::bridge_extract(&source.title, &source.text, required, avoid);
    let out = ask(client, &prompt, |raw| parse_extraction(raw, source))?;
    Ok(out.and_then(|x| match required {
        Some(req) if !same_entity(req, &x.entity_name) => Err(Refusal::new(
            RefusalKind::Invariant,
            format!("expected entity `{req}`, got `{}`", x.entity_name),
        )),
        _ => Ok(x),
    }))
}

fn subq_schema() -> SectionSchema {
    SectionSchema::new()
        .optional("ANALYSIS")
        .optional("Bridge connection")
        .optional("Document A segments")
        .required("Document B segments")
        .optional("Reasoning path")
        .optional("SUB-QUESTIONS")
        .required("Sub-question 1")
        .required("Answer 1")
        .required("Sub-question 2")
        .required("Answer 2")
        .sentinel("INVALID_BRIDGE_CONNECTION")
}

pub fn parse_subquestions(raw: &str, entity: &str) -> Result<SubQuestionPair, Refusal> {
    let parsed = parse_sectioned(raw, &subq_schema()).map_err(|e| Refusal::new(RefusalKind::Malformed, e.to_string()))?;
    let s = match parsed {
        Sectioned::Sentinel { reason, .. } => {
            return Err(Refusal::new(RefusalKind::Declined, reason.unwrap_or_else(|| "no reason given".into())));
        }
        s => s,
    };
    let get = |k: &str| s.section(k).unwrap_or_default().trim().to_string();
    let pair = SubQuestionPair {
        sq1: get("Sub-question 1"),
        a1: get("Answer 1"),
        sq2: get("Sub-question 2"),
        a2: get("Answer 2"),
        doc_a_segments: get("Document A segments"),
        doc_b_segments: get("Document B segments"),
        reasoning_path_note: get("Reasoning path"),
    };
    if [&pair.sq1, &pair.a1, &pair.sq2, &pair.a2, &pair.doc_b_segments].iter().any(|f| f.is_empty()) {
        return Err(Refusal::new(RefusalKind::Malformed, "empty mandatory section"));
    }
    if !same_entity(&pair.a1, entity) {
        return Err(Refusal::new(RefusalKind::Invariant, format!("answer 1 `{}` is not the bridge entity", pair.a1)));
    }
    if !mentions(&pair.sq2, entity) {
        return Err(Refusal::new(RefusalKind::Invariant, "sub-question 2 does not name the bridge entity"));
    }
    Ok(pair)
}

/// Linked sub-question pair across source and target.
pub fn generate_subquestions(
    x: &BridgeExtraction,
    source: &Document,
    target: &Document,
    client: &ChatClient,
) -> Result<Result<SubQuestionPair, Refusal>, SynthError> {
    if target.id == source.id {
        return Err(SynthError::Invalid("target document equals source document".into()));
    }
    let prompt = prompts::bridge_subquestions(
        &x.entity_name,
        &x.entity_type,
        &source.title,
        &x.segment,
        &target.title,
        &target.text,
    );
    ask(client, &prompt, |raw| parse_subquestions(raw, &x.entity_name))
}

fn fuse_schema() -> SectionSchema {
    SectionSchema::new()
        .required("MULTI-HOP QUESTION")
        .required("ANSWER")
        .required("REASONING PATH")
        .required("SOURCES")
        .sentinel("NONE")
}

pub fn parse_fusion(raw: &str, final_answer: &str, hidden: &[String]) -> Result<FusedQuestion, Refusal> {
    let parsed = parse_sectioned(raw, &fuse_schema()).map_err(|e| Refusal::new(RefusalKind::Malformed, e.to_string()))?;
    let s = match parsed {
        Sectioned::Sentinel { reason, .. } => {
            return Err(Refusal::new(RefusalKind::Declined, reason.unwrap_or_else(|| "no reason given".into())));
        }
        s => s,
    };
    let get = |k: &str| s.section(k).unwrap_or_default().trim().to_string();
    let fused = FusedQuestion {
        question: get("MULTI-HOP QUESTION"),
        answer: get("ANSWER"),
        reasoning_path: get("REASONING PATH"),
        sources: get("SOURCES"),
    };
    if fused.question.is_empty() || fused.answer.is_empty() {
        return Err(Refusal::new(RefusalKind::Malformed, "empty question or answer"));
    }
    if !same_entity(&fused.answer, final_answer) {
        return Err(Refusal::new(RefusalKind::Invariant, format!("answer `{}` differs from `{final_answer}`", fused.answer)));
    }
    if let Some(e) = hidden.iter().find(|e| mentions(&fused.question, e)) {
        return Err(Refusal::new(RefusalKind::Invariant, format!("question names `{e}`")));
    }
    Ok(fused)
}

/// Fuse a chain of sub-questions. The answer must equal the last
/// answer and no entity in `hidden` may appear in the question.
pub fn synthesize_multihop(
    chain: &[SubQuestion],
    doc_titles: &[String],
    hidden: &[String],
    client: &ChatClient,
) -> Result<Result<FusedQuestion, Refusal>, SynthError> {
    let last = chain.last().ok_or_else(|| SynthError::Invalid("empty sub-question chain".into()))?;
    for w in chain.windows(2) {
        if !mentions(&w[1].question, &w[0].answer) {
            return Ok(Err(Refusal::new(RefusalKind::Invariant, format!("`{}` does not use `{}`", w[1].question, w[0].answer))));
        }
    }
    let prompt = prompts::bridge_fuse(chain, doc_titles, hidden);
    ask(client, &prompt, |raw| parse_fusion(raw, &last.answer, hidden))
}

/// Outcome of trying one candidate target document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CandidateOutcome {
    Success { pair: SubQuestionPair, fused: FusedQuestion },
    SubqFailed { refusal: Refusal },
    FusionFailed { refusal: Refusal },
}

impl CandidateOutcome {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            CandidateOutcome::Success { .. } => None,
            CandidateOutcome::SubqFailed { .. } => Some(Stage::Step3aSubq),
            CandidateOutcome::FusionFailed { .. } => Some(Stage::Step3bFusion),
        }
    }
}

/// Steps 3(a) and 3(b) for a single two-hop candidate.
pub fn try_candidate(
    ctx: &SynthContext,
    x: &BridgeExtraction,
    source: &Document,
    target: &Document,
) -> Result<CandidateOutcome, SynthError> {
    let pair = match generate_subquestions(x, source, target, &ctx.generator)? {
        Ok(p) => p,
        Err(refusal) => return Ok(CandidateOutcome::SubqFailed { refusal }),
    };
    let chain = vec![
        SubQuestion { question: pair.sq1.clone(), answer: pair.a1.clone() },
        SubQuestion { question: pair.sq2.clone(), answer: pair.a2.clone() },
    ];
    let titles = vec![source.title.clone(), target.title.clone()];
    match synthesize_multihop(&chain, &titles, std::slice::from_ref(&x.entity_name), &ctx.generator)? {
        Ok(fused) => Ok(CandidateOutcome::Success { pair, fused }),
        Err(refusal) => Ok(CandidateOutcome::FusionFailed { refusal }),
    }
}

fn hop_of(x: &BridgeExtraction, pair: &SubQuestionPair, target: &Document) -> BridgeHop {
    BridgeHop {
        source_doc: x.source_doc.clone(),
        target_doc: target.id.clone(),
        bridge_entity: x.entity_name.clone(),
        entity_type: x.entity_type.clone(),
        sq1: pair.sq1.clone(),
        a1: pair.a1.clone(),
        sq2: pair.sq2.clone(),
        a2: pair.a2.clone(),
        doc_a_segments: if pair.doc_a_segments.is_empty() { x.segment.clone() } else { pair.doc_a_segments.clone() },
        doc_b_segments: pair.doc_b_segments.clone(),
        reasoning_note: pair.reasoning_path_note.clone(),
    }
}

/// Two-hop draft record. Triples follow the sub-question chain: the first
/// fact links the source title to the bridge entity, the second links the
/// bridge entity to the answer.
pub fn draft_record(source: &Document, target: &Document, x: &BridgeExtraction, pair: &SubQuestionPair, fused: &FusedQuestion) -> QuestionRecord {
    let hop = hop_of(x, pair, target);
    let mut r = QuestionRecord {
        id: String::new(),
        qtype: QuestionType::Bridge,
        question: fused.question.clone(),
        answer: fused.answer.clone(),
        reasoning_path: fused.reasoning_path.clone(),
        sub_questions: vec![
            SubQuestion { question: pair.sq1.clone(), answer: pair.a1.clone() },
            SubQuestion { question: pair.sq2.clone(), answer: pair.a2.clone() },
        ],
        evidence: vec![
            Evidence { doc_id: source.id.clone(), segment: hop.doc_a_segments.clone() },
            Evidence { doc_id: target.id.clone(), segment: hop.doc_b_segments.clone() },
        ],
        hop_count: 2,
        triples: vec![
            Triple { head: source.title.clone(), relation: pair.sq1.clone(), tail: pair.a1.clone(), doc_id: source.id.clone() },
            Triple { head: pair.a1.clone(), relation: pair.sq2.clone(), tail: pair.a2.clone(), doc_id: target.id.clone() },
        ],
        sub_parts: SubParts::Bridge { hops: vec![hop] },
        flags: Vec::new(),
        provenance: Vec::new(),
    };
    r.log(ProvenanceEvent::new("fusion", format!("sources: {}", fused.sources.replace('\n', " "))));
    r
}

fn retrieve(ctx: &SynthContext, x: &BridgeExtraction, source: &Document, exclude: &BTreeSet<String>, run: &RunParams) -> Result<RankedList, SynthError> {
    let req = ComplementaryQuery { query: &x.query, rerank_query: &x.entity_name, source, exclude };
    Ok(ctx.retriever.retrieve_complementary(&req, &run.mmr, &ctx.reranker)?)
}

/// Full bridge procedure for one source document.
pub fn attempt_source(ctx: &SynthContext, source: &Document, run: &RunParams) -> Result<SourceResult<QuestionRecord>, SynthError> {
    let mut res = SourceResult::default();
    let x = match extract_bridge(source, &ctx.generator, None, &[])? {
        Ok(x) => x,
        Err(_) => {
            res.ledger.reject(Stage::ExtractionMalformed);
            return Ok(res);
        }
    };
    let ranked = retrieve(ctx, &x, source, &BTreeSet::new(), run)?;
    if ranked.is_empty() {
        res.ledger.reject(Stage::RetrievalEmpty);
        return Ok(res);
    }
    let mut log = vec![
        ProvenanceEvent::new("extraction", format!("entity `{}` ({}) query `{}`", x.entity_name, x.entity_type, x.query)),
        ProvenanceEvent::new("retrieval", ranked.ids().join(",")),
    ];
    for (rank, entry) in ranked.entries.iter().enumerate() {
        let target = ctx.retriever.store().get(&entry.doc_id)?;
        let outcome = try_candidate(ctx, &x, source, target)?;
        let (pair, fused) = match outcome {
            CandidateOutcome::Success { pair, fused } => (pair, fused),
            other => {
                let stage = other.stage().expect("failure has a stage");
                res.ledger.reject(stage);
                log.push(ProvenanceEvent::new("candidate", format!("#{} {} {stage}", rank + 1, target.id)));
                continue;
            }
        };
        log.push(ProvenanceEvent::new("candidate", format!("#{} {} success", rank + 1, target.id)));
        let mut draft = draft_record(source, target, &x, &pair, &fused);
        let fusion_event = draft.provenance.pop();
        draft.provenance = log;
        draft.provenance.extend(fusion_event);
        match finalize(ctx, draft)? {
            Ok(rec) => {
                res.ledger.success();
                res.outputs.push(rec);
            }
            Err(_) => res.ledger.reject(Stage::PolisherReject),
        }
        return Ok(res);
    }
    Ok(res)
}

/// Sample sources and synthesize bridge questions.
pub fn run_bridge(ctx: &SynthContext, run: &RunParams) -> Result<RunOutput<QuestionRecord>, SynthError> {
    run.mmr.validate()?;
    let sources = pick_sources(&ctx.retriever, run)?;
    run_waves(&sources, run, |d| attempt_source(ctx, d, run))
}

/// Result of extending a record by further hops.
#[derive(Debug, Clone)]
pub struct ChainResult {
    pub record: Option<QuestionRecord>,
    pub ledger: RejectionLedger,
}

/// Extend a two-hop record to `depth` hops. Each new hop starts from the
/// previous target document with the previous final answer as the required
/// bridge entity, so the sub-question chain stays linked.
pub fn chain_nhop(ctx: &SynthContext, record: &QuestionRecord, depth: usize, run: &RunParams) -> Result<ChainResult, SynthError> {
    if depth < 2 {
        return Err(SynthError::Invalid("depth must be at least 2".into()));
    }
    let mut ledger = RejectionLedger::new();
    let SubParts::Bridge { hops } = &record.sub_parts else {
        return Err(SynthError::Invalid("only bridge records can be chained".into()));
    };
    if record.hop_count >= depth {
        return Ok(ChainResult { record: Some(record.clone()), ledger });
    }
    let mut hops = hops.clone();
    let mut chain = record.sub_questions.clone();
    let mut evidence = record.evidence.clone();
    let mut triples = record.triples.clone();
    let mut log = record.provenance.clone();

    while evidence.len() < depth {
        let prev = hops.last().expect("record has a hop").clone();
        let source = ctx.retriever.store().get(&prev.target_doc)?.clone();
        let used: Vec<String> = hops.iter().map(|h| h.bridge_entity.clone()).collect();
        let x = match extract_bridge(&source, &ctx.generator, Some(&prev.a2), &used)? {
            Ok(x) => x,
            Err(r) => {
                ledger.reject(Stage::ExtractionMalformed);
                log.push(ProvenanceEvent::new("chain", format!("extraction refused: {r}")));
                return Ok(ChainResult { record: None, ledger });
            }
        };
        if used.iter().any(|e| same_entity(e, &x.entity_name)) {
            ledger.reject(Stage::ChainDegenerate);
            return Ok(ChainResult { record: None, ledger });
        }
        let in_chain: BTreeSet<String> = evidence.iter().map(|e| e.doc_id.clone()).collect();
        let ranked = retrieve(ctx, &x, &source, &in_chain, run)?;
        if ranked.is_empty() {
            ledger.reject(Stage::RetrievalEmpty);
            return Ok(ChainResult { record: None, ledger });
        }
        let mut extended = None;
        for entry in &ranked.entries {
            let target = ctx.retriever.store().get(&entry.doc_id)?;
            let pair = match generate_subquestions(&x, &source, target, &ctx.generator)? {
                Ok(p) => p,
                Err(_) => {
                    ledger.reject(Stage::Step3aSubq);
                    continue;
                }
            };
            let mut next_chain = chain.clone();
            next_chain.push(SubQuestion { question: pair.sq2.clone(), answer: pair.a2.clone() });
            let mut titles = evidence
                .iter()
                .map(|e| ctx.retriever.store().get(&e.doc_id).map(|d| d.title.clone()))
                .collect::<Result<Vec<_>, _>>()?;
            titles.push(target.title.clone());
            let mut hidden = used.clone();
            hidden.push(x.entity_name.clone());
            match synthesize_multihop(&next_chain, &titles, &hidden, &ctx.generator)? {
                Ok(fused) => {
                    extended = Some((target.clone(), pair, fused, next_chain));
                    break;
                }
                Err(_) => ledger.reject(Stage::Step3bFusion),
            }
        }
        let Some((target, pair, fused, next_chain)) = extended else {
            return Ok(ChainResult { record: None, ledger });
        };
        let hop = hop_of(&x, &pair, &target);
        if let Some(mid) = evidence.last_mut() {
            if !mid.segment.contains(hop.doc_a_segments.trim()) {
                mid.segment = format!("{} {}", mid.segment, hop.doc_a_segments).trim().to_string();
            }
        }
        evidence.push(Evidence { doc_id: target.id.clone(), segment: hop.doc_b_segments.clone() });
        triples.push(Triple { head: pair.a1.clone(), relation: pair.sq2.clone(), tail: pair.a2.clone(), doc_id: target.id.clone() });
        log.push(ProvenanceEvent::new("chain", format!("hop {} via `{}` to {}", evidence.len(), x.entity_name, target.id)));
        hops.push(hop);
        chain = next_chain;
        if evidence.len() == depth {
            let draft = QuestionRecord {
                id: String::new(),
                qtype: QuestionType::Bridge,
                question: fused.question,
                answer: fused.answer,
                reasoning_path: fused.reasoning_path,
                sub_questions: chain.clone(),
                sub_parts: SubParts::Bridge { hops: hops.clone() },
                evidence: evidence.clone(),
                hop_count: depth,
                triples: triples.clone(),
                flags: record.flags.clone(),
                provenance: log.clone(),
            };
            return match finalize(ctx, draft)? {
                Ok(rec) => {
                    ledger.success();
                    Ok(ChainResult { record: Some(rec), ledger })
                }
                Err(_) => {
                    ledger.reject(Stage::PolisherReject);
                    Ok(ChainResult { record: None, ledger })
                }
            };
        }
    }
    unreachable!("loop returns once depth is reached")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Document {
        Document::new("d1", "Alder Vale", "Alder Vale was founded by Bram Okoro.")
    }

    #[test]
    fn extraction_parses_three_parts() {
        let raw = r#"("bridge_entity"<|>"Bram Okoro"<|>"person") ## ("relevant_segments"<|>"Bram Okoro"<|>"Founder. Alder Vale was founded by Bram Okoro.") ## ("query"<|>"Bram Okoro"<|>"Bram Okoro life beyond Alder Vale")<|COMPLETE|>"#;
        let x = parse_extraction(raw, &doc()).unwrap();
        assert_eq!(x.entity_name, "Bram Okoro");
        assert_eq!(x.entity_type, "person");
        assert_eq!(x.query, "Bram Okoro life beyond Alder Vale");
    }

    #[test]
    fn extraction_title_rule_and_missing_query() {
        let title = r#"("bridge_entity"<|>"alder vale"<|>"town") ## ("relevant_segments"<|>"x"<|>"y") ## ("query"<|>"x"<|>"z")<|COMPLETE|>"#;
        assert_eq!(parse_extraction(title, &doc()).unwrap_err().kind, RefusalKind::Invariant);
        let missing = r#"("bridge_entity"<|>"Bram Okoro"<|>"person") ## ("relevant_segments"<|>"x"<|>"y")<|COMPLETE|>"#;
        assert_eq!(parse_extraction(missing, &doc()).unwrap_err().kind, RefusalKind::Malformed);
    }

    const SUBQ: &str = "ANALYSIS:\nBridge connection: founder\nDocument A segments: Alder Vale was founded by Bram Okoro.\n\
Document B segments: Bram Okoro was born in the year 1821.\nReasoning path: town to founder to year\n\n\
SUB-QUESTIONS:\nSub-question 1: Who founded Alder Vale?\nAnswer 1: Bram Okoro\n\n\
Sub-question 2: In what year was Bram Okoro born?\nAnswer 2: 1821\n";

    #[test]
    fn subquestions_parse() {
        let p = parse_subquestions(SUBQ, "Bram Okoro").unwrap();
        assert_eq!(p.a1, "Bram Okoro");
        assert_eq!(p.a2, "1821");
        assert_eq!(p.doc_b_segments, "Bram Okoro was born in the year 1821.");
    }

    #[test]
    fn invalid_connection_carries_reason() {
        let r = parse_subquestions("INVALID_BRIDGE_CONNECTION\nReason: unrelated", "Bram Okoro").unwrap_err();
        assert_eq!(r, Refusal::new(RefusalKind::Declined, "unrelated"));
    }

    #[test]
    fn subquestion_two_must_name_entity() {
        let bad = SUBQ.replace("In what year was Bram Okoro born?", "In what year was he born?");
        assert_eq!(parse_subquestions(&bad, "Bram Okoro").unwrap_err().kind, RefusalKind::Invariant);
        let wrong = SUBQ.replace("Answer 1: Bram Okoro", "Answer 1: Cedar Point");
        assert_eq!(parse_subquestions(&wrong, "Bram Okoro").unwrap_err().kind, RefusalKind::Invariant);
    }

    #[test]
    fn fusion_checks() {
        let ok = "MULTI-HOP QUESTION: In what year was the founder of Alder Vale born?\nANSWER: 1821\nREASONING PATH:\nfounder, then birth year\nSOURCES:\nA then B";
        let hidden = vec!["Bram Okoro".to_string()];
        assert_eq!(parse_fusion(ok, "1821", &hidden).unwrap().answer, "1821");
        assert_eq!(parse_fusion(ok, "1822", &hidden).unwrap_err().kind, RefusalKind::Invariant);
        let reveal = ok.replace("the founder of Alder Vale", "Bram Okoro");
        assert_eq!(parse_fusion(&reveal, "1821", &hidden).unwrap_err().kind, RefusalKind::Invariant);
        assert_eq!(parse_fusion("NONE\nReason: no link", "1821", &hidden).unwrap_err().kind, RefusalKind::Declined);
    }
}
