//! Comparison questions over one shared attribute of two entities.
//!
//! Per source document: extract a subject profile, gate it on concreteness
//! and comparability scores, plan retrieval (a named candidate or three
//! diversified queries), then try candidates until a comparison can be
//! built. One source document is one attempt.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::prompts;
use crate::provider::grammar::{parse_delimited_tuples, parse_sectioned, SectionSchema, Sectioned};
use crate::provider::ChatClient;
use crate::record::{ComparisonCore, Evidence, ProvenanceEvent, QuestionRecord, QuestionType, Stage, SubParts};
use crate::synth::{
    ask, finalize, pick_sources, run_waves, Refusal, RefusalKind, RunOutput, RunParams, SourceResult, SynthContext,
    SynthError,
};
use crate::text::{normalize_entity, same_entity};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub value: String,
    /// Query that would surface the same attribute for another entity.
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityProfile {
    pub name: String,
    pub etype: String,
    pub doc_id: String,
    pub attributes: Vec<Attribute>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concreteness: Option<u8>,
}

impl EntityProfile {
    fn pairs(&self) -> Vec<(String, String)> {
        self.attributes.iter().map(|a| (a.name.clone(), a.value.clone())).collect()
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| same_entity(&a.name, name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanPath {
    RecallFocusedVerify,
    SearchQueries,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub path: PlanPath,
    pub entity_b_hint: Option<String>,
    pub attribute_hint: Option<String>,
    pub queries: Vec<String>,
}

impl QueryPlan {
    pub fn guide(&self) -> Option<(&str, &str)> {
        Some((self.entity_b_hint.as_deref()?, self.attribute_hint.as_deref()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareParams {
    pub min_entity: u8,
    pub min_attr: u8,
    /// Candidates retrieved per query.
    pub k: usize,
    /// After a failed recall plan, retry with the profile's own attribute
    /// queries as a diversified search.
    pub fallback_to_search: bool,
}

impl Default for CompareParams {
    fn default() -> Self {
        Self { min_entity: 5, min_attr: 4, k: 5, fallback_to_search: false }
    }
}

fn malformed(e: impl ToString) -> Refusal {
    Refusal::new(RefusalKind::Malformed, e.to_string())
}

pub fn parse_profile(raw: &str, source: &Document) -> Result<EntityProfile, Refusal> {
    let parsed = parse_delimited_tuples(raw).map_err(malformed)?;
    let subject = parsed.first("subject_entity").ok_or_else(|| malformed("missing subject_entity part"))?;
    let name = subject.field(0).unwrap_or_default().trim().to_string();
    if name.is_empty() {
        return Err(malformed("empty subject entity"));
    }
    let etype = subject.field(1).unwrap_or_default().trim().to_string();
    let attributes = parsed
        .all("attribute")
        .filter_map(|r| {
            let f = |i| r.field(i).unwrap_or_default().trim().to_string();
            let (name, value) = (f(0), f(1));
            (!name.is_empty() && !value.is_empty()).then(|| Attribute { name, value, query: f(2), score: None })
        })
        .collect();
    Ok(EntityProfile { name, etype, doc_id: source.id.clone(), attributes, concreteness: None })
}

/// Subject entity and attribute profile of a source document.
pub fn extract_profile(source: &Document, client: &ChatClient) -> Result<Result<EntityProfile, Refusal>, SynthError> {
    ask(client, &prompts::compare_extract(&source.title, &source.text), |raw| parse_profile(raw, source))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileScores {
    pub entity: u8,
    /// Keyed by normalized attribute name.
    pub attributes: BTreeMap<String, u8>,
}

fn score(field: Option<&str>) -> Result<u8, Refusal> {
    let raw = field.unwrap_or_default().trim();
    match raw.parse::<u8>() {
        Ok(n @ 1..=5) => Ok(n),
        _ => Err(malformed(format!("score `{raw}` is not in 1..=5"))),
    }
}

pub fn parse_scores(raw: &str) -> Result<ProfileScores, Refusal> {
    let parsed = parse_delimited_tuples(raw).map_err(malformed)?;
    let entity = score(parsed.first("entity_score").ok_or_else(|| malformed("missing entity_score"))?.field(0))?;
    let mut attributes = BTreeMap::new();
    for r in parsed.all("attribute_score") {
        attributes.insert(normalize_entity(r.field(0).unwrap_or_default()), score(r.field(2))?);
    }
    Ok(ProfileScores { entity, attributes })
}

/// Pure thresholding. Attributes without a score are dropped.
pub fn apply_scores(profile: &EntityProfile, scores: &ProfileScores, min_entity: u8, min_attr: u8) -> Result<EntityProfile, Refusal> {
    let mut out = profile.clone();
    out.concreteness = Some(scores.entity);
    if scores.entity < min_entity {
        return Err(Refusal::new(RefusalKind::Invariant, format!("entity score {} below {min_entity}", scores.entity)));
    }
    out.attributes = profile
        .attributes
        .iter()
        .filter_map(|a| {
            let s = *scores.attributes.get(&normalize_entity(&a.name))?;
            (s >= min_attr).then(|| Attribute { score: Some(s), ..a.clone() })
        })
        .collect();
    if out.attributes.is_empty() {
        return Err(Refusal::new(RefusalKind::Invariant, "no attribute reaches the threshold"));
    }
    Ok(out)
}

/// Concreteness and comparability scores, on the dedicated filter client.
pub fn score_and_filter(
    profile: &EntityProfile,
    client: &ChatClient,
    min_entity: u8,
    min_attr: u8,
) -> Result<Result<EntityProfile, Refusal>, SynthError> {
    let prompt = prompts::compare_score(&profile.name, &profile.etype, &profile.pairs());
    let scores = ask(client, &prompt, parse_scores)?;
    Ok(scores.and_then(|s| apply_scores(profile, &s, min_entity, min_attr)))
}

pub fn parse_plan(raw: &str) -> Result<QueryPlan, Refusal> {
    let parsed = parse_delimited_tuples(raw).map_err(malformed)?;
    let recall: Vec<_> = parsed.all("recall_focused_verify").collect();
    let search: Vec<_> = parsed.all("search_queries").collect();
    let nonempty = |r: &crate::provider::grammar::TupleRecord| {
        r.fields.iter().map(|f| f.trim().to_string()).filter(|f| !f.is_empty()).collect::<Vec<_>>()
    };
    match (recall.as_slice(), search.as_slice()) {
        ([r], []) => {
            let f = nonempty(r);
            if f.len() != 3 || r.fields.len() != 3 {
                return Err(malformed("recall path needs entity, attribute and query"));
            }
            Ok(QueryPlan {
                path: PlanPath::RecallFocusedVerify,
                entity_b_hint: Some(f[0].clone()),
                attribute_hint: Some(f[1].clone()),
                queries: vec![f[2].clone()],
            })
        }
        ([], [s]) => {
            let f = nonempty(s);
            if f.len() != 3 || s.fields.len() != 3 {
                return Err(malformed(format!("search path needs exactly 3 queries, got {}", s.fields.len())));
            }
            Ok(QueryPlan { path: PlanPath::SearchQueries, entity_b_hint: None, attribute_hint: None, queries: f })
        }
        ([], []) => Err(malformed("no plan path")),
        _ => Err(malformed("more than one plan path")),
    }
}

/// Recall or search plan for the second entity.
pub fn plan_queries(profile: &EntityProfile, client: &ChatClient) -> Result<Result<QueryPlan, Refusal>, SynthError> {
    ask(client, &prompts::compare_plan(&profile.name, &profile.etype, &profile.pairs()), parse_plan)
}

/// Plan built from the profile's own attribute queries.
pub fn fallback_plan(profile: &EntityProfile) -> Option<QueryPlan> {
    let mut queries: Vec<String> = profile.attributes.iter().map(|a| a.query.trim().to_string()).filter(|q| !q.is_empty()).collect();
    queries.dedup();
    queries.truncate(3);
    (!queries.is_empty()).then_some(QueryPlan { path: PlanPath::SearchQueries, entity_b_hint: None, attribute_hint: None, queries })
}

/// Union of ranked id lists ordered by best rank, then doc id.
pub fn merge_rankings(lists: &[Vec<String>]) -> Vec<String> {
    let mut best: BTreeMap<&str, usize> = BTreeMap::new();
    for list in lists {
        for (rank, id) in list.iter().enumerate() {
            let e = best.entry(id.as_str()).or_insert(rank);
            *e = (*e).min(rank);
        }
    }
    let mut merged: Vec<(&str, usize)> = best.into_iter().collect();
    merged.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(b.0)));
    merged.into_iter().map(|(id, _)| id.to_string()).collect()
}

/// Dense top-`k` per planned query, source excluded, merged.
pub fn retrieve_candidates(ctx: &SynthContext, plan: &QueryPlan, source: &Document, k: usize) -> Result<Vec<String>, SynthError> {
    let exclude = BTreeSet::from([source.id.clone()]);
    let lists = plan
        .queries
        .iter()
        .map(|q| Ok(ctx.retriever.search_dense_excluding(q, k, &exclude)?.ids().into_iter().map(str::to_string).collect()))
        .collect::<Result<Vec<Vec<String>>, SynthError>>()?;
    Ok(merge_rankings(&lists))
}

/// A constructed comparison before review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltComparison {
    pub core: ComparisonCore,
    pub question: String,
    pub answer: String,
}

const BUILD_KEYS: [&str; 9] = [
    "entity_a",
    "entity_b",
    "attribute_compared",
    "multi_hop_question",
    "answer",
    "fact_entity_a",
    "fact_entity_b",
    "relevant_paragraph_a",
    "relevant_paragraph_b",
];

fn build_schema() -> SectionSchema {
    BUILD_KEYS.iter().fold(SectionSchema::new(), |s, k| s.required(k)).sentinel("FAIL")
}

pub fn parse_build(
    raw: &str,
    profile: &EntityProfile,
    candidate: &Document,
    guide: Option<(&str, &str)>,
) -> Result<BuiltComparison, Refusal> {
    let parsed = parse_sectioned(raw, &build_schema()).map_err(malformed)?;
    let s = match parsed {
        Sectioned::Sentinel { reason, .. } => {
            return Err(Refusal::new(RefusalKind::Declined, reason.unwrap_or_else(|| "no comparable pair".into())));
        }
        s => s,
    };
    let get = |k: &str| s.section(k).unwrap_or_default().trim().to_string();
    if let Some(k) = BUILD_KEYS.iter().find(|k| get(k).is_empty()) {
        return Err(malformed(format!("empty `{k}`")));
    }
    let attribute = get("attribute_compared");
    let entity_b = get("entity_b");
    let Some(attr) = profile.attribute(&attribute) else {
        return Err(Refusal::new(RefusalKind::Invariant, format!("attribute `{attribute}` is not in the profile")));
    };
    if let Some((hint_entity, hint_attr)) = guide {
        if !same_entity(&attribute, hint_attr) || !same_entity(&entity_b, hint_entity) {
            return Err(Refusal::new(
                RefusalKind::Invariant,
                format!("guided build must compare `{hint_entity}` on `{hint_attr}`"),
            ));
        }
    }
    if same_entity(&entity_b, &profile.name) {
        return Err(Refusal::new(RefusalKind::Invariant, "both sides name the same entity"));
    }
    let core = ComparisonCore {
        entity_a: get("entity_a"),
        entity_b,
        attribute: attr.name.clone(),
        value_a: Some(attr.value.clone()),
        value_b: None,
        fact_a: get("fact_entity_a"),
        fact_b: get("fact_entity_b"),
        paragraph_a: get("relevant_paragraph_a"),
        paragraph_b: get("relevant_paragraph_b"),
        doc_a: profile.doc_id.clone(),
        doc_b: candidate.id.clone(),
    };
    if !core.paragraph_a.contains(&core.fact_a) {
        return Err(Refusal::new(RefusalKind::Invariant, "fact_entity_a is not inside relevant_paragraph_a"));
    }
    if !core.paragraph_b.contains(&core.fact_b) {
        return Err(Refusal::new(RefusalKind::Invariant, "fact_entity_b is not inside relevant_paragraph_b"));
    }
    Ok(BuiltComparison { core, question: get("multi_hop_question"), answer: get("answer") })
}

/// Comparison question for one candidate.
pub fn build_comparison(
    profile: &EntityProfile,
    source: &Document,
    candidate: &Document,
    guide: Option<(&str, &str)>,
    client: &ChatClient,
) -> Result<Result<BuiltComparison, Refusal>, SynthError> {
    if candidate.id == source.id {
        return Err(SynthError::Invalid("candidate equals source document".into()));
    }
    let prompt = prompts::compare_build(
        &profile.name,
        &profile.etype,
        &source.title,
        &source.text,
        &candidate.title,
        &candidate.text,
        &profile.pairs(),
        guide,
    );
    ask(client, &prompt, |raw| parse_build(raw, profile, candidate, guide))
}

pub fn draft_record(b: &BuiltComparison) -> QuestionRecord {
    let c = &b.core;
    QuestionRecord {
        id: String::new(),
        qtype: QuestionType::Comparison,
        question: b.question.clone(),
        answer: b.answer.clone(),
        reasoning_path: format!("{}: {} | {}: {}", c.entity_a, c.fact_a, c.entity_b, c.fact_b),
        sub_questions: Vec::new(),
        evidence: vec![
            Evidence { doc_id: c.doc_a.clone(), segment: c.paragraph_a.clone() },
            Evidence { doc_id: c.doc_b.clone(), segment: c.paragraph_b.clone() },
        ],
        hop_count: 2,
        triples: Vec::new(),
        sub_parts: SubParts::Comparison(c.clone()),
        flags: Vec::new(),
        provenance: Vec::new(),
    }
}

fn try_plan(
    ctx: &SynthContext,
    profile: &EntityProfile,
    source: &Document,
    plan: &QueryPlan,
    params: &CompareParams,
    log: &mut Vec<ProvenanceEvent>,
) -> Result<Option<BuiltComparison>, SynthError> {
    let candidates = retrieve_candidates(ctx, plan, source, params.k)?;
    log.push(ProvenanceEvent::new("retrieval", format!("{:?}: {}", plan.path, candidates.join(","))));
    for id in candidates {
        let cand = ctx.retriever.store().get(&id)?;
        match build_comparison(profile, source, cand, plan.guide(), &ctx.generator)? {
            Ok(b) => {
                log.push(ProvenanceEvent::new("construction", format!("{id} on `{}`", b.core.attribute)));
                return Ok(Some(b));
            }
            Err(r) => log.push(ProvenanceEvent::new("construction", format!("{id} refused: {r}"))),
        }
    }
    Ok(None)
}

/// Full comparison procedure for one source document.
pub fn attempt_source(
    ctx: &SynthContext,
    source: &Document,
    params: &CompareParams,
) -> Result<SourceResult<QuestionRecord>, SynthError> {
    let mut res = SourceResult::default();
    let profile = match extract_profile(source, &ctx.generator)? {
        Ok(p) => p,
        Err(_) => {
            res.ledger.reject(Stage::ExtractionMalformed);
            return Ok(res);
        }
    };
    let profile = match score_and_filter(&profile, &ctx.filter, params.min_entity, params.min_attr)? {
        Ok(p) => p,
        Err(_) => {
            res.ledger.reject(Stage::Filter);
            return Ok(res);
        }
    };
    let mut log = vec![ProvenanceEvent::new(
        "profile",
        format!(
            "{} ({}) kept {}",
            profile.name,
            profile.etype,
            profile.attributes.iter().map(|a| a.name.as_str()).collect::<Vec<_>>().join(", ")
        ),
    )];
    let plan = match plan_queries(&profile, &ctx.generator)? {
        Ok(p) => p,
        Err(_) => {
            res.ledger.reject(Stage::Construction);
            return Ok(res);
        }
    };
    let mut built = try_plan(ctx, &profile, source, &plan, params, &mut log)?;
    if built.is_none() && params.fallback_to_search && plan.path == PlanPath::RecallFocusedVerify {
        if let Some(fb) = fallback_plan(&profile) {
            log.push(ProvenanceEvent::new("plan", "recall path failed, falling back to search"));
            built = try_plan(ctx, &profile, source, &fb, params, &mut log)?;
        }
    }
    let Some(built) = built else {
        res.ledger.reject(Stage::Construction);
        return Ok(res);
    };
    let mut draft = draft_record(&built);
    draft.provenance = log;
    match finalize(ctx, draft)? {
        Ok(rec) => {
            res.ledger.success();
            res.outputs.push(rec);
        }
        Err(_) => res.ledger.reject(Stage::PolisherReject),
    }
    Ok(res)
}

pub fn run_comparison(ctx: &SynthContext, run: &RunParams, params: &CompareParams) -> Result<RunOutput<QuestionRecord>, SynthError> {
    let sources = pick_sources(&ctx.retriever, run)?;
    run_waves(&sources, run, |d| attempt_source(ctx, d, params))
}
