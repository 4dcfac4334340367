//! Rule-based stand-ins for the generator, reviewer, judge and solver.
//!
//! Each one parses the prompt back into blocks and answers from the world's
//! fact table, so synthesis runs end to end without a network.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use crate::prompts::{parse_prompt, task};
use crate::provider::grammar::{format_tuples, TupleRecord};
use crate::provider::scripted::fnv1a;
use crate::eval::judge::{DIMENSIONS, MULTI_HOP_LABEL};
use crate::text::{normalize_entity, same_entity};

use super::world::{relation_for_attribute, Behavior, EntityType, Fact, Prefer, World, RELATIONS};

const ADJUST_PREFIX: &str = "According to the passages, ";
const REWORK_PREFIX: &str = "Based on the documents, ";

/// Capture the `{s}` slot of `template` in `text`.
pub fn capture(template: &str, text: &str) -> Option<String> {
    let (pre, post) = template.split_once("{s}")?;
    let inner = text.strip_prefix(pre)?.strip_suffix(post)?;
    (!inner.trim().is_empty()).then(|| inner.to_string())
}

/// Capture the `{a}` and `{b}` slots of a comparison template.
pub fn capture_pair(template: &str, text: &str) -> Option<(String, String)> {
    let (pre, rest) = template.split_once("{a}")?;
    let (mid, post) = rest.split_once("{b}")?;
    let inner = text.strip_prefix(pre)?.strip_suffix(post)?;
    let (a, b) = inner.split_once(mid)?;
    Some((a.to_string(), b.to_string()))
}

fn tuples(parts: Vec<(&str, Vec<String>)>) -> String {
    format_tuples(&parts.into_iter().map(|(t, f)| TupleRecord::new(t, f)).collect::<Vec<_>>())
}

fn upper_first(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_lowercase().chain(c).collect()).unwrap_or_default()
}

/// Remove a reviewer's framing so templates match again.
pub fn strip_framing(q: &str) -> String {
    [ADJUST_PREFIX, REWORK_PREFIX]
        .iter()
        .find_map(|p| q.strip_prefix(p))
        .map(upper_first)
        .unwrap_or_else(|| q.to_string())
}

/// `Sub-question n: …` / `Answer n: …` lines back into pairs.
fn read_chain(block: &str) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for line in block.lines() {
        let Some((head, body)) = line.split_once(':') else { continue };
        if head.starts_with("Sub-question") {
            out.push((body.trim().to_string(), String::new()));
        } else if head.starts_with("Answer") {
            if let Some(last) = out.last_mut() {
                last.1 = body.trim().to_string();
            }
        }
    }
    out
}

/// Generator and reviewer.
#[derive(Debug, Clone)]
pub struct SimLlm {
    world: Arc<World>,
}

impl SimLlm {
    pub fn new(world: Arc<World>) -> Self {
        Self { world }
    }

    pub fn respond(&self, prompt: &str) -> Option<String> {
        let (t, b) = parse_prompt(prompt)?;
        let get = |k: &str| b.get(k).map(String::as_str).unwrap_or("");
        Some(match t.as_str() {
            task::BRIDGE_EXTRACT => self.extract(get("Document Title"), b.get("Required Entity"), get("Avoid Entities")),
            task::BRIDGE_SUBQ => self.subq(get("Bridge Entity"), get("Document A Title"), get("Document B Title")),
            task::BRIDGE_FUSE => self.fuse(get("Sub-Questions"), get("Documents")),
            task::BRIDGE_POLISH => self.polish_bridge(get("Question"), get("Answer"), get("Documents")),
            task::COMPARE_EXTRACT => self.compare_extract(get("Document Title")),
            task::COMPARE_SCORE => self.compare_score(get("Entity"), get("Entity Type"), get("Attributes")),
            task::COMPARE_PLAN => self.compare_plan(get("Entity"), get("Entity Type"), get("Attributes")),
            task::COMPARE_BUILD => self.compare_build(&b),
            task::COMPARE_POLISH => self.compare_polish(get("Entity A Title")),
            _ => return None,
        })
    }

    fn extract(&self, title: &str, required: Option<&String>, avoid: &str) -> String {
        let w = &*self.world;
        if w.behaves(title, Behavior::ExtractMalformed) {
            return "The document mentions several people, it is hard to choose one.".into();
        }
        let Some(doc) = w.doc_by_title(title) else {
            return "No document.".into();
        };
        let avoid: Vec<&str> = avoid.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        let facts = w.facts_in_doc(&doc.id);
        let pick: Option<(&Fact, String)> = if w.behaves(title, Behavior::ExtractTitle) {
            facts.first().map(|f| (*f, title.to_string()))
        } else if let Some(req) = required {
            facts.iter().find(|f| same_entity(&f.object, req)).map(|f| (*f, f.object.clone()))
        } else {
            facts
                .iter()
                .find(|f| {
                    f.rel().links_entities()
                        && w.entities.contains_key(&f.object)
                        && !avoid.iter().any(|a| same_entity(a, &f.object))
                })
                .map(|f| (*f, f.object.clone()))
        };
        let Some((fact, name)) = pick else {
            return tuples(vec![]);
        };
        let etype = w.entities.get(&name).map_or("entity", |e| e.etype.noun());
        tuples(vec![
            ("bridge_entity", vec![name.clone(), etype.into()]),
            ("relevant_segments", vec![name.clone(), fact.sentence.clone()]),
            ("query", vec![name.clone(), format!("{name} {etype}")]),
        ])
    }

    fn subq(&self, entity: &str, doc_a_title: &str, doc_b_title: &str) -> String {
        let w = &*self.world;
        let invalid = |why: &str| format!("INVALID_BRIDGE_CONNECTION\nReason: {why}");
        if w.behaves(doc_b_title, Behavior::SubqInvalid) {
            return invalid("Document B only mentions the entity in passing.");
        }
        let (Some(a), Some(bdoc)) = (w.doc_by_title(doc_a_title), w.doc_by_title(doc_b_title)) else {
            return invalid("unknown document");
        };
        let Some(f1) = w.facts_in_doc(&a.id).into_iter().find(|f| same_entity(&f.object, entity)) else {
            return invalid("Document A does not lead to the entity.");
        };
        let about: Vec<&Fact> = w.facts_in_doc(&bdoc.id).into_iter().filter(|f| same_entity(&f.subject, entity)).collect();
        if about.is_empty() {
            return invalid("Document B says nothing about the entity.");
        }
        let f2 = about[(fnv1a(doc_a_title.as_bytes()) % about.len() as u64) as usize];
        format!(
            "ANALYSIS:\nBridge connection: {entity} links {doc_a_title} and {doc_b_title}.\n\
Document A segments: {}\nDocument B segments: {}\nReasoning path: {doc_a_title} to {entity} to {}\n\n\
SUB-QUESTIONS:\nSub-question 1: {}\nAnswer 1: {entity}\nSub-question 2: {}\nAnswer 2: {}\n",
            f1.sentence,
            f2.sentence,
            f2.object,
            f1.rel().question_for(&f1.subject),
            f2.rel().question_for(entity),
            f2.object,
        )
    }

    /// Fold a chain of single-fact questions into one nested question.
    pub fn compose(chain: &[(String, String)]) -> Option<String> {
        let mut described: Option<String> = None;
        for (i, (q, _)) in chain.iter().enumerate() {
            let (rel, subject) = RELATIONS.iter().find_map(|r| capture(r.question, q).map(|s| (r, s)))?;
            let subject = match (&described, i) {
                (None, 0) => subject,
                (Some(d), _) if same_entity(&subject, &chain[i - 1].1) => d.clone(),
                _ => return None,
            };
            if i + 1 == chain.len() {
                return Some(rel.question_for(&subject));
            }
            described = Some(rel.descriptor_for(&subject));
        }
        None
    }

    fn fuse(&self, chain_block: &str, docs: &str) -> String {
        let last_doc = docs.lines().last().unwrap_or("").trim();
        if self.world.behaves(last_doc, Behavior::FusionNone) {
            return "NONE\nReason: the second document repeats the first.".into();
        }
        let chain = read_chain(chain_block);
        let Some(question) = Self::compose(&chain) else {
            return "NONE\nReason: the sub-questions do not connect.".into();
        };
        let answer = &chain.last().unwrap().1;
        let path = chain.iter().map(|(_, a)| a.as_str()).collect::<Vec<_>>().join(" -> ");
        let sources = docs.lines().enumerate().map(|(i, d)| format!("{}: {d}", i + 1)).collect::<Vec<_>>().join("\n");
        format!("MULTI-HOP QUESTION: {question}\nANSWER:\n{answer}\nREASONING PATH:\n{path}\nSOURCES:\n{sources}\n")
    }

    fn polish_bridge(&self, question: &str, answer: &str, docs: &str) -> String {
        let first = docs.lines().next().and_then(|l| l.split_once("] ")).map_or("", |x| x.1).trim();
        let w = &*self.world;
        if w.behaves(first, Behavior::PolishReject) {
            "[REJECTED]\nREASON: the question can be answered from one document.".into()
        } else if w.behaves(first, Behavior::PolishRework) {
            format!(
                "[REWORKED]\nREFINED_REASONING_PATH: follow {first} to the answer\nREFINED_QUESTION: {REWORK_PREFIX}{}\nREFINED_ANSWER: {answer}",
                lower_first(question)
            )
        } else if w.behaves(first, Behavior::PolishAdjust) {
            format!(
                "[ADJUST]\nREFINED_REASONING_PATH: start from {first}\nREFINED_QUESTION: {ADJUST_PREFIX}{}",
                lower_first(question)
            )
        } else {
            "[PASS]".into()
        }
    }

    fn compare_extract(&self, title: &str) -> String {
        let w = &*self.world;
        let Some(e) = w.entities.get(title) else {
            return tuples(vec![]);
        };
        let mut parts = vec![("subject_entity", vec![e.name.clone(), e.etype.noun().to_string()])];
        for f in w.facts_in_doc(&e.doc_id) {
            let rel = f.rel();
            parts.push(("attribute", vec![rel.attribute.into(), f.object.clone(), format!("{} {}", e.etype.noun(), rel.attribute)]));
        }
        tuples(parts)
    }

    fn attribute_lines(block: &str) -> Vec<(String, String)> {
        block
            .lines()
            .filter_map(|l| l.split_once(':').map(|(n, v)| (n.trim().to_string(), v.trim().to_string())))
            .collect()
    }

    fn compare_score(&self, entity: &str, etype: &str, attrs: &str) -> String {
        let entity_score = if self.world.behaves(entity, Behavior::FilterReject) { 4 } else { 5 };
        let etype = EntityType::from_noun(etype);
        let mut parts = vec![("entity_score", vec![entity_score.to_string()])];
        for (name, value) in Self::attribute_lines(attrs) {
            let comparable = etype.and_then(|t| relation_for_attribute(t, &name)).is_some_and(|r| r.compare.is_some());
            parts.push(("attribute_score", vec![name, value, if comparable { "5" } else { "3" }.into()]));
        }
        tuples(parts)
    }

    fn compare_plan(&self, entity: &str, etype: &str, attrs: &str) -> String {
        let w = &*self.world;
        let attrs = Self::attribute_lines(attrs);
        if w.behaves(entity, Behavior::PlanRecall) {
            let t = EntityType::from_noun(etype);
            let other = w.entities.values().find(|e| Some(e.etype) == t && e.name != entity);
            if let (Some(o), Some((attr, _))) = (other, attrs.first()) {
                return format!("(\"recall_focused_verify\"<|>{}<|>{attr}<|>{} {attr})<|COMPLETE|>", o.name, o.name);
            }
        }
        let mut queries: Vec<String> = attrs.iter().map(|(n, _)| format!("{etype} {n}")).collect();
        for filler in ["history", "overview", "records"] {
            queries.push(format!("{etype} {filler}"));
        }
        queries.truncate(3);
        format!("(\"search_queries\"<|>{})<|COMPLETE|>", queries.join("<|>"))
    }

    fn compare_build(&self, b: &BTreeMap<String, String>) -> String {
        let w = &*self.world;
        let get = |k: &str| b.get(k).map(String::as_str).unwrap_or("");
        let a_title = get("Document A Title");
        if w.behaves(a_title, Behavior::ConstructionFail) {
            return "FAIL\nReason: the documents describe different kinds of things.".into();
        }
        let (Some(ea), Some(eb)) = (w.entities.get(get("Entity A")), w.entities.get(get("Document B Title"))) else {
            return "FAIL\nReason: Document B has no comparable subject.".into();
        };
        if ea.etype != eb.etype || ea.name == eb.name {
            return "FAIL\nReason: the entities are not of the same type.".into();
        }
        let required = b.get("Required Entity B").zip(b.get("Required Attribute"));
        for (attr, _) in Self::attribute_lines(get("Attributes")) {
            if let Some((re, ra)) = required {
                if !same_entity(re, &eb.name) || !same_entity(ra, &attr) {
                    continue;
                }
            }
            let Some(rel) = relation_for_attribute(ea.etype, &attr) else { continue };
            let Some((template, prefer)) = rel.compare else { continue };
            let (Some(fa), Some(fb)) = (w.fact(&ea.name, rel.key), w.fact(&eb.name, rel.key)) else { continue };
            let (Ok(va), Ok(vb)) = (fa.object.parse::<u64>(), fb.object.parse::<u64>()) else { continue };
            if va == vb {
                continue;
            }
            let a_wins = (va > vb) == (prefer == Prefer::Larger);
            let (pa, pb) = (&w.doc(&ea.doc_id).unwrap().text, &w.doc(&eb.doc_id).unwrap().text);
            return format!(
                "PASS\nentity_a: {}\nentity_b: {}\nattribute_compared: {attr}\nmulti_hop_question: {}\nanswer: {}\n\
fact_entity_a: {}\nfact_entity_b: {}\nrelevant_paragraph_a: {pa}\nrelevant_paragraph_b: {pb}\n",
                ea.name,
                eb.name,
                template.replace("{a}", &ea.name).replace("{b}", &eb.name),
                if a_wins { &ea.name } else { &eb.name },
                fa.sentence,
                fb.sentence,
            );
        }
        "FAIL\nReason: no shared comparable attribute.".into()
    }

    fn compare_polish(&self, a_title: &str) -> String {
        if self.world.behaves(a_title, Behavior::ComparePolishReject) {
            "[REJECTED]\nREASON: the comparison hinges on an approximate figure.".into()
        } else {
            "[PASS]".into()
        }
    }
}

/// Judge with a configurable chance of drifting one grade between runs.
#[derive(Debug)]
pub struct SimJudge {
    /// Per-mille chance that a run moves a rating by one grade.
    noise: u64,
    seed: u64,
    calls: Mutex<HashMap<u64, u64>>,
}

impl SimJudge {
    pub fn new(seed: u64, noise_per_mille: u64) -> Self {
        Self { noise: noise_per_mille, seed, calls: Mutex::new(HashMap::new()) }
    }

    fn h(&self, parts: &[&str], n: u64) -> u64 {
        let key = format!("{}|{}|{n}", self.seed, parts.join("|"));
        fnv1a(key.as_bytes())
    }

    pub fn respond(&self, prompt: &str) -> Option<String> {
        let (t, b) = parse_prompt(prompt)?;
        if t != task::JUDGE {
            return None;
        }
        let run = {
            let mut calls = self.calls.lock().unwrap();
            let c = calls.entry(fnv1a(prompt.as_bytes())).or_default();
            *c += 1;
            *c
        };
        let q = b.get("Question").map(String::as_str).unwrap_or("");
        let passages = b.get("Passages").map(String::as_str).unwrap_or("");
        let multi = passages.matches("\n[").count() >= 1 && !self.h(&[q], 0).is_multiple_of(25);
        let mut out = format!("- {MULTI_HOP_LABEL}: {}\n", if multi { "Yes" } else { "No" });
        for (key, label) in DIMENSIONS {
            let base: i64 = if self.h(&[q, key], 0).is_multiple_of(3) { 4 } else { 5 };
            let drift = self.h(&[q, key], run);
            let r = if drift % 1000 < self.noise { base - 1 - (drift >> 20) as i64 % 2 } else { base };
            let word = ["Very Poor", "Poor", "Fair", "Good", "Very Good"][(r.clamp(1, 5) - 1) as usize];
            out.push_str(&format!("- {label}: {word}\n"));
        }
        out.push_str("<|COMPLETE|>");
        Some(out)
    }
}

/// Reader that answers by chaining facts found in the passages.
#[derive(Debug, Clone)]
pub struct SimSolver {
    world: Arc<World>,
}

impl SimSolver {
    pub fn new(world: Arc<World>) -> Self {
        Self { world }
    }

    pub fn respond(&self, prompt: &str) -> Option<String> {
        let (t, b) = parse_prompt(prompt)?;
        if t != task::SOLVE {
            return None;
        }
        let q = strip_framing(b.get("Question")?.trim());
        let answer = match b.get("Passages") {
            Some(p) => {
                let known = self.world.facts_in_passages(&[p.as_str()]);
                self.answer(&q, &known)
            }
            None => RELATIONS
                .iter()
                .filter_map(|r| r.compare)
                .find_map(|(tpl, _)| capture_pair(tpl, &q).map(|(a, _)| a)),
        };
        Some(format!("ANSWER: {}", answer.unwrap_or_else(|| "unknown".into())))
    }

    fn lookup<'a>(known: &[&'a Fact], subject: &str, key: &str) -> Option<&'a Fact> {
        known.iter().find(|f| f.relation == key && same_entity(&f.subject, subject)).copied()
    }

    fn resolve(&self, text: &str, known: &[&Fact], depth: usize) -> Option<String> {
        if self.world.entities.keys().any(|n| normalize_entity(n) == normalize_entity(text)) {
            return Some(text.to_string());
        }
        if depth == 0 {
            return None;
        }
        RELATIONS.iter().filter(|r| r.links_entities()).find_map(|r| {
            let inner = capture(r.descriptor, text)?;
            let subject = self.resolve(&inner, known, depth - 1)?;
            Self::lookup(known, &subject, r.key).map(|f| f.object.clone())
        })
    }

    fn answer(&self, q: &str, known: &[&Fact]) -> Option<String> {
        for r in RELATIONS {
            if let Some((tpl, prefer)) = r.compare {
                if let Some((a, b)) = capture_pair(tpl, q) {
                    let va = Self::lookup(known, &a, r.key)?.object.parse::<u64>().ok()?;
                    let vb = Self::lookup(known, &b, r.key)?.object.parse::<u64>().ok()?;
                    return Some(if (va > vb) == (prefer == Prefer::Larger) { a } else { b });
                }
            }
        }
        RELATIONS.iter().find_map(|r| {
            let inner = capture(r.question, q)?;
            let subject = self.resolve(&inner, known, 8)?;
            Self::lookup(known, &subject, r.key).map(|f| f.object.clone())
        })
    }
}
