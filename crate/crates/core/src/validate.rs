//! Structural checks on dataset records.
//!
//! Only what is decidable from the record itself is checked. Corpus-wide
//! shortcut detection would need relation extraction over every document and
//! is not attempted; [`check_no_shortcut`] is a segment-level approximation
//! that warns instead of failing.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::record::{ComparisonCore, QuestionRecord, QuestionType, SubParts, Triple};
use crate::text::{mentions, normalize_entity, same_entity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Fail,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub check: String,
    pub severity: Severity,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

impl Issue {
    fn fail(check: &str, message: impl Into<String>) -> Self {
        Self { check: check.into(), severity: Severity::Fail, message: message.into(), index: None }
    }

    fn warn(check: &str, message: impl Into<String>) -> Self {
        Self { check: check.into(), severity: Severity::Warn, message: message.into(), index: None }
    }

    fn at(mut self, index: usize) -> Self {
        self.index = Some(index);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub record_id: String,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn failures(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Fail)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("triple {0} has an empty field")]
    EmptyField(usize),
    #[error("triple {0} does not start where the previous triple ends")]
    Unlinked(usize),
    #[error("reasoning path is empty")]
    Empty,
}

/// Ordered triples where each tail is the next head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReasoningPath {
    triples: Vec<Triple>,
}

impl ReasoningPath {
    pub fn new(triples: Vec<Triple>) -> Result<Self, PathError> {
        if triples.is_empty() {
            return Err(PathError::Empty);
        }
        for (i, t) in triples.iter().enumerate() {
            if [&t.head, &t.relation, &t.tail, &t.doc_id].iter().any(|f| f.trim().is_empty()) {
                return Err(PathError::EmptyField(i));
            }
            if i > 0 && normalize_entity(&triples[i - 1].tail) != normalize_entity(&t.head) {
                return Err(PathError::Unlinked(i));
            }
        }
        Ok(Self { triples })
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn start(&self) -> &str {
        &self.triples[0].head
    }

    pub fn end(&self) -> &str {
        &self.triples[self.triples.len() - 1].tail
    }
}

/// Passes when consecutive triples come from different documents. Returns
/// the index of the first offending triple otherwise.
pub fn check_fact_distribution(path: &ReasoningPath) -> Result<(), usize> {
    for (i, w) in path.triples.windows(2).enumerate() {
        if w[0].doc_id == w[1].doc_id {
            return Err(i + 1);
        }
    }
    Ok(())
}

/// Warns when one evidence segment mentions both ends of the path.
pub fn check_no_shortcut(path: &ReasoningPath, record: &QuestionRecord) -> Option<Issue> {
    let (start, end) = (path.start(), path.end());
    record.evidence.iter().enumerate().find_map(|(i, e)| {
        (mentions(&e.segment, start) && mentions(&e.segment, end)).then(|| {
            Issue::warn("no_shortcut", format!("segment from {} mentions both `{start}` and `{end}`", e.doc_id)).at(i)
        })
    })
}

pub fn check_disjoint_sources(core: &ComparisonCore) -> Result<(), String> {
    if core.doc_a.trim().is_empty() {
        return Err("doc_a is missing".into());
    }
    if core.doc_b.trim().is_empty() {
        return Err("doc_b is missing".into());
    }
    if core.doc_a == core.doc_b {
        return Err(format!("both facts come from {}", core.doc_a));
    }
    Ok(())
}

pub fn validate_record(record: &QuestionRecord) -> ValidationReport {
    let mut issues = Vec::new();
    if record.answer.trim().is_empty() {
        issues.push(Issue::fail("answer", "answer is empty"));
    }
    if record.question.trim().is_empty() {
        issues.push(Issue::fail("question", "question is empty"));
    }
    let ids: BTreeSet<&str> = record.evidence.iter().map(|e| e.doc_id.as_str()).collect();
    if ids.len() < 2 {
        issues.push(Issue::fail("evidence", "evidence must cite at least two documents"));
    }
    if ids.len() != record.evidence.len() {
        issues.push(Issue::fail("evidence", "evidence cites a document twice"));
    }

    match (&record.qtype, &record.sub_parts) {
        (QuestionType::Bridge, SubParts::Bridge { hops }) => {
            if record.evidence.len() != record.hop_count {
                issues.push(Issue::fail(
                    "hop_count",
                    format!("{} evidence entries for hop_count {}", record.evidence.len(), record.hop_count),
                ));
            }
            for h in hops {
                if mentions(&record.question, &h.bridge_entity) {
                    issues.push(Issue::fail("entity_hidden", format!("question names bridge entity `{}`", h.bridge_entity)));
                }
            }
            if let Some(last) = record.sub_questions.last() {
                if !same_entity(&last.answer, &record.answer) {
                    issues.push(Issue::fail("answer_chain", "answer differs from the last sub-question answer"));
                }
            }
            if !record.triples.is_empty() {
                match ReasoningPath::new(record.triples.clone()) {
                    Err(e) => issues.push(Issue::fail("reasoning_path", e.to_string())),
                    Ok(path) => {
                        if let Err(i) = check_fact_distribution(&path) {
                            issues.push(
                                Issue::fail("fact_distribution", "consecutive facts come from the same document").at(i),
                            );
                        }
                        issues.extend(check_no_shortcut(&path, record));
                    }
                }
            }
        }
        (QuestionType::Comparison, SubParts::Comparison(core)) => {
            if let Err(m) = check_disjoint_sources(core) {
                issues.push(Issue::fail("disjoint_sources", m));
            }
            if record.evidence.len() != 2 {
                issues.push(Issue::fail("evidence", "comparison records carry exactly two evidence entries"));
            }
            if !core.paragraph_a.contains(core.fact_a.trim()) {
                issues.push(Issue::fail("fact_in_paragraph", "fact_a is not inside paragraph_a"));
            }
            if !core.paragraph_b.contains(core.fact_b.trim()) {
                issues.push(Issue::fail("fact_in_paragraph", "fact_b is not inside paragraph_b"));
            }
        }
        _ => issues.push(Issue::fail("type", "sub_parts do not match the question type")),
    }
    ValidationReport { record_id: record.id.clone(), issues }
}
