//! Dataset records, the rejection ledger and JSONL dataset I/O.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    Bridge,
    Comparison,
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuestionType::Bridge => "bridge",
            QuestionType::Comparison => "comparison",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub doc_id: String,
    pub segment: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubQuestion {
    pub question: String,
    pub answer: String,
}

/// A relational fact `(head, relation, tail)` attributed to one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub doc_id: String,
}

/// One `d_s → e_b → d_t` hop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeHop {
    pub source_doc: String,
    pub target_doc: String,
    pub bridge_entity: String,
    pub entity_type: String,
    pub sq1: String,
    pub a1: String,
    pub sq2: String,
    pub a2: String,
    pub doc_a_segments: String,
    pub doc_b_segments: String,
    pub reasoning_note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonCore {
    pub entity_a: String,
    pub entity_b: String,
    pub attribute: String,
    pub value_a: Option<String>,
    #[serde(default)]
    pub value_b: Option<String>,
    pub fact_a: String,
    pub fact_b: String,
    pub paragraph_a: String,
    pub paragraph_b: String,
    pub doc_a: String,
    pub doc_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SubParts {
    Bridge { hops: Vec<BridgeHop> },
    Comparison(ComparisonCore),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEvent {
    pub stage: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<String>,
}

impl ProvenanceEvent {
    pub fn new(stage: &str, detail: impl Into<String>) -> Self {
        Self { stage: stage.to_string(), detail: detail.into(), before: None, after: None }
    }

    pub fn change(stage: &str, detail: impl Into<String>, before: &str, after: &str) -> Self {
        Self {
            stage: stage.to_string(),
            detail: detail.into(),
            before: Some(before.to_string()),
            after: Some(after.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    #[serde(rename = "type")]
    pub qtype: QuestionType,
    pub question: String,
    pub answer: String,
    pub reasoning_path: String,
    pub sub_questions: Vec<SubQuestion>,
    pub sub_parts: SubParts,
    pub evidence: Vec<Evidence>,
    pub hop_count: usize,
    #[serde(default)]
    pub triples: Vec<Triple>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub provenance: Vec<ProvenanceEvent>,
}

impl QuestionRecord {
    /// Content hash over type, question, answer and evidence doc ids.
    pub fn content_id(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.qtype.to_string().as_bytes());
        for part in [&self.question, &self.answer] {
            h.update([0]);
            h.update(part.as_bytes());
        }
        for e in &self.evidence {
            h.update([0]);
            h.update(e.doc_id.as_bytes());
        }
        let prefix = match self.qtype {
            QuestionType::Bridge => "b",
            QuestionType::Comparison => "c",
        };
        format!("{prefix}-{}", &hex::encode(h.finalize())[..16])
    }

    pub fn assign_id(&mut self) {
        self.id = self.content_id();
    }

    pub fn evidence_doc_ids(&self) -> Vec<&str> {
        self.evidence.iter().map(|e| e.doc_id.as_str()).collect()
    }

    /// Bridge entities of every hop (empty for comparison records).
    pub fn bridge_entities(&self) -> Vec<&str> {
        match &self.sub_parts {
            SubParts::Bridge { hops } => hops.iter().map(|h| h.bridge_entity.as_str()).collect(),
            SubParts::Comparison(_) => Vec::new(),
        }
    }

    pub fn flag(&mut self, flag: &str) {
        if !self.flags.iter().any(|f| f == flag) {
            self.flags.push(flag.to_string());
        }
    }

    pub fn log(&mut self, event: ProvenanceEvent) {
        self.provenance.push(event);
    }
}

/// Pipeline stage at which an attempt was discarded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ExtractionMalformed,
    RetrievalEmpty,
    Step3aSubq,
    Step3bFusion,
    Filter,
    Construction,
    PolisherReject,
    ChainDegenerate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::ExtractionMalformed => "extraction_malformed",
            Stage::RetrievalEmpty => "retrieval_empty",
            Stage::Step3aSubq => "step3a_subq",
            Stage::Step3bFusion => "step3b_fusion",
            Stage::Filter => "filter",
            Stage::Construction => "construction",
            Stage::PolisherReject => "polisher_reject",
            Stage::ChainDegenerate => "chain_degenerate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Attempt accounting. Every attempt ends as exactly one success or one
/// stage rejection, so `attempts == successes + Σ rejections`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionLedger {
    pub attempts: u64,
    pub successes: u64,
    pub rejections: BTreeMap<Stage, u64>,
}

impl RejectionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn success(&mut self) {
        self.attempts += 1;
        self.successes += 1;
    }

    pub fn reject(&mut self, stage: Stage) {
        self.attempts += 1;
        *self.rejections.entry(stage).or_default() += 1;
    }

    pub fn merge(&mut self, other: &RejectionLedger) {
        self.attempts += other.attempts;
        self.successes += other.successes;
        for (s, n) in &other.rejections {
            *self.rejections.entry(*s).or_default() += n;
        }
    }

    pub fn rejected(&self, stage: Stage) -> u64 {
        self.rejections.get(&stage).copied().unwrap_or(0)
    }

    pub fn total_rejections(&self) -> u64 {
        self.rejections.values().sum()
    }

    pub fn reconciles(&self) -> bool {
        self.attempts == self.successes + self.total_rejections()
    }

    /// Rejections at `stage` as a fraction of all attempts.
    pub fn rate(&self, stage: Stage) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.rejected(stage) as f64 / self.attempts as f64
        }
    }

    /// Attempts per success.
    pub fn avg_attempts(&self) -> Option<f64> {
        (self.successes > 0).then(|| self.attempts as f64 / self.successes as f64)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
}

pub fn write_dataset(path: &Path, records: &[QuestionRecord]) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io)?;
    }
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("records serialize");
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)
}

pub fn read_dataset(path: &Path) -> Result<Vec<QuestionRecord>, DatasetError> {
    let p = path.display().to_string();
    let f = std::fs::File::open(path).map_err(|source| DatasetError::Io { path: p.clone(), source })?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io { path: p.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Parse { path: p.clone(), line: n + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_reconciles_and_rates() {
        let mut l = RejectionLedger::new();
        l.reject(Stage::Step3aSubq);
        l.success();
        assert!(l.reconciles());
        assert_eq!(l.avg_attempts(), Some(2.0));
        assert_eq!(l.rate(Stage::Step3aSubq), 0.5);
        let mut m = RejectionLedger::new();
        m.merge(&l);
        m.merge(&l);
        assert_eq!(m.attempts, 4);
        assert!(m.reconciles());
    }

    #[test]
    fn ledger_serializes_stage_names() {
        let mut l = RejectionLedger::new();
        l.reject(Stage::Step3bFusion);
        let j = serde_json::to_string(&l).unwrap();
        assert!(j.contains("\"step3b_fusion\":1"), "{j}");
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out/ds.jsonl");
        let recs = vec![fixtures::bridge_record(), fixtures::comparison_record()];
        write_dataset(&p, &recs).unwrap();
        assert_eq!(read_dataset(&p).unwrap(), recs);
        let line = std::fs::read_to_string(&p).unwrap();
        assert!(line.starts_with("{\"id\":\"b-"));
        assert!(line.contains("\"type\":\"bridge\""));
        assert!(line.contains("\"kind\":\"comparison\""));
    }

    #[test]
    fn id_is_content_hash() {
        let a = fixtures::bridge_record();
        let mut b = a.clone();
        b.provenance.push(ProvenanceEvent::new("x", "y"));
        assert_eq!(a.content_id(), b.content_id());
        b.question.push('!');
        assert_ne!(a.content_id(), b.content_id());
    }
}
