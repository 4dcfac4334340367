//! Contrastive reranker training data from simulated bridge attempts.
//!
//! Each source document is run through bridge extraction and the coarse
//! retrieval stage only. Every coarse candidate is tried with sub-question
//! generation and fusion; candidates that yield a question are positives,
//! the rest are negatives labelled with the stage that refused them.
//!
//! # Export format
//!
//! `groups.jsonl`, one group per line:
//!
//! ```text
//! {"query": "<bridge entity>", "query_hash": "<sha256 hex of query>",
//!  "pos": "<title\ntext>", "negs": ["<title\ntext>", ...],
//!  "pos_id": "d2", "neg_ids": ["d1", "d3"],
//!  "outcome_notes": {"d1": "step3a_subq", "d3": "step3b_fusion"}}
//! ```
//!
//! `manifest.json` next to it counts groups and negatives. A trained scorer
//! hands back `scores.tsv` (`query_hash<TAB>doc_id<TAB>score`), which
//! [`ScriptedReranker::load_scores_tsv`](crate::provider::scripted::ScriptedReranker::load_scores_tsv)
//! replays.
//!
//! # Objective
//!
//! The trainer minimises the mean over groups of `-log softmax(pos)` over the
//! group's scores. With equal scores every group costs `ln k`:
//!
//! ```
//! use hopsynth::forge::{group_loss, read_groups, ContrastiveGroup};
//! let line = r#"{"query":"Bram Okoro","query_hash":"x","pos":"p","negs":["a","b","c"],"pos_id":"d2","neg_ids":["d1","d3","d4"],"outcome_notes":{}}"#;
//! let g: ContrastiveGroup = serde_json::from_str(line).unwrap();
//! let k = g.neg_ids.len() + 1;
//! let loss = group_loss(0.7, &vec![0.7; g.neg_ids.len()]);
//! assert!((loss - (k as f64).ln()).abs() < 1e-9);
//! # let _ = read_groups;
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bridge::{extract_bridge, try_candidate, CandidateOutcome};
use crate::corpus::{CorpusError, CorpusStore, Document};
use crate::provider::scripted::query_hash;
use crate::record::{RejectionLedger, Stage};
use crate::retrieval::{index_text, ComplementaryQuery};
use crate::synth::{pick_sources, run_waves, RunParams, SourceResult, SynthContext, SynthError};

pub const GROUPS_FILE: &str = "groups.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// One positive and its negatives for one bridge entity. Texts are filled
/// in at export time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveGroup {
    pub query: String,
    pub query_hash: String,
    #[serde(default)]
    pub pos: String,
    #[serde(default)]
    pub negs: Vec<String>,
    pub pos_id: String,
    pub neg_ids: Vec<String>,
    /// Failure stage per negative doc id.
    pub outcome_notes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositivePolicy {
    /// Only the first success in candidate order.
    FirstSuccess,
    /// One group per success, all sharing the failures as negatives.
    AllSuccesses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForgeParams {
    /// Candidates per group (one positive, up to k-1 negatives).
    pub group_size: usize,
    pub positives: PositivePolicy,
}

impl Default for ForgeParams {
    fn default() -> Self {
        Self { group_size: 10, positives: PositivePolicy::FirstSuccess }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labelled {
    pub doc_id: String,
    /// `None` for a success.
    pub stage: Option<Stage>,
}

/// Turn labelled candidates into groups. Groups need both classes.
pub fn group_candidates(query: &str, labelled: &[Labelled], params: &ForgeParams) -> Vec<ContrastiveGroup> {
    let k = params.group_size.max(2);
    let successes: Vec<&Labelled> = labelled.iter().filter(|l| l.stage.is_none()).collect();
    let failures: Vec<&Labelled> = labelled.iter().filter(|l| l.stage.is_some()).take(k - 1).collect();
    if successes.is_empty() || failures.is_empty() {
        return Vec::new();
    }
    let positives = match params.positives {
        PositivePolicy::FirstSuccess => &successes[..1],
        PositivePolicy::AllSuccesses => &successes[..],
    };
    positives
        .iter()
        .map(|p| ContrastiveGroup {
            query: query.to_string(),
            query_hash: query_hash(query),
            pos: String::new(),
            negs: Vec::new(),
            pos_id: p.doc_id.clone(),
            neg_ids: failures.iter().map(|f| f.doc_id.clone()).collect(),
            outcome_notes: failures
                .iter()
                .map(|f| (f.doc_id.clone(), f.stage.expect("failure").name().to_string()))
                .collect(),
        })
        .collect()
}

/// Simulate every coarse candidate for one source document.
pub fn simulate_source(ctx: &SynthContext, source: &Document, run: &RunParams) -> Result<(String, Vec<Labelled>), SynthError> {
    let x = match extract_bridge(source, &ctx.generator, None, &[])? {
        Ok(x) => x,
        Err(_) => return Ok((String::new(), Vec::new())),
    };
    let exclude = Default::default();
    let req = ComplementaryQuery { query: &x.query, rerank_query: &x.entity_name, source, exclude: &exclude };
    let coarse = ctx.retriever.coarse_stage(&req, &run.mmr)?;
    let mut labelled = Vec::with_capacity(coarse.len());
    for e in &coarse.entries {
        let target = ctx.retriever.store().get(&e.doc_id)?;
        let stage = match try_candidate(ctx, &x, source, target)? {
            CandidateOutcome::Success { .. } => None,
            other => other.stage(),
        };
        labelled.push(Labelled { doc_id: e.doc_id.clone(), stage });
    }
    Ok((x.entity_name, labelled))
}

#[derive(Debug, Clone)]
pub struct ForgeOutput {
    pub groups: Vec<ContrastiveGroup>,
    /// Candidate-level accounting: every simulated candidate is one attempt.
    pub ledger: RejectionLedger,
    pub sources_processed: usize,
}

pub fn forge(ctx: &SynthContext, run: &RunParams, params: &ForgeParams) -> Result<ForgeOutput, SynthError> {
    run.mmr.validate()?;
    let sources = pick_sources(&ctx.retriever, run)?;
    let out = run_waves(&sources, run, |d| {
        let (query, labelled) = simulate_source(ctx, d, run)?;
        let mut res = SourceResult::default();
        for l in &labelled {
            match l.stage {
                None => res.ledger.success(),
                Some(s) => res.ledger.reject(s),
            }
        }
        res.outputs = group_candidates(&query, &labelled, params);
        Ok(res)
    })?;
    Ok(ForgeOutput { groups: out.outputs, ledger: out.ledger, sources_processed: out.sources_processed })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgeManifest {
    pub groups: usize,
    pub negatives: usize,
    pub max_group_size: usize,
    pub file: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {source}")]
    Parse { path: String, line: usize, source: serde_json::Error },
    #[error("invalid group: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ForgeError + '_ {
    move |source| ForgeError::Io { path: path.display().to_string(), source }
}

fn check_group(g: &ContrastiveGroup) -> Result<(), ForgeError> {
    if g.neg_ids.is_empty() {
        return Err(ForgeError::Invalid(format!("group for `{}` has no negatives", g.query)));
    }
    if g.neg_ids.contains(&g.pos_id) {
        return Err(ForgeError::Invalid(format!("positive {} is also a negative", g.pos_id)));
    }
    Ok(())
}

/// Resolve texts from the store and write `groups.jsonl` and `manifest.json`.
pub fn export_groups(groups: &[ContrastiveGroup], store: &CorpusStore, dir: &Path) -> Result<ForgeManifest, ForgeError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(GROUPS_FILE);
    let mut f = std::io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
    let mut negatives = 0;
    let mut max_group_size = 0;
    for g in groups {
        check_group(g)?;
        let mut g = g.clone();
        g.pos = index_text(store.get(&g.pos_id)?);
        g.negs = g.neg_ids.iter().map(|id| store.get(id).map(index_text)).collect::<Result<_, _>>()?;
        negatives += g.negs.len();
        max_group_size = max_group_size.max(g.negs.len() + 1);
        let line = serde_json::to_string(&g).expect("group serializes");
        writeln!(f, "{line}").map_err(io_err(&path))?;
    }
    f.flush().map_err(io_err(&path))?;
    let manifest = ForgeManifest { groups: groups.len(), negatives, max_group_size, file: GROUPS_FILE.into() };
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest).expect("manifest serializes")).map_err(io_err(&mpath))?;
    Ok(manifest)
}

pub fn read_groups(path: &Path) -> Result<Vec<ContrastiveGroup>, ForgeError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let g: ContrastiveGroup = serde_json::from_str(&line)
            .map_err(|source| ForgeError::Parse { path: path.display().to_string(), line: i + 1, source })?;
        check_group(&g)?;
        out.push(g);
    }
    Ok(out)
}

/// `-log softmax` of the positive score against the whole group.
pub fn group_loss(pos: f64, negs: &[f64]) -> f64 {
    let m = negs.iter().copied().fold(pos, f64::max);
    let z: f64 = std::iter::once(pos).chain(negs.iter().copied()).map(|s| (s - m).exp()).sum();
    -(pos - m) + z.ln()
}

/// Mean [`group_loss`] over groups of `(pos, negs)` scores.
pub fn batch_loss(groups: &[(f64, Vec<f64>)]) -> f64 {
    if groups.is_empty() {
        return 0.0;
    }
    groups.iter().map(|(p, n)| group_loss(*p, n)).sum::<f64>() / groups.len() as f64
}

/// Write a score table in the `scores.tsv` layout.
pub fn write_scores_tsv(path: &Path, rows: &[(String, String, f64)]) -> Result<(), ForgeError> {
    let mut s = String::from("# query_hash\tdoc_id\tscore\n");
    for (q, d, v) in rows {
        s.push_str(&format!("{}\t{d}\t{v}\n", query_hash(q)));
    }
    fs::write(path, s).map_err(io_err(path))
}
