//! LLM-as-judge scoring, judge reliability and quality aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reliability::{avg_intra_item_sd, fleiss_kappa, krippendorff_alpha, Metric};
use crate::prompts;
use crate::provider::grammar::COMPLETE;
use crate::provider::{CachePolicy, ChatClient, ProviderError};
use crate::record::QuestionRecord;

/// `(key, label as it appears in the judge output)`.
pub const DIMENSIONS: [(&str, &str); 10] = [
    ("Fluency", "Fluency"),
    ("Clarity", "Clarity"),
    ("Conciseness", "Conciseness"),
    ("Relevance", "Relevance"),
    ("Consistency", "Consistency"),
    ("QuestionAnswerability", "Question Answerability"),
    ("AnswerQuestionConsistency", "Answer-Question Consistency"),
    ("InformationIntegration", "Information Integration Ability"),
    ("ReasoningPathGuidance", "Reasoning Path Guidance"),
    ("LogicalSophistication", "Logical Sophistication"),
];

/// Alternative labels seen in the comparison judge output.
const LABEL_ALIASES: [(&str, &str); 1] = [("Information Integration Ability", "Information Integration")];

pub const MULTI_HOP_LABEL: &str = "Multi-Hop Reasoning Requirement";

pub fn dimension_labels() -> Vec<&'static str> {
    DIMENSIONS.iter().map(|(_, l)| *l).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeAssessment {
    pub item_id: String,
    pub judge_id: String,
    pub run_index: usize,
    pub multi_hop: bool,
    pub dims: BTreeMap<String, u8>,
}

impl JudgeAssessment {
    pub fn mean(&self) -> f64 {
        self.dims.values().map(|&v| v as f64).sum::<f64>() / self.dims.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AssessmentError {
    #[error("missing {COMPLETE}")]
    MissingSentinel,
    #[error("unknown rating `{0}`")]
    UnknownRating(String),
    #[error("multi-hop flag `{0}` is not yes/no")]
    BadFlag(String),
    #[error("missing line for {0}")]
    Missing(String),
}

pub fn rating_value(word: &str) -> Option<u8> {
    match word.trim().trim_matches(|c: char| c == '*' || c == '.').to_ascii_lowercase().as_str() {
        "very poor" => Some(1),
        "poor" => Some(2),
        "fair" => Some(3),
        "good" => Some(4),
        "very good" => Some(5),
        _ => None,
    }
}

/// Parse one judge reply into `(multi_hop, dims)`.
pub fn parse_assessment(raw: &str) -> Result<(bool, BTreeMap<String, u8>), AssessmentError> {
    let body = raw.split_once(COMPLETE).ok_or(AssessmentError::MissingSentinel)?.0;
    let mut lines: BTreeMap<String, String> = BTreeMap::new();
    for line in body.lines() {
        let t = line.trim().trim_start_matches(['-', '*']).trim();
        if let Some((k, v)) = t.split_once(':') {
            lines.entry(k.trim().trim_matches('*').trim().to_string()).or_insert_with(|| v.trim().to_string());
        }
    }
    let flag = lines.get(MULTI_HOP_LABEL).ok_or_else(|| AssessmentError::Missing(MULTI_HOP_LABEL.into()))?;
    let multi_hop = match flag.trim_matches(|c: char| c == '*' || c == '.').to_ascii_lowercase().as_str() {
        "yes" => true,
        "no" => false,
        _ => return Err(AssessmentError::BadFlag(flag.clone())),
    };
    let mut dims = BTreeMap::new();
    for (key, label) in DIMENSIONS {
        let alias = LABEL_ALIASES.iter().find(|(l, _)| *l == label).map(|(_, a)| *a);
        let v = lines
            .get(label)
            .or_else(|| alias.and_then(|a| lines.get(a)))
            .ok_or_else(|| AssessmentError::Missing(label.into()))?;
        dims.insert(key.to_string(), rating_value(v).ok_or_else(|| AssessmentError::UnknownRating(v.clone()))?);
    }
    Ok((multi_hop, dims))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeBatch {
    pub assessments: Vec<JudgeAssessment>,
    /// Runs dropped after a malformed reply and a malformed retry.
    pub dropped: usize,
}

/// `runs` independent judgements of one item. With `cache_off` every run
/// goes upstream, as repeated cached calls would agree trivially.
pub fn judge(
    item: &QuestionRecord,
    client: &ChatClient,
    judge_id: &str,
    runs: usize,
    cache_off: bool,
) -> Result<JudgeBatch, ProviderError> {
    if runs == 0 {
        return Err(ProviderError::Config("runs must be at least 1".into()));
    }
    let passages: Vec<String> = item.evidence.iter().map(|e| e.segment.clone()).collect();
    let prompt = prompts::judge(&item.question, &item.answer, &passages, &dimension_labels());
    let policy = if cache_off { CachePolicy::Bypass } else { CachePolicy::Use };
    let mut batch = JudgeBatch::default();
    for run_index in 0..runs {
        let mut parsed = parse_assessment(&client.chat_policy(&prompt, policy)?);
        if parsed.is_err() {
            parsed = parse_assessment(&client.chat_policy(&prompt, if cache_off { policy } else { CachePolicy::Refresh })?);
        }
        match parsed {
            Ok((multi_hop, dims)) => batch.assessments.push(JudgeAssessment {
                item_id: item.id.clone(),
                judge_id: judge_id.to_string(),
                run_index,
                multi_hop,
                dims,
            }),
            Err(_) => batch.dropped += 1,
        }
    }
    Ok(batch)
}

/// Judge every item, items in parallel. Output follows dataset order.
pub fn judge_dataset(
    dataset: &[QuestionRecord],
    client: &ChatClient,
    judge_id: &str,
    runs: usize,
    cache_off: bool,
) -> Result<JudgeBatch, ProviderError> {
    let batches = dataset
        .par_iter()
        .map(|r| judge(r, client, judge_id, runs, cache_off))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(batches.into_iter().fold(JudgeBatch::default(), |mut acc, b| {
        acc.assessments.extend(b.assessments);
        acc.dropped += b.dropped;
        acc
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimReliability {
    pub avg_sd: f64,
    pub alpha: f64,
    /// `None` when chance agreement is 1.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    pub judge_id: String,
    pub runs: usize,
    /// Items with exactly `runs` assessments.
    pub items: usize,
    /// Items left out because some runs were dropped.
    pub incomplete_items: usize,
    /// Means over the dimensions.
    pub avg_sd: f64,
    pub alpha: f64,
    pub kappa: Option<f64>,
    pub multi_hop_alpha: Option<f64>,
    pub per_dimension: BTreeMap<String, DimReliability>,
    pub flags: Vec<String>,
}

/// Reliability of one judge from its repeated runs.
pub fn reliability_report(assessments: &[JudgeAssessment], judge_id: &str, runs: usize) -> Result<ReliabilityReport, super::reliability::ReliabilityError> {
    let mut by_item: BTreeMap<&str, Vec<&JudgeAssessment>> = BTreeMap::new();
    for a in assessments.iter().filter(|a| a.judge_id == judge_id) {
        by_item.entry(a.item_id.as_str()).or_default().push(a);
    }
    let total = by_item.len();
    let complete: Vec<Vec<&JudgeAssessment>> = by_item
        .into_values()
        .filter(|v| v.len() == runs)
        .map(|mut v| {
            v.sort_by_key(|a| a.run_index);
            v
        })
        .collect();
    let mut flags = Vec::new();
    let mut per_dimension = BTreeMap::new();
    for (key, _) in DIMENSIONS {
        let ints: Vec<Vec<u32>> = complete.iter().map(|v| v.iter().map(|a| a.dims[key] as u32).collect()).collect();
        let floats: Vec<Vec<f64>> = ints.iter().map(|r| r.iter().map(|&x| x as f64).collect()).collect();
        let opt: Vec<Vec<Option<f64>>> = floats.iter().map(|r| r.iter().map(|&x| Some(x)).collect()).collect();
        let alpha = krippendorff_alpha(&opt, Metric::Interval)?;
        if alpha.degenerate {
            flags.push(format!("{key}: no variation, alpha fixed at 1"));
        }
        let kappa = fleiss_kappa(&ints).ok().map(|k| k.kappa);
        if kappa.is_none() {
            flags.push(format!("{key}: kappa undefined"));
        }
        per_dimension.insert(key.to_string(), DimReliability { avg_sd: avg_intra_item_sd(&floats)?, alpha: alpha.value, kappa });
    }
    let mean = |f: &dyn Fn(&DimReliability) -> f64| per_dimension.values().map(f).sum::<f64>() / per_dimension.len() as f64;
    let kappas: Vec<f64> = per_dimension.values().filter_map(|d| d.kappa).collect();
    let flags_matrix: Vec<Vec<Option<f64>>> =
        complete.iter().map(|v| v.iter().map(|a| Some(if a.multi_hop { 1.0 } else { 0.0 })).collect()).collect();
    let multi_hop_alpha = krippendorff_alpha(&flags_matrix, Metric::Nominal).ok().map(|a| a.value);
    Ok(ReliabilityReport {
        judge_id: judge_id.to_string(),
        runs,
        items: complete.len(),
        incomplete_items: total - complete.len(),
        avg_sd: mean(&|d| d.avg_sd),
        alpha: mean(&|d| d.alpha),
        kappa: (!kappas.is_empty()).then(|| kappas.iter().sum::<f64>() / kappas.len() as f64),
        multi_hop_alpha,
        per_dimension,
        flags,
    })
}

/// Heatmap matrices (judges × dimensions), one CSV per metric.
pub fn write_heatmaps(reports: &[ReliabilityReport], dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    type Pick = fn(&DimReliability) -> Option<f64>;
    let metrics: [(&str, Pick); 3] =
        [("avg_sd", |d| Some(d.avg_sd)), ("alpha", |d| Some(d.alpha)), ("kappa", |d| d.kappa)];
    for (name, pick) in metrics {
        let mut w = csv::Writer::from_path(dir.join(format!("heatmap_{name}.csv")))?;
        let mut header = vec!["judge".to_string()];
        header.extend(DIMENSIONS.iter().map(|(k, _)| k.to_string()));
        w.write_record(&header)?;
        for r in reports {
            let mut row = vec![r.judge_id.clone()];
            row.extend(
                DIMENSIONS.iter().map(|(k, _)| r.per_dimension.get(*k).and_then(pick).map_or(String::new(), |v| format!("{v:.4}"))),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AvgPolicy {
    /// Average over every item.
    #[default]
    IncludeAll,
    /// Average only over items the judges call multi-hop.
    MultiHopOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemQuality {
    pub item_id: String,
    pub multi_hop: bool,
    pub avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub items: usize,
    pub multi_hop_pct: f64,
    pub avg_score: f64,
    pub per_dimension: BTreeMap<String, f64>,
    pub per_item: Vec<ItemQuality>,
}

/// Aggregate assessments from the selected judges (all when `judges` is
/// `None`). An item counts as multi-hop when a strict majority of all its
/// runs say yes.
pub fn aggregate_quality(assessments: &[JudgeAssessment], judges: Option<&BTreeSet<String>>, policy: AvgPolicy) -> QualityReport {
    let mut by_item: BTreeMap<&str, Vec<&JudgeAssessment>> = BTreeMap::new();
    for a in assessments.iter().filter(|a| judges.is_none_or(|j| j.contains(&a.judge_id))) {
        by_item.entry(a.item_id.as_str()).or_default().push(a);
    }
    let per_item: Vec<ItemQuality> = by_item
        .iter()
        .map(|(id, v)| ItemQuality {
            item_id: id.to_string(),
            multi_hop: 2 * v.iter().filter(|a| a.multi_hop).count() > v.len(),
            avg: v.iter().map(|a| a.mean()).sum::<f64>() / v.len() as f64,
        })
        .collect();
    let items = per_item.len();
    let multi_hop_pct = if items == 0 { 0.0 } else { 100.0 * per_item.iter().filter(|i| i.multi_hop).count() as f64 / items as f64 };
    let counted: BTreeSet<&str> = per_item
        .iter()
        .filter(|i| policy == AvgPolicy::IncludeAll || i.multi_hop)
        .map(|i| i.item_id.as_str())
        .collect();
    let avg_score = {
        let v: Vec<f64> = per_item.iter().filter(|i| counted.contains(i.item_id.as_str())).map(|i| i.avg).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let mut per_dimension = BTreeMap::new();
    for (key, _) in DIMENSIONS {
        let item_means: Vec<f64> = by_item
            .iter()
            .filter(|(id, _)| counted.contains(*id))
            .map(|(_, v)| v.iter().map(|a| a.dims.get(key).copied().unwrap_or(0) as f64).sum::<f64>() / v.len() as f64)
            .collect();
        if !item_means.is_empty() {
            per_dimension.insert(key.to_string(), item_means.iter().sum::<f64>() / item_means.len() as f64);
        }
    }
    QualityReport { items, multi_hop_pct, avg_score, per_dimension, per_item }
}

/// Plain-text table with one row per labelled report.
pub fn format_quality_table(rows: &[(String, QualityReport)]) -> String {
    let width = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(7).max(7);
    let mut s = format!("{:<width$}  {:>10}  {:>9}  {:>5}\n", "Dataset", "MultiHop%", "AvgScore", "Items");
    for (label, r) in rows {
        let _ = writeln!(s, "{label:<width$}  {:>10.1}  {:>9.2}  {:>5}", r.multi_hop_pct, r.avg_score, r.items);
    }
    s
}

/// Plain-text per-dimension means.
pub fn format_dimension_table(rows: &[(String, QualityReport)]) -> String {
    let mut s = format!("{:<26}", "Dimension");
    for (label, _) in rows {
        let _ = write!(s, "  {label:>12}");
    }
    s.push('\n');
    for (key, _) in DIMENSIONS {
        let _ = write!(s, "{key:<26}");
        for (_, r) in rows {
            let _ = write!(s, "  {:>12.2}", r.per_dimension.get(key).copied().unwrap_or(f64::NAN));
        }
        s.push('\n');
    }
    s
}

pub fn write_assessments(path: &Path, assessments: &[JudgeAssessment]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut s = String::new();
    for a in assessments {
        s.push_str(&serde_json::to_string(a).expect("assessment serializes"));
        s.push('\n');
    }
    std::fs::write(path, s)
}

pub fn read_assessments(path: &Path) -> std::io::Result<Vec<JudgeAssessment>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        .collect()
}
