//! Parsers for the structured text the prompts ask models to produce.
//!
//! Two grammars are used:
//!
//! * **Delimited tuples**: parts shaped `("tag"<|>field<|>…)` separated by
//!   ` ## ` and terminated by `<|COMPLETE|>`.
//! * **Sectioned text**: `HEADER: body` blocks, where a body runs until the
//!   next recognized header. A response may instead start with a sentinel
//!   word (`NONE`, `FAIL`, …) optionally followed by a `Reason:` line.
//!
//! Parsers tolerate extra whitespace and optional quoting. They never
//! tolerate a missing completion sentinel or a missing mandatory section.

use std::collections::BTreeMap;

pub const COMPLETE: &str = "<|COMPLETE|>";
pub const FIELD_SEP: &str = "<|>";
pub const PART_SEP: &str = " ## ";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GrammarError {
    #[error("missing {COMPLETE} sentinel")]
    MissingSentinel,
    #[error("part {index} is malformed: {reason}")]
    MalformedPart { index: usize, reason: String },
    #[error("missing mandatory sections: {}", .0.join(", "))]
    MissingSections(Vec<String>),
    #[error("{0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleRecord {
    pub tag: String,
    pub fields: Vec<String>,
}

impl TupleRecord {
    pub fn new(tag: impl Into<String>, fields: Vec<String>) -> Self {
        Self { tag: tag.into(), fields }
    }

    pub fn field(&self, i: usize) -> Option<&str> {
        self.fields.get(i).map(String::as_str)
    }
}

/// Result of [`parse_delimited_tuples`]: the well-formed records plus the
/// index and reason of every malformed part.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TupleParse {
    pub records: Vec<TupleRecord>,
    pub malformed: Vec<(usize, String)>,
}

impl TupleParse {
    /// Fail on the first malformed part.
    pub fn strict(self) -> Result<Vec<TupleRecord>, GrammarError> {
        match self.malformed.into_iter().next() {
            Some((index, reason)) => Err(GrammarError::MalformedPart { index, reason }),
            None => Ok(self.records),
        }
    }

    pub fn first(&self, tag: &str) -> Option<&TupleRecord> {
        self.records.iter().find(|r| r.tag == tag)
    }

    pub fn all<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a TupleRecord> + 'a {
        self.records.iter().filter(move |r| r.tag == tag)
    }
}

fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    let t = t.strip_prefix("```").map(|r| r.split_once('\n').map_or("", |x| x.1)).unwrap_or(t);
    t.strip_suffix("```").unwrap_or(t).trim()
}

fn unquote(s: &str) -> String {
    let t = s.trim();
    let t = if t.len() >= 2 && t.starts_with('"') && t.ends_with('"') { &t[1..t.len() - 1] } else { t };
    t.trim().to_string()
}

fn parse_part(part: &str) -> Result<TupleRecord, String> {
    let p = part.trim();
    if !p.starts_with('(') || !p.ends_with(')') {
        return Err("expected a parenthesized tuple".into());
    }
    let mut depth = 0i32;
    let chars: Vec<char> = p.chars().collect();
    for (i, c) in chars.iter().enumerate() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 || (depth == 0 && i + 1 != chars.len()) {
                    return Err("unbalanced parentheses".into());
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err("unbalanced parentheses".into());
    }
    let inner = &p[1..p.len() - 1];
    let mut fields = inner.split(FIELD_SEP).map(unquote);
    let tag = fields.next().unwrap_or_default();
    if tag.is_empty() {
        return Err("empty tag".into());
    }
    Ok(TupleRecord { tag, fields: fields.collect() })
}

/// Parse a delimited-tuple response. Errors only when the completion
/// sentinel is missing; per-part problems are reported in
/// [`TupleParse::malformed`].
pub fn parse_delimited_tuples(raw: &str) -> Result<TupleParse, GrammarError> {
    let body = strip_fences(raw);
    let Some(end) = body.find(COMPLETE) else {
        return Err(GrammarError::MissingSentinel);
    };
    let mut out = TupleParse::default();
    for (index, part) in body[..end].split("##").enumerate() {
        if part.trim().is_empty() {
            continue;
        }
        match parse_part(part) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => out.malformed.push((index, reason)),
        }
    }
    Ok(out)
}

/// Inverse of [`parse_delimited_tuples`] for well-formed records.
pub fn format_tuples(records: &[TupleRecord]) -> String {
    let parts: Vec<String> = records
        .iter()
        .map(|r| {
            let mut items = vec![format!("\"{}\"", r.tag)];
            items.extend(r.fields.iter().map(|f| format!("\"{f}\"")));
            format!("({})", items.join(FIELD_SEP))
        })
        .collect();
    format!("{}{COMPLETE}", parts.join(PART_SEP))
}

/// One header of a sectioned response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionSpec {
    pub key: String,
    pub required: bool,
}

/// Ordered headers plus the sentinel words that may replace the whole block.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SectionSchema {
    pub sections: Vec<SectionSpec>,
    pub sentinels: Vec<String>,
}

impl SectionSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn required(mut self, key: &str) -> Self {
        self.sections.push(SectionSpec { key: key.to_string(), required: true });
        self
    }

    pub fn optional(mut self, key: &str) -> Self {
        self.sections.push(SectionSpec { key: key.to_string(), required: false });
        self
    }

    pub fn sentinel(mut self, word: &str) -> Self {
        self.sentinels.push(word.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sectioned {
    /// Recognized headers mapped to their bodies, plus any text before the
    /// first header.
    Sections { preamble: String, sections: BTreeMap<String, String> },
    /// The response opened with a sentinel word.
    Sentinel { decision: String, reason: Option<String> },
}

impl Sectioned {
    pub fn section(&self, key: &str) -> Option<&str> {
        match self {
            Sectioned::Sections { sections, .. } => sections.get(key).map(String::as_str),
            Sectioned::Sentinel { .. } => None,
        }
    }
}

fn reason_from(text: &str) -> Option<String> {
    for line in text.lines() {
        let t = line.trim();
        if let Some((head, rest)) = t.split_once(':') {
            if head.trim().eq_ignore_ascii_case("reason") {
                let r = rest.trim();
                return (!r.is_empty()).then(|| r.to_string());
            }
        }
    }
    None
}

fn sentinel_of(body: &str, schema: &SectionSchema) -> Option<Sectioned> {
    let first = body.lines().find(|l| !l.trim().is_empty())?.trim();
    let first = first.trim_matches('*').trim();
    for s in &schema.sentinels {
        let Some(rest) = first.strip_prefix(s.as_str()) else { continue };
        if !(rest.is_empty() || rest.starts_with(char::is_whitespace) || rest.starts_with(':')) {
            continue;
        }
        let reason = reason_from(rest.trim_start_matches(':'))
            .or_else(|| {
                let inline = rest.trim_start_matches(':').trim();
                (!inline.is_empty() && !inline.to_ascii_lowercase().starts_with("reason")).then(|| inline.to_string())
            })
            .or_else(|| reason_from(body));
        return Some(Sectioned::Sentinel { decision: s.clone(), reason });
    }
    None
}

fn match_header<'a>(line: &str, schema: &'a SectionSchema) -> Option<(&'a str, String)> {
    let t = line.trim_start();
    schema
        .sections
        .iter()
        .filter_map(|s| {
            let rest = t.strip_prefix(s.key.as_str())?.strip_prefix(':')?;
            Some((s.key.as_str(), rest.trim().to_string()))
        })
        .max_by_key(|(k, _)| k.len())
}

/// Parse a sectioned response against `schema`.
pub fn parse_sectioned(raw: &str, schema: &SectionSchema) -> Result<Sectioned, GrammarError> {
    if schema.sections.is_empty() {
        return Err(GrammarError::Schema("section schema is empty".into()));
    }
    let body = strip_fences(raw);
    if let Some(s) = sentinel_of(body, schema) {
        return Ok(s);
    }

    let mut preamble: Vec<&str> = Vec::new();
    let mut sections: BTreeMap<String, String> = BTreeMap::new();
    let mut current: Option<(String, Vec<String>)> = None;
    let flush = |cur: Option<(String, Vec<String>)>, out: &mut BTreeMap<String, String>| {
        if let Some((key, lines)) = cur {
            let text = lines.join("\n").trim().to_string();
            out.entry(key).or_insert(text);
        }
    };

    for line in body.lines() {
        if let Some((key, rest)) = match_header(line, schema) {
            flush(current.take(), &mut sections);
            let lines = if rest.is_empty() { Vec::new() } else { vec![rest] };
            current = Some((key.to_string(), lines));
        } else if let Some((_, lines)) = current.as_mut() {
            lines.push(line.to_string());
        } else {
            preamble.push(line);
        }
    }
    flush(current.take(), &mut sections);

    let missing: Vec<String> = schema
        .sections
        .iter()
        .filter(|s| s.required && !sections.contains_key(&s.key))
        .map(|s| s.key.clone())
        .collect();
    if !missing.is_empty() {
        return Err(GrammarError::MissingSections(missing));
    }
    Ok(Sectioned::Sections { preamble: preamble.join("\n").trim().to_string(), sections })
}

/// Render `(header, body)` pairs in the sectioned grammar.
pub fn format_sectioned(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(k, v)| if v.contains('\n') { format!("{k}:\n{v}\n") } else { format!("{k}: {v}\n") })
        .collect()
}

/// Split off a leading bracketed tag such as `[ADJUST]`.
pub fn bracket_tag(raw: &str) -> Option<(String, &str)> {
    let body = strip_fences(raw);
    let start = body.find('[')?;
    if !body[..start].trim().is_empty() {
        return None;
    }
    let end = start + body[start..].find(']')?;
    let tag = body[start + 1..end].trim().to_string();
    (!tag.is_empty()).then(|| (tag, &body[end + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_single_tuple() {
        let p = parse_delimited_tuples(r#"("subject_entity"<|>"Paris"<|>"location")<|COMPLETE|>"#).unwrap();
        assert_eq!(p.records, vec![TupleRecord::new("subject_entity", vec!["Paris".into(), "location".into()])]);
        assert!(p.malformed.is_empty());
    }

    #[test]
    fn splits_on_delimiter() {
        let p = parse_delimited_tuples(r#"("a"<|>1) ## ("b"<|>2)<|COMPLETE|>"#).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.records[1], TupleRecord::new("b", vec!["2".into()]));
    }

    #[test]
    fn missing_sentinel_is_error() {
        assert_eq!(parse_delimited_tuples(r#"("a"<|>1)"#).unwrap_err(), GrammarError::MissingSentinel);
    }

    #[test]
    fn spaced_separators_and_fences_are_tolerated() {
        let raw = "```\n(\"bridge_entity\" <|> \"Bram Okoro\" <|> \"person\")\n##\n(\"query\" <|> \"Bram Okoro\" <|> \"q\")\n<|COMPLETE|>\n```";
        let p = parse_delimited_tuples(raw).unwrap();
        assert_eq!(p.records[0].fields, vec!["Bram Okoro", "person"]);
        assert_eq!(p.records[1].tag, "query");
    }

    #[test]
    fn unbalanced_part_reported_with_index() {
        let p = parse_delimited_tuples(r#"("a"<|>1) ## ("b"<|>(2) ## ("c"<|>3)<|COMPLETE|>"#).unwrap();
        assert_eq!(p.records.len(), 2);
        assert_eq!(p.malformed.len(), 1);
        assert_eq!(p.malformed[0].0, 1);
        assert!(matches!(p.strict(), Err(GrammarError::MalformedPart { index: 1, .. })));
    }

    #[test]
    fn nested_parentheses_inside_field() {
        let p = parse_delimited_tuples(r#"("attribute"<|>"Capital"<|>"Paris (France)"<|>"q")<|COMPLETE|>"#).unwrap();
        assert_eq!(p.records[0].fields[1], "Paris (France)");
    }

    fn mh_schema() -> SectionSchema {
        SectionSchema::new()
            .required("MULTI-HOP QUESTION")
            .required("ANSWER")
            .required("REASONING PATH")
            .required("SOURCES")
            .sentinel("NONE")
    }

    #[test]
    fn parses_multihop_block() {
        let raw = "MULTI-HOP QUESTION: Q\nANSWER:\nA\nREASONING PATH:\nR\nSOURCES:\nS";
        let Sectioned::Sections { sections, .. } = parse_sectioned(raw, &mh_schema()).unwrap() else {
            panic!("expected sections")
        };
        assert_eq!(sections.len(), 4);
        assert_eq!(sections["MULTI-HOP QUESTION"], "Q");
        assert_eq!(sections["ANSWER"], "A");
        assert_eq!(sections["SOURCES"], "S");
    }

    #[test]
    fn sentinel_with_reason() {
        let got = parse_sectioned("NONE\nReason: x", &mh_schema()).unwrap();
        assert_eq!(got, Sectioned::Sentinel { decision: "NONE".into(), reason: Some("x".into()) });
        let inline = parse_sectioned("NONE Reason: y", &mh_schema()).unwrap();
        assert_eq!(inline, Sectioned::Sentinel { decision: "NONE".into(), reason: Some("y".into()) });
    }

    #[test]
    fn empty_optional_body_is_empty_string() {
        let schema = SectionSchema::new().required("A").optional("B");
        let got = parse_sectioned("A: 1\nB:\n", &schema).unwrap();
        assert_eq!(got.section("B"), Some(""));
        let got = parse_sectioned("A: 1\n", &schema).unwrap();
        assert_eq!(got.section("B"), None);
    }

    #[test]
    fn missing_mandatory_listed() {
        let err = parse_sectioned("MULTI-HOP QUESTION: Q\n", &mh_schema()).unwrap_err();
        assert_eq!(
            err,
            GrammarError::MissingSections(vec!["ANSWER".into(), "REASONING PATH".into(), "SOURCES".into()])
        );
    }

    #[test]
    fn headers_are_case_sensitive() {
        let schema = SectionSchema::new().required("ANSWER").optional("Answer 1");
        let got = parse_sectioned("Answer 1: x\nANSWER: y", &schema).unwrap();
        assert_eq!(got.section("Answer 1"), Some("x"));
        assert_eq!(got.section("ANSWER"), Some("y"));
        assert!(parse_sectioned("answer: y", &schema).is_err());
    }

    #[test]
    fn sentinel_must_be_a_whole_word() {
        let schema = SectionSchema::new().required("A").sentinel("FAIL");
        assert!(parse_sectioned("FAILURE mode\nA: 1", &schema).unwrap().section("A").is_some());
    }

    #[test]
    fn bracket_tags() {
        let (tag, rest) = bracket_tag("[ADJUST]\nREFINED_QUESTION: q").unwrap();
        assert_eq!(tag, "ADJUST");
        assert!(rest.contains("REFINED_QUESTION"));
        assert!(bracket_tag("prose [PASS]").is_none());
    }
}
