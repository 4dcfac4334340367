//! Prompt construction.
//!
//! Every prompt opens with a `TASK: <name>` line and carries its inputs in
//! `=== Label ===` blocks, so prompts can be inspected (and answered by the
//! simulated world) without guessing at free text.

use std::collections::BTreeMap;

use crate::record::SubQuestion;

pub mod task {
    pub const BRIDGE_EXTRACT: &str = "bridge_extract";
    pub const BRIDGE_SUBQ: &str = "bridge_subquestions";
    pub const BRIDGE_FUSE: &str = "bridge_fuse";
    pub const BRIDGE_POLISH: &str = "bridge_polish";
    pub const COMPARE_EXTRACT: &str = "compare_extract";
    pub const COMPARE_SCORE: &str = "compare_score";
    pub const COMPARE_PLAN: &str = "compare_plan";
    pub const COMPARE_BUILD: &str = "compare_build";
    pub const COMPARE_POLISH: &str = "compare_polish";
    pub const JUDGE: &str = "judge";
    pub const SOLVE: &str = "solve";
}

struct Prompt {
    out: String,
}

impl Prompt {
    fn new(task: &str, instructions: &str) -> Self {
        Self { out: format!("TASK: {task}\n\n{}\n", instructions.trim()) }
    }

    fn block(mut self, label: &str, body: &str) -> Self {
        self.out.push_str(&format!("\n=== {label} ===\n{}\n", body.trim_end()));
        self
    }

    fn finish(self, format: &str) -> String {
        self.block("Output Format", format).out
    }
}

/// Split a prompt built here into its task name and labelled blocks.
pub fn parse_prompt(prompt: &str) -> Option<(String, BTreeMap<String, String>)> {
    let first = prompt.lines().next()?;
    let task = first.strip_prefix("TASK: ")?.trim().to_string();
    let mut blocks = BTreeMap::new();
    let mut current: Option<(String, Vec<&str>)> = None;
    for line in prompt.lines().skip(1) {
        let header = line.strip_prefix("=== ").and_then(|l| l.strip_suffix(" ==="));
        if let Some(label) = header {
            if let Some((k, v)) = current.take() {
                blocks.insert(k, v.join("\n").trim_end_matches('\n').to_string());
            }
            current = Some((label.to_string(), Vec::new()));
        } else if let Some((_, v)) = current.as_mut() {
            v.push(line);
        }
    }
    if let Some((k, v)) = current {
        blocks.insert(k, v.join("\n").trim_end_matches('\n').to_string());
    }
    Some((task, blocks))
}

pub fn format_sub_questions(chain: &[SubQuestion]) -> String {
    chain
        .iter()
        .enumerate()
        .map(|(i, s)| format!("Sub-question {n}: {}\nAnswer {n}: {}", s.question, s.answer, n = i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// `required` pins the entity when a chain continues from a known answer;
/// `avoid` lists entities already used earlier in the chain.
pub fn bridge_extract(title: &str, text: &str, required: Option<&str>, avoid: &[String]) -> String {
    let mut p = Prompt::new(
        task::BRIDGE_EXTRACT,
        "Read the document and pick one entity that is likely described further in other documents. \
The entity must be a concrete, unambiguous name with several attributes worth asking about, \
and it must differ from the document title. Copy the passage that mentions it, prefixed with \
a one-sentence introduction, and write one search query that looks for information about the \
entity that this document does not already give.",
    )
    .block("Document Title", title)
    .block("Document", text);
    if let Some(req) = required {
        p = p.block("Required Entity", req);
    }
    if !avoid.is_empty() {
        p = p.block("Avoid Entities", &avoid.join("\n"));
    }
    p.finish(
        "Three parts separated by ` ## `, then <|COMPLETE|>:\n\
(\"bridge_entity\"<|>\"<entity name>\"<|>\"<entity type>\") ## \
(\"relevant_segments\"<|>\"<entity name>\"<|>\"<introduction + copied passage>\") ## \
(\"query\"<|>\"<entity name>\"<|>\"<search query>\")<|COMPLETE|>",
    )
}

pub fn bridge_subquestions(
    entity: &str,
    entity_type: &str,
    doc_a_title: &str,
    doc_a_segments: &str,
    doc_b_title: &str,
    doc_b_text: &str,
) -> String {
    Prompt::new(
        task::BRIDGE_SUBQ,
        "Two documents may be linked through the bridge entity. Write two sub-questions: the first is \
answered from Document A and its answer is exactly the bridge entity; the second names the \
bridge entity and is answered from Document B alone. If Document B says nothing usable about \
the bridge entity, reply with INVALID_BRIDGE_CONNECTION and a Reason line instead.",
    )
    .block("Bridge Entity", entity)
    .block("Entity Type", entity_type)
    .block("Document A Title", doc_a_title)
    .block("Document A Segments", doc_a_segments)
    .block("Document B Title", doc_b_title)
    .block("Document B", doc_b_text)
    .finish(
        "ANALYSIS:\nBridge connection: <how the entity links the documents>\n\
Document A segments: <passages from Document A>\nDocument B segments: <passages from Document B>\n\
Reasoning path: <A to B>\n\nSUB-QUESTIONS:\nSub-question 1: <question>\nAnswer 1: <bridge entity>\n\
Sub-question 2: <question naming the bridge entity>\nAnswer 2: <answer from Document B>\n\n\
or\n\nINVALID_BRIDGE_CONNECTION\nReason: <short explanation>",
    )
}

pub fn bridge_fuse(chain: &[SubQuestion], doc_titles: &[String], hidden: &[String]) -> String {
    Prompt::new(
        task::BRIDGE_FUSE,
        "Merge the chain of sub-questions into one natural question whose answer is the last answer \
in the chain. Every intermediate answer must be implied, never named. If a sub-question does \
not mention the answer of the one before it, reply NONE with a Reason line.",
    )
    .block("Sub-Questions", &format_sub_questions(chain))
    .block("Documents", &doc_titles.join("\n"))
    .block("Entities To Hide", &hidden.join("\n"))
    .finish(
        "MULTI-HOP QUESTION: <question>\nANSWER:\n<final answer>\nREASONING PATH:\n<steps>\nSOURCES:\n<documents and roles>\n\n\
or\n\nNONE\nReason: <short explanation>",
    )
}

pub fn bridge_polish(
    question: &str,
    answer: &str,
    reasoning_path: &str,
    chain: &[SubQuestion],
    evidence: &[(String, String)],
) -> String {
    let docs = evidence
        .iter()
        .enumerate()
        .map(|(i, (title, seg))| format!("[{}] {title}\n{seg}", i + 1))
        .collect::<Vec<_>>()
        .join("\n\n");
    Prompt::new(
        task::BRIDGE_POLISH,
        "Review the draft question. Check that it needs every document in order, that it does not name \
the intermediate entity, that it reads naturally and that the answer is supported. Accept it, \
fix the wording, rewrite it, or reject it.",
    )
    .block("Question", question)
    .block("Answer", answer)
    .block("Reasoning Path", reasoning_path)
    .block("Sub-Questions", &format_sub_questions(chain))
    .block("Documents", &docs)
    .finish(
        "[PASS]\n\nor\n\n[ADJUST]\nREFINED_REASONING_PATH: <path>\nREFINED_QUESTION: <question>\nREFINED_ANSWER: <answer, optional>\n\n\
or\n\n[REWORKED]\nREFINED_REASONING_PATH: <path>\nREFINED_QUESTION: <question>\nREFINED_ANSWER: <answer>\n\nor\n\n[REJECTED]",
    )
}

pub fn compare_extract(title: &str, text: &str) -> String {
    Prompt::new(
        task::COMPARE_EXTRACT,
        "Name the main subject of the document and its type, then list three to five short factual \
attributes of it. For each attribute give a search query that would find the same attribute \
for a different entity of the same type.",
    )
    .block("Document Title", title)
    .block("Document", text)
    .finish(
        "(\"subject_entity\"<|>\"<name>\"<|>\"<type>\") ## (\"attribute\"<|>\"<name>\"<|>\"<value>\"<|>\"<query>\") ## ... <|COMPLETE|>",
    )
}

pub fn compare_score(entity: &str, etype: &str, attributes: &[(String, String)]) -> String {
    let attrs = attributes.iter().map(|(n, v)| format!("{n}: {v}")).collect::<Vec<_>>().join("\n");
    Prompt::new(
        task::COMPARE_SCORE,
        "Rate from 1 to 5 how concrete and specific the entity is, and rate each attribute from 1 to 5 \
by how well it supports a fair comparison with another entity of the same type.",
    )
    .block("Entity", entity)
    .block("Entity Type", etype)
    .block("Attributes", &attrs)
    .finish("(\"entity_score\"<|><n>) ## (\"attribute_score\"<|>\"<name>\"<|>\"<value>\"<|><n>) ## ... <|COMPLETE|>")
}

pub fn compare_plan(entity: &str, etype: &str, attributes: &[(String, String)]) -> String {
    let attrs = attributes.iter().map(|(n, v)| format!("{n}: {v}")).collect::<Vec<_>>().join("\n");
    Prompt::new(
        task::COMPARE_PLAN,
        "Find a second entity to compare with. If you know a specific one, name it, pick one attribute \
from the list and write a query that checks its value. Otherwise write exactly three varied \
search queries. Use exactly one of the two forms.",
    )
    .block("Entity", entity)
    .block("Entity Type", etype)
    .block("Attributes", &attrs)
    .finish(
        "(\"recall_focused_verify\"<|><entity B><|><attribute><|><query>)<|COMPLETE|>\n\nor\n\n\
(\"search_queries\"<|><query 1><|><query 2><|><query 3>)<|COMPLETE|>",
    )
}

#[allow(clippy::too_many_arguments)]
pub fn compare_build(
    entity_a: &str,
    etype: &str,
    doc_a_title: &str,
    doc_a_text: &str,
    doc_b_title: &str,
    doc_b_text: &str,
    attributes: &[(String, String)],
    guide: Option<(&str, &str)>,
) -> String {
    let attrs = attributes.iter().map(|(n, v)| format!("{n}: {v}")).collect::<Vec<_>>().join("\n");
    let mut p = Prompt::new(
        task::COMPARE_BUILD,
        "Decide whether Document B is about an entity that can be compared with Entity A on one of \
the listed attributes. If so, write a direct comparison question, a short answer, the sentence \
from each document stating the attribute, and the paragraph containing each sentence. \
Otherwise reply FAIL.",
    )
    .block("Entity A", entity_a)
    .block("Entity Type", etype)
    .block("Attributes", &attrs)
    .block("Document A Title", doc_a_title)
    .block("Document A", doc_a_text)
    .block("Document B Title", doc_b_title)
    .block("Document B", doc_b_text);
    if let Some((entity_b, attribute)) = guide {
        p = p.block("Required Entity B", entity_b).block("Required Attribute", attribute);
    }
    p.finish(
        "PASS\nentity_a: <name>\nentity_b: <name>\nattribute_compared: <attribute>\nmulti_hop_question: <question>\n\
answer: <answer>\nfact_entity_a: <sentence>\nfact_entity_b: <sentence>\nrelevant_paragraph_a: <paragraph>\n\
relevant_paragraph_b: <paragraph>\n\nor\n\nFAIL",
    )
}

pub fn compare_polish(question: &str, answer: &str, facts: (&str, &str), paragraphs: (&str, &str), titles: (&str, &str)) -> String {
    Prompt::new(
        task::COMPARE_POLISH,
        "Review the draft comparison question. Check that both facts are needed, that the comparison is \
correct and that the question gives enough context. Accept it, fix it, rewrite it, or reject \
it with a reason.",
    )
    .block("Question", question)
    .block("Answer", answer)
    .block("Entity A Title", titles.0)
    .block("Fact A", facts.0)
    .block("Paragraph A", paragraphs.0)
    .block("Entity B Title", titles.1)
    .block("Fact B", facts.1)
    .block("Paragraph B", paragraphs.1)
    .finish(
        "[PASS]\n\nor\n\n[ADJUST]\nREFINED_QUESTION: <question>\nREFINED_ANSWER: <answer, optional>\n\nor\n\n\
[REWORKED]\nREFINED_QUESTION: <question>\nREFINED_ANSWER: <answer>\nREFINED_FACT_A: <fact>\nREFINED_FACT_B: <fact>\n\n\
or\n\n[REJECTED]\nREASON: <short explanation>",
    )
}

pub fn judge(question: &str, answer: &str, evidence: &[String], dimensions: &[&str]) -> String {
    let docs = evidence
        .iter()
        .enumerate()
        .map(|(i, s)| format!("[{}] {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n\n");
    let lines = std::iter::once("- Multi-Hop Reasoning Requirement: <yes/no>".to_string())
        .chain(dimensions.iter().map(|d| format!("- {d}: <rating>")))
        .collect::<Vec<_>>()
        .join("\n");
    Prompt::new(
        task::JUDGE,
        "Assess the question and answer against the passages. State whether answering truly needs more \
than one passage, then rate each dimension as Very Poor, Poor, Fair, Good or Very Good. Treat \
logical flaws severely.",
    )
    .block("Question", question)
    .block("Answer", answer)
    .block("Passages", &docs)
    .finish(&format!("{lines}\n<|COMPLETE|>"))
}

pub fn solve(question: &str, passages: Option<&[String]>) -> String {
    let mut p = Prompt::new(
        task::SOLVE,
        "Answer the question with a short phrase. Do not explain.",
    )
    .block("Question", question);
    if let Some(ps) = passages {
        let docs = ps.iter().enumerate().map(|(i, s)| format!("[{}] {s}", i + 1)).collect::<Vec<_>>().join("\n\n");
        p = p.block("Passages", &docs);
    }
    p.finish("ANSWER: <short answer>")
}
