//! The two response grammars: delimited tuples and sectioned text.

use hopsynth::provider::grammar::{format_tuples, parse_delimited_tuples, parse_sectioned, SectionSchema, Sectioned, TupleRecord};

fn main() {
    let raw = r#"("subject_entity"<|>"Arlen Vale"<|>"town") ## ("attribute"<|>"Population"<|>"4200"<|>"population of river towns") ## (broken<|COMPLETE|>"#;
    let parsed = parse_delimited_tuples(raw).unwrap();
    for r in &parsed.records {
        println!("{:<15} {:?}", r.tag, r.fields);
    }
    println!("malformed parts: {:?}", parsed.malformed);
    println!("without sentinel: {:?}", parse_delimited_tuples("(\"query\"<|>\"x\")").unwrap_err());
    println!("formatted: {}", format_tuples(&[TupleRecord::new("entity_score", vec!["5".into()])]));

    let schema = SectionSchema::new().required("MULTI-HOP QUESTION").required("ANSWER").optional("SOURCES").sentinel("NONE");
    for raw in [
        "MULTI-HOP QUESTION: Where did the founder of Arlen Vale study?\nANSWER:\nOsk University\nSOURCES: A, B",
        "NONE\nReason: the sub-questions do not chain",
        "ANSWER: 1871",
    ] {
        match parse_sectioned(raw, &schema) {
            Ok(Sectioned::Sections { sections, .. }) => println!("sections {sections:?}"),
            Ok(Sectioned::Sentinel { decision, reason }) => println!("sentinel {decision}: {reason:?}"),
            Err(e) => println!("error: {e}"),
        }
    }
}
