//! Structural checks on synthesized records, and what they catch when a
//! record is corrupted.

use hopsynth::bridge::run_bridge;
use hopsynth::comparison::{run_comparison, CompareParams};
use hopsynth::record::SubParts;
use hopsynth::sim::{EntityType, SimEnv, World, WorldSpec};
use hopsynth::synth::RunParams;
use hopsynth::validate::validate_record;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = SimEnv::new(World::generate(WorldSpec::default()))?;
    let pool = env.world.docs_of_type(EntityType::Town).iter().map(|d| d.id.clone()).collect();
    let run = RunParams { budget: 2, source_pool: Some(pool), ..RunParams::default() };
    let bridge = run_bridge(&env.context(), &run)?.outputs.remove(0);
    let comparison = run_comparison(&env.context(), &run, &CompareParams::default())?.outputs.remove(0);

    let mut cases = vec![("clean bridge", bridge.clone()), ("clean comparison", comparison.clone())];

    let mut r = bridge.clone();
    r.question = format!("{} Hint: {}.", r.question, r.sub_questions[0].answer);
    cases.push(("bridge entity named", r));

    let mut r = bridge.clone();
    r.triples[1].doc_id = r.triples[0].doc_id.clone();
    cases.push(("both facts in one doc", r));

    let mut r = comparison.clone();
    if let SubParts::Comparison(c) = &mut r.sub_parts {
        c.doc_b = c.doc_a.clone();
    }
    cases.push(("comparison from one doc", r));

    let mut r = comparison;
    r.answer.clear();
    cases.push(("empty answer", r));

    for (label, rec) in cases {
        let rep = validate_record(&rec);
        let checks: Vec<String> = rep.issues.iter().map(|i| format!("{}:{:?}", i.check, i.severity)).collect();
        println!("{label:<24} {:<5} {}", if rep.passed() { "ok" } else { "FAIL" }, checks.join(" "));
    }
    Ok(())
}
