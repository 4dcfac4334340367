//! Reviewer decisions applied to a synthesized bridge question.

use hopsynth::bridge::run_bridge;
use hopsynth::polisher::{apply_outcome, parse_outcome, recheck, Decision};
use hopsynth::record::QuestionType;
use hopsynth::sim::{EntityType, SimEnv, World, WorldSpec};
use hopsynth::synth::RunParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = SimEnv::new(World::generate(WorldSpec::default()))?;
    let pool = env.world.docs_of_type(EntityType::Town).iter().take(1).map(|d| d.id.clone()).collect();
    let run = RunParams { budget: 1, source_pool: Some(pool), ..RunParams::default() };
    let record = run_bridge(&env.context(), &run)?.outputs.remove(0);
    println!("draft: {}  ->  {}\n", record.question, record.answer);

    let hidden = &record.sub_questions[0].answer;
    let replies = [
        "[PASS]".to_string(),
        format!("[ADJUST]\nREFINED_QUESTION: Tell me: {}", record.question),
        format!("[REWORKED]\nREFINED_QUESTION: {}\nREFINED_ANSWER: {}", record.question.replace('?', ", briefly?"), record.answer),
        format!("[REWORKED]\nREFINED_QUESTION: What about {hidden}?\nREFINED_ANSWER: {}", record.answer),
        "[REJECTED]".to_string(),
        "PASS, looks fine".to_string(),
    ];
    for raw in &replies {
        match parse_outcome(raw, QuestionType::Bridge) {
            Ok(o) if o.decision == Decision::Rejected => println!("{:<9} dropped", "REJECTED"),
            Ok(o) => {
                let out = apply_outcome(&record, &o);
                let verdict = match recheck(&out) {
                    Ok(()) => "kept".to_string(),
                    Err(e) => format!("dropped ({e})"),
                };
                println!("{:<9} {verdict}: {}", format!("{:?}", o.decision).to_uppercase(), out.question);
            }
            Err(e) => println!("{:<9} malformed: {e}", "?"),
        }
    }
    Ok(())
}
