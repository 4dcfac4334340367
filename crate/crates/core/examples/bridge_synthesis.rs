//! Two-hop bridge questions from the generated world.

use hopsynth::bridge::run_bridge;
use hopsynth::sim::{EntityType, SimEnv, World, WorldSpec};
use hopsynth::synth::RunParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = SimEnv::new(World::generate(WorldSpec::default()))?;
    let pool = env.world.docs_of_type(EntityType::Town).iter().map(|d| d.id.clone()).collect();
    let run = RunParams { budget: 5, source_pool: Some(pool), ..RunParams::default() };
    let out = run_bridge(&env.context(), &run)?;

    for r in &out.outputs {
        println!("Q: {}\nA: {}", r.question, r.answer);
        for t in &r.triples {
            println!("   ({}, {}, {})", t.head, t.relation, t.tail);
        }
        println!();
    }
    let l = &out.ledger;
    println!("attempts {} successes {} avg attempts/success {:?}", l.attempts, l.successes, l.avg_attempts());
    Ok(())
}
