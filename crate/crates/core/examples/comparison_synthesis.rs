//! Comparison questions: an attribute shared by two entities of one type.

use hopsynth::comparison::{run_comparison, CompareParams};
use hopsynth::record::SubParts;
use hopsynth::sim::{EntityType, SimEnv, World, WorldSpec};
use hopsynth::synth::RunParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = SimEnv::new(World::generate(WorldSpec::default()))?;
    let pool = env.world.docs_of_type(EntityType::Town).iter().map(|d| d.id.clone()).collect();
    let run = RunParams { budget: 4, source_pool: Some(pool), ..RunParams::default() };
    let out = run_comparison(&env.context(), &run, &CompareParams::default())?;

    for r in &out.outputs {
        if let SubParts::Comparison(c) = &r.sub_parts {
            println!("{} vs {} on {}", c.entity_a, c.entity_b, c.attribute);
            println!("  {}  |  {}", c.fact_a, c.fact_b);
        }
        println!("  Q: {}\n  A: {}\n", r.question, r.answer);
    }
    println!("{:?}", out.ledger);
    Ok(())
}
