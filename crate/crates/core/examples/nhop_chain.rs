//! Grow two-hop bridge questions into three-hop chains.

use hopsynth::bridge::{chain_nhop, run_bridge};
use hopsynth::sim::{EntityType, SimEnv, World, WorldSpec};
use hopsynth::synth::RunParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = SimEnv::new(World::generate(WorldSpec::default()))?;
    let ctx = env.context();
    let pool = env.world.docs_of_type(EntityType::Town).iter().map(|d| d.id.clone()).collect();
    let run = RunParams { budget: 12, source_pool: Some(pool), ..RunParams::default() };
    let base = run_bridge(&ctx, &run)?;

    let mut grown = 0;
    for r in &base.outputs {
        let c = chain_nhop(&ctx, r, 3, &run)?;
        let Some(rec) = c.record else { continue };
        grown += 1;
        println!("{}\n  -> {}", r.question, rec.question);
        let path: Vec<&str> = rec.triples.iter().map(|t| t.relation.as_str()).collect();
        println!("  path {}  answer {}\n", path.join(" -> "), rec.answer);
    }
    println!("{grown} of {} extended", base.outputs.len());
    Ok(())
}
