//! Dollar cost from metered usage and from per-request averages.

use std::sync::Arc;

use hopsynth::bridge::run_bridge;
use hopsynth::provider::cost::{projected_cost, Pricing};
use hopsynth::provider::UsageRole;
use hopsynth::sim::{SimEnv, World, WorldSpec};
use hopsynth::synth::RunParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pricing = Pricing { input_per_mtok: 0.15, output_per_mtok: 3.50 };

    let env = SimEnv::new(World::generate(WorldSpec::default()))?;
    let out = run_bridge(&env.context(), &RunParams { budget: 10, ..RunParams::default() })?;
    let usage = Arc::clone(&env.meter).snapshot(UsageRole::Synthesis);
    let per_q = usage.request_count as f64 / out.outputs.len().max(1) as f64;
    println!(
        "{} questions, {} requests ({per_q:.1} per question), {:.0} in / {:.0} out tokens per request, ${:.6}",
        out.outputs.len(),
        usage.request_count,
        usage.avg_input(),
        usage.avg_output(),
        usage.cost(&pricing)
    );

    for questions in [100.0, 1000.0, 10_000.0] {
        let usd = projected_cost(questions * 7.6, 1529.97, 231.32, &pricing);
        println!("{questions:>7} questions at 7.6 requests each: ${usd:.2}");
    }
    Ok(())
}
