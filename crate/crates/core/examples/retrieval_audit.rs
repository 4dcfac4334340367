//! How well BM25 and dense retrieval recover the gold evidence of a
//! synthesized dataset.

use hopsynth::bridge::run_bridge;
use hopsynth::eval::audit::{retrieval_audit, AuditMethod};
use hopsynth::sim::{SimEnv, World, WorldSpec};
use hopsynth::synth::RunParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = SimEnv::new(World::generate(WorldSpec::default()))?;
    let data = run_bridge(&env.context(), &RunParams { budget: 20, ..RunParams::default() })?.outputs;
    let retriever = env.retriever();
    let ks = [1, 2, 5, 10];
    println!("{:<6} {:>6} {:>6} {:>6} {:>8} {:>6}", "method", "MAP", "R@2", "R@10", "NDCG@10", "SupF1");
    for m in [AuditMethod::Bm25, AuditMethod::Dense] {
        let a = retrieval_audit(&data, &retriever, m, &ks, None)?;
        println!(
            "{:<6} {:>6.3} {:>6.3} {:>6.3} {:>8.3} {:>6.3}",
            a.method_id, a.map, a.recall_at[&2], a.recall_at[&10], a.ndcg_at[&10], a.support_f1
        );
    }
    Ok(())
}
