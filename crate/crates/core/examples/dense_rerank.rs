//! Dense retrieval over the generated world, then a reranker pass.

use hopsynth::sim::{SimEnv, World, WorldSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let env = SimEnv::new(World::generate(WorldSpec::default()))?;
    let retriever = env.retriever();
    let reranker = env.reranker();

    let town = &env.world.docs[0];
    let query = format!("Who founded {}?", town.title);
    let dense = retriever.search_dense(&query, 5)?;
    println!("dense top 5 for {query:?}");
    for e in &dense.entries {
        println!("  {:<6} {:<28} {:.4}", e.doc_id, env.store.get(&e.doc_id)?.title, e.score);
    }

    let fine = retriever.fine_stage(&dense, &query, &reranker)?;
    println!("after reranking");
    for e in &fine.entries {
        println!("  {:<6} {:<28} {:.4}", e.doc_id, env.store.get(&e.doc_id)?.title, e.score);
    }
    Ok(())
}
