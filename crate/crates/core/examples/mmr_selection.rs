//! Diversity-aware selection: relevance against the query, a penalty for
//! similarity to the source document and to what is already picked.

use hopsynth::retrieval::{mmr_select, MmrParams};

fn unit(deg: f64) -> Vec<f32> {
    let r = deg.to_radians();
    vec![r.cos() as f32, r.sin() as f32]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = unit(0.0);
    let source = unit(-40.0);
    // Two near-duplicates close to the query, one document that mostly
    // restates the source, and two spread-out alternatives.
    let candidates: Vec<(String, Vec<f32>)> = [("dup-a", 5.0), ("dup-b", 6.0), ("echo", -35.0), ("left", 30.0), ("far", 60.0)]
        .iter()
        .map(|(id, deg)| (id.to_string(), unit(*deg)))
        .collect();

    for (label, params) in [
        ("defaults", MmrParams { k: 4, ..MmrParams::default() }),
        ("relevance only", MmrParams { lambda2: 0.0, lambda3: 0.0, k: 4, ..MmrParams::default() }),
        ("strong diversity", MmrParams { lambda1: 0.5, lambda2: 0.2, lambda3: 0.6, k: 4, ..MmrParams::default() }),
    ] {
        let picked = mmr_select("q", &query, Some(&source), &candidates, &params)?;
        let order: Vec<String> = picked.entries.iter().map(|e| format!("{}({:.3})", e.doc_id, e.score)).collect();
        println!("{label:<17} {}", order.join(" "));
    }
    Ok(())
}
