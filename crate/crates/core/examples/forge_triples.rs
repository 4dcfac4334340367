//! Contrastive groups from simulated synthesis outcomes, exported for the
//! trainer, then a trained model's scores replayed through `scores.tsv`.

use std::sync::Arc;

use hopsynth::forge::{batch_loss, export_groups, forge, read_groups, write_scores_tsv, ForgeParams};
use hopsynth::provider::{ProviderKind, ProviderSpec, RerankDoc, Reranker};
use hopsynth::sim::{BridgeSchedule, SimEnv};
use hopsynth::synth::RunParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Decoys that fail sub-question generation give each group a negative.
    let (world, pool) = hopsynth::sim::bridge_schedule_world(&BridgeSchedule { subq_invalid: 6, fusion_none: 2, polish_reject: 0, clean: 4 }, 3);
    let env = SimEnv::new(world)?;
    let ctx = env.context();
    let run = RunParams { budget: 12, source_pool: Some(pool), ..RunParams::default() };
    let out = forge(&ctx, &run, &ForgeParams { group_size: 4, ..ForgeParams::default() })?;

    let dir = tempfile_dir("forge");
    let manifest = export_groups(&out.groups, &env.store, &dir)?;
    println!("{} groups, {} negatives -> {}", manifest.groups, manifest.negatives, dir.join(&manifest.file).display());

    let groups = read_groups(&dir.join(&manifest.file))?;
    let g = &groups[0];
    println!("query: {}\n  pos {}\n  negs {:?}", g.query, g.pos_id, g.neg_ids);

    // Pretend a trained model scored the positives 2.0 and negatives 0.0.
    let mut rows = Vec::new();
    for g in &groups {
        rows.push((g.query.clone(), g.pos_id.clone(), 2.0));
        rows.extend(g.neg_ids.iter().map(|n| (g.query.clone(), n.clone(), 0.0)));
    }
    let tsv = dir.join("scores.tsv");
    write_scores_tsv(&tsv, &rows)?;
    let replay = Reranker::new(
        ProviderSpec::scripted(ProviderKind::Rerank, "trained"),
        Arc::new(hopsynth::provider::scripted::ScriptedReranker::new().load_scores_tsv(&tsv)?),
    );
    let mut scored = Vec::new();
    for g in &groups {
        let doc = |id: &str| RerankDoc { id: id.to_string(), text: env.store.get(id).unwrap().text.clone() };
        let pos = replay.rerank_score(&g.query, &doc(&g.pos_id))?;
        let negs = g.neg_ids.iter().map(|n| replay.rerank_score(&g.query, &doc(n))).collect::<Result<Vec<_>, _>>()?;
        scored.push((pos, negs));
    }
    let uniform: Vec<(f64, Vec<f64>)> = scored.iter().map(|(_, n)| (0.0, vec![0.0; n.len()])).collect();
    println!("loss with replayed scores {:.4}, with uniform scores {:.4}", batch_loss(&scored), batch_loss(&uniform));
    Ok(())
}

fn tempfile_dir(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("hopsynth-example-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
