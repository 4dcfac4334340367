//! Pipeline-level invariants over randomly scheduled simulated worlds, and
//! the exchange files shared with the reranker trainer.

mod common;

use std::sync::Arc;

use common::{check_validators, random_schedule_world, towns};
use hopsynth::bridge::run_bridge;
use hopsynth::comparison::{run_comparison, CompareParams};
use hopsynth::forge::{export_groups, forge, read_groups, write_scores_tsv, ForgeParams};
use hopsynth::provider::scripted::{query_hash, ScriptedReranker};
use hopsynth::provider::{ProviderError, ProviderKind, ProviderSpec, RerankDoc, Reranker};
use hopsynth::sim::{bridge_schedule_world, BridgeSchedule, SimEnv};
use hopsynth::synth::RunParams;
use hopsynth::validate::validate_record;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn ledgers_reconcile(seed in 0u64..10_000, budget in 1usize..20) {
        let env = SimEnv::new(random_schedule_world(seed)).unwrap();
        let run = RunParams { seed, budget, source_pool: Some(towns(&env)), ..RunParams::default() };
        let b = run_bridge(&env.context(), &run).unwrap();
        prop_assert!(b.ledger.reconciles(), "{:?}", b.ledger);
        prop_assert_eq!(b.ledger.successes as usize, b.outputs.len());
        let c = run_comparison(&env.context(), &run, &CompareParams::default()).unwrap();
        prop_assert!(c.ledger.reconciles(), "{:?}", c.ledger);
        prop_assert_eq!(c.ledger.successes as usize, c.outputs.len());
        for r in b.outputs.iter().chain(&c.outputs) {
            prop_assert!(validate_record(r).passed(), "{:?}", validate_record(r));
        }
    }
}

#[test]
fn validators_catch_mutations() {
    check_validators().unwrap();
}

#[test]
fn groups_file_matches_trainer_schema() {
    let (world, pool) = bridge_schedule_world(&BridgeSchedule { subq_invalid: 4, fusion_none: 2, polish_reject: 0, clean: 3 }, 5);
    let env = SimEnv::new(world).unwrap();
    let run = RunParams { budget: 9, source_pool: Some(pool), ..RunParams::default() };
    let out = forge(&env.context(), &run, &ForgeParams::default()).unwrap();
    assert!(!out.groups.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let manifest = export_groups(&out.groups, &env.store, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join(&manifest.file)).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let q = v["query"].as_str().unwrap();
        assert_eq!(v["query_hash"].as_str().unwrap(), query_hash(q));
        assert!(!v["pos"].as_str().unwrap().is_empty());
        let negs = v["negs"].as_array().unwrap();
        assert!(!negs.is_empty());
        assert_eq!(negs.len(), v["neg_ids"].as_array().unwrap().len());
    }
    let back = read_groups(&dir.path().join(&manifest.file)).unwrap();
    assert_eq!(back.len(), out.groups.len());
    for (a, b) in out.groups.iter().zip(&back) {
        assert_eq!((&a.query, &a.pos_id, &a.neg_ids, &a.outcome_notes), (&b.query, &b.pos_id, &b.neg_ids, &b.outcome_notes));
    }
}

#[test]
fn scores_tsv_replays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.tsv");
    let rows = vec![
        ("Mira Holt".to_string(), "d1".to_string(), 3.25),
        ("Mira Holt".to_string(), "d2".to_string(), -0.5),
        ("Osk University".to_string(), "d1".to_string(), 1e-3),
    ];
    write_scores_tsv(&path, &rows).unwrap();
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with('#'));

    let r = Reranker::new(
        ProviderSpec::scripted(ProviderKind::Rerank, "replay"),
        Arc::new(ScriptedReranker::new().load_scores_tsv(&path).unwrap()),
    );
    let doc = |id: &str| RerankDoc { id: id.into(), text: "irrelevant".into() };
    for (q, d, s) in &rows {
        assert_eq!(r.rerank_score(q, &doc(d)).unwrap(), *s);
    }
    assert!(matches!(r.rerank_score("Mira Holt", &doc("d9")), Err(ProviderError::Unscripted(_))));
}

#[test]
fn malformed_scores_tsv_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.tsv");
    std::fs::write(&path, "abc\td1\n").unwrap();
    assert!(ScriptedReranker::new().load_scores_tsv(&path).is_err());
    std::fs::write(&path, "abc\td1\tnot-a-number\n").unwrap();
    assert!(ScriptedReranker::new().load_scores_tsv(&path).is_err());
}
