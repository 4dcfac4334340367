//! Oracles shared by the property suites and the acceptance target. Each
//! check returns a one-line detail on success and a reason on failure.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use hopsynth::bridge::{parse_extraction, parse_fusion, parse_subquestions, run_bridge};
use hopsynth::comparison::{parse_build, parse_plan, parse_profile, parse_scores, run_comparison, CompareParams};
use hopsynth::corpus::Document;
use hopsynth::eval::audit::{audit_rankings, recall_at};
use hopsynth::eval::judge::parse_assessment;
use hopsynth::eval::reliability::{fleiss_kappa, fleiss_kappa_counts, krippendorff_alpha, Metric};
use hopsynth::forge::{batch_loss, export_groups, group_loss, read_groups, ContrastiveGroup};
use hopsynth::polisher::parse_outcome;
use hopsynth::provider::cost::{projected_cost, Pricing};
use hopsynth::provider::grammar::{
    format_sectioned, format_tuples, parse_delimited_tuples, parse_sectioned, SectionSchema, Sectioned, TupleRecord,
};
use hopsynth::provider::scripted::ScriptedChat;
use hopsynth::provider::{ChatClient, ProviderKind, ProviderSpec, TokenUsage, UsageMeter};
use hopsynth::record::{Evidence, QuestionRecord, QuestionType, RejectionLedger, Stage, SubParts};
use hopsynth::retrieval::{mmr_select, MmrParams};
use hopsynth::sim::{
    bridge_schedule_world, comparison_schedule_world, Behavior, BridgeSchedule, ComparisonSchedule, EntityType, SimEnv,
    World, WorldSpec,
};
use hopsynth::synth::{RunParams, Refusal};
use hopsynth::validate::validate_record;

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

// ---- MMR -------------------------------------------------------------------

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

fn sim(a: &[f32], b: &[f32]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let n = dot(&v, &v).sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| (f64::from(*x) / n) as f32).collect();
        }
    }
}

/// Straight evaluation of the objective: every step rescans all remaining
/// candidates and recomputes the max over the selected set from scratch.
pub fn brute_force_mmr(q: &[f32], s: &[f32], cands: &[(String, Vec<f32>)], p: &MmrParams) -> Vec<(String, f64)> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    while chosen.len() < p.k.min(cands.len()) {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..cands.len() {
            if chosen.contains(&i) {
                continue;
            }
            let d = &cands[i].1;
            let div = chosen.iter().map(|&j| sim(d, &cands[j].1)).fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
            let score = p.lambda1 * sim(q, d) - p.lambda2 * sim(d, s) - p.lambda3 * div.unwrap_or(0.0);
            let better = match best {
                None => true,
                Some((j, b)) => score > b || (score == b && cands[i].0 < cands[j].0),
            };
            if better {
                best = Some((i, score));
            }
        }
        let (i, score) = best.unwrap();
        chosen.push(i);
        out.push((cands[i].0.clone(), score));
    }
    out
}

pub fn random_mmr_case(rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<f32>, Vec<(String, Vec<f32>)>, MmrParams) {
    let dim = rng.random_range(2..=8);
    let n = rng.random_range(1..=8);
    let q = random_unit(rng, dim);
    let s = random_unit(rng, dim);
    let cands = (0..n).map(|i| (format!("d{i}"), random_unit(rng, dim))).collect();
    let k = rng.random_range(1..=n);
    let p = MmrParams {
        lambda1: rng.random_range(0.0..1.0),
        lambda2: rng.random_range(0.0..0.5),
        lambda3: rng.random_range(0.0..1.0),
        pool_size: 50,
        k,
    };
    (q, s, cands, p)
}

pub fn compare_mmr(q: &[f32], s: &[f32], cands: &[(String, Vec<f32>)], p: &MmrParams) -> Result<(), String> {
    let got = mmr_select("q", q, Some(s), cands, p).map_err(|e| e.to_string())?;
    let want = brute_force_mmr(q, s, cands, p);
    let got_ids: Vec<&str> = got.entries.iter().map(|e| e.doc_id.as_str()).collect();
    let want_ids: Vec<&str> = want.iter().map(|(id, _)| id.as_str()).collect();
    ensure(got_ids == want_ids, || format!("order {got_ids:?} != {want_ids:?}"))?;
    for (e, (_, w)) in got.entries.iter().zip(&want) {
        ensure((e.score - w).abs() < 1e-9, || format!("score {} != {w}", e.score))?;
    }
    Ok(())
}

pub fn check_mmr_oracle() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for case in 0..200 {
        let (q, s, c, p) = random_mmr_case(&mut rng);
        compare_mmr(&q, &s, &c, &p).map_err(|e| format!("case {case}: {e}"))?;
    }
    for case in 0..1000 {
        let (q, s, c, mut p) = random_mmr_case(&mut rng);
        p.lambda2 = 0.0;
        p.lambda3 = 0.0;
        p.lambda1 = 1.0;
        let got = mmr_select("q", &q, Some(&s), &c, &p).map_err(|e| e.to_string())?;
        let mut want: Vec<(f64, &str)> = c.iter().map(|(id, v)| (sim(&q, v), id.as_str())).collect();
        want.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let want: Vec<&str> = want.iter().take(p.k).map(|x| x.1).collect();
        ensure(got.ids() == want, || format!("degenerate case {case}: {:?} != {want:?}", got.ids()))?;
    }
    let secs = t.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.2}s"))?;
    Ok(format!("200 brute-force cases exact, 1000 degenerate cases sorted, {secs:.2}s"))
}

// ---- retrieval metrics ------------------------------------------------------

fn ids(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn set(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Expected values computed by hand from the definitions (binary relevance,
/// log2 discount, AP over the golden set size).
pub fn check_metric_oracle() -> Check {
    let items = vec![
        (set(&["A", "B"]), ids(&["A", "X", "B", "Y", "Z"])),
        (set(&["C"]), ids(&["X", "Y", "C", "Z", "W"])),
        (set(&["D", "E", "F"]), ids(&["E", "X", "Y", "Z", "W", "D"])),
    ];
    let a = audit_rankings("fixture", &items, &[1, 2, 5], None);
    // AP: (1 + 2/3)/2, 1/3, (1 + 2/6)/3
    let map = ((1.0 + 2.0 / 3.0) / 2.0 + 1.0 / 3.0 + (1.0 + 2.0 / 6.0) / 3.0) / 3.0;
    let l = |r: f64| 1.0 / (r + 1.0).log2();
    let ndcg2 = (l(1.0) / (l(1.0) + l(2.0)) + 0.0 + l(1.0) / (l(1.0) + l(2.0))) / 3.0;
    let ndcg5 = ((l(1.0) + l(3.0)) / (l(1.0) + l(2.0)) + l(3.0) + l(1.0) / (l(1.0) + l(2.0) + l(3.0))) / 3.0;
    let expected = [
        ("MAP", a.map, map),
        ("R@1", a.recall_at[&1], (0.5 + 0.0 + 1.0 / 3.0) / 3.0),
        ("R@2", a.recall_at[&2], (0.5 + 0.0 + 1.0 / 3.0) / 3.0),
        ("R@5", a.recall_at[&5], (1.0 + 1.0 + 1.0 / 3.0) / 3.0),
        ("NDCG@1", a.ndcg_at[&1], 2.0 / 3.0),
        ("NDCG@2", a.ndcg_at[&2], ndcg2),
        ("NDCG@5", a.ndcg_at[&5], ndcg5),
        // top-|golden| set F1: {A,X} vs {A,B}; {X} vs {C}; {E,X,Y} vs {D,E,F}
        ("SupportF1", a.support_f1, (0.5 + 0.0 + 1.0 / 3.0) / 3.0),
    ];
    for (name, got, want) in expected {
        ensure((got - want).abs() < 1e-9, || format!("{name}: {got} != {want}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let mut r: Vec<String> = (0..20).map(|i| i.to_string()).collect();
        for i in (1..r.len()).rev() {
            r.swap(i, rng.random_range(0..=i));
        }
        let g: BTreeSet<String> = (0..rng.random_range(1..6)).map(|_| rng.random_range(0..25).to_string()).collect();
        for k in 0..21 {
            ensure(recall_at(&g, &r, k) <= recall_at(&g, &r, k + 1), || format!("recall not monotone at k={k}"))?;
        }
    }
    Ok(format!("8 fixture values within 1e-9 (MAP {map:.6}), recall monotone on 1000 rankings"))
}

// ---- reliability -------------------------------------------------------------

/// Krippendorff's 4-observer, 12-unit reliability data; units × observers.
pub fn alpha_textbook() -> Vec<Vec<Option<f64>>> {
    let rows: [[Option<u8>; 12]; 4] = [
        [Some(1), Some(2), Some(3), Some(3), Some(2), Some(1), Some(4), Some(1), Some(2), None, None, None],
        [Some(1), Some(2), Some(3), Some(3), Some(2), Some(2), Some(4), Some(1), Some(2), Some(5), None, Some(3)],
        [None, Some(3), Some(3), Some(3), Some(2), Some(3), Some(4), Some(2), Some(2), Some(5), Some(1), None],
        [Some(1), Some(2), Some(3), Some(3), Some(2), Some(4), Some(4), Some(1), Some(2), Some(5), Some(1), None],
    ];
    (0..12).map(|u| rows.iter().map(|r| r[u].map(f64::from)).collect()).collect()
}

/// Fleiss' 10 subjects × 14 raters × 5 categories example.
pub fn kappa_textbook() -> Vec<Vec<u64>> {
    vec![
        vec![0, 0, 0, 0, 14],
        vec![0, 2, 6, 4, 2],
        vec![0, 0, 3, 5, 6],
        vec![0, 3, 9, 2, 0],
        vec![2, 2, 8, 1, 1],
        vec![7, 7, 0, 0, 0],
        vec![3, 2, 6, 3, 0],
        vec![2, 5, 3, 2, 2],
        vec![6, 5, 2, 1, 0],
        vec![0, 2, 2, 3, 7],
    ]
}

pub fn check_reliability() -> Check {
    let err = |e: hopsynth::eval::reliability::ReliabilityError| e.to_string();
    let nominal = krippendorff_alpha(&alpha_textbook(), Metric::Nominal).map_err(err)?.value;
    let interval = krippendorff_alpha(&alpha_textbook(), Metric::Interval).map_err(err)?.value;
    let kappa = fleiss_kappa_counts(&kappa_textbook()).map_err(err)?.kappa;
    ensure((nominal - 0.743).abs() < 5e-4 && (nominal - 0.743421052631579).abs() < 1e-6, || format!("nominal alpha {nominal}"))?;
    ensure((interval - 0.849).abs() < 5e-4 && (interval - 0.8491071428571428).abs() < 1e-6, || format!("interval alpha {interval}"))?;
    ensure((kappa - 0.210).abs() < 5e-4 && (kappa - 0.20993070442195524).abs() < 1e-6, || format!("kappa {kappa}"))?;

    let perfect: Vec<Vec<u32>> = (0..50).map(|i| vec![(i % 5 + 1) as u32; 4]).collect();
    let pf: Vec<Vec<Option<f64>>> = perfect.iter().map(|r| r.iter().map(|&x| Some(f64::from(x))).collect()).collect();
    let pk = fleiss_kappa(&perfect).map_err(err)?.kappa;
    let pa = krippendorff_alpha(&pf, Metric::Nominal).map_err(err)?.value;
    let pi = krippendorff_alpha(&pf, Metric::Interval).map_err(err)?.value;
    ensure(pk == 1.0 && pa == 1.0 && pi == 1.0, || format!("perfect agreement gave {pk} {pa} {pi}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let shuffled: Vec<Vec<u32>> = (0..10_000).map(|_| (0..3).map(|_| rng.random_range(1..=5)).collect()).collect();
    let sf: Vec<Vec<Option<f64>>> = shuffled.iter().map(|r| r.iter().map(|&x| Some(f64::from(x))).collect()).collect();
    let sk = fleiss_kappa(&shuffled).map_err(err)?.kappa;
    let sa = krippendorff_alpha(&sf, Metric::Nominal).map_err(err)?.value;
    let si = krippendorff_alpha(&sf, Metric::Interval).map_err(err)?.value;
    ensure(sk.abs() < 0.05 && sa.abs() < 0.05 && si.abs() < 0.05, || format!("shuffled labels gave {sk} {sa} {si}"))?;
    Ok(format!(
        "alpha {nominal:.6}/{interval:.6}, kappa {kappa:.6}, perfect = 1, shuffled 10k: {sk:+.4} {sa:+.4} {si:+.4}"
    ))
}

// ---- ledgers -----------------------------------------------------------------

pub fn towns(env: &SimEnv) -> BTreeSet<String> {
    env.world.docs_of_type(EntityType::Town).iter().map(|d| d.id.clone()).collect()
}

const SOURCE_BEHAVIORS: [Behavior; 8] = [
    Behavior::ExtractMalformed,
    Behavior::ExtractTitle,
    Behavior::PolishReject,
    Behavior::PolishAdjust,
    Behavior::PolishRework,
    Behavior::FilterReject,
    Behavior::ConstructionFail,
    Behavior::ComparePolishReject,
];

/// World whose towns carry random failure behaviors.
pub fn random_schedule_world(seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = World::generate(WorldSpec { seed, towns: 16, people: 20, companies: 16, institutions: 8 });
    let titles: Vec<String> = w.docs_of_type(EntityType::Town).iter().map(|d| d.title.clone()).collect();
    for t in &titles {
        if rng.random_bool(0.6) {
            w.set_behavior(t, SOURCE_BEHAVIORS[rng.random_range(0..SOURCE_BEHAVIORS.len())]);
        }
    }
    for t in titles.iter().take(4) {
        let id = w.doc_by_title(t).unwrap().id.clone();
        let founder = w.facts_in_doc(&id)[0].object.clone();
        if rng.random_bool(0.5) {
            let decoy = w.add_decoy(&founder);
            let title = w.doc(&decoy).unwrap().title.clone();
            w.set_behavior(&title, if rng.random_bool(0.5) { Behavior::SubqInvalid } else { Behavior::FusionNone });
        }
    }
    w
}

fn reconcile(l: &RejectionLedger, what: &str) -> Result<(), String> {
    ensure(l.reconciles(), || format!("{what}: ledger does not reconcile: {l:?}"))
}

pub fn rate(l: &RejectionLedger, s: Stage) -> f64 {
    100.0 * l.rejected(s) as f64 / l.attempts as f64
}

pub fn check_conservation() -> Check {
    for seed in 0..12 {
        let env = SimEnv::new(random_schedule_world(seed)).map_err(|e| e.to_string())?;
        let run = RunParams { seed, budget: 16, source_pool: Some(towns(&env)), ..RunParams::default() };
        let b = run_bridge(&env.context(), &run).map_err(|e| e.to_string())?;
        reconcile(&b.ledger, &format!("bridge seed {seed}"))?;
        let c = run_comparison(&env.context(), &run, &CompareParams::default()).map_err(|e| e.to_string())?;
        reconcile(&c.ledger, &format!("comparison seed {seed}"))?;
    }

    let s = BridgeSchedule::PUBLISHED;
    let (w, pool) = bridge_schedule_world(&s, 11);
    let env = SimEnv::new(w).map_err(|e| e.to_string())?;
    let run = RunParams { budget: s.sources(), source_pool: Some(pool), ..RunParams::default() };
    let b = run_bridge(&env.context(), &run).map_err(|e| e.to_string())?.ledger;
    reconcile(&b, "published bridge")?;
    let br = [rate(&b, Stage::Step3aSubq), rate(&b, Stage::Step3bFusion), rate(&b, Stage::PolisherReject)];
    ensure(
        (b.attempts, b.successes) == (130, 93) && format!("{:.1}/{:.1}/{:.1}", br[0], br[1], br[2]) == "22.3/3.1/3.1",
        || format!("bridge ledger {b:?}"),
    )?;

    let s = ComparisonSchedule::PUBLISHED;
    let (w, pool) = comparison_schedule_world(&s, 11);
    let env = SimEnv::new(w).map_err(|e| e.to_string())?;
    let run = RunParams { budget: s.sources(), source_pool: Some(pool), ..RunParams::default() };
    let c = run_comparison(&env.context(), &run, &CompareParams::default()).map_err(|e| e.to_string())?.ledger;
    reconcile(&c, "published comparison")?;
    let cr = [rate(&c, Stage::Filter), rate(&c, Stage::Construction), rate(&c, Stage::PolisherReject)];
    ensure(
        (c.attempts, c.successes) == (106, 95) && format!("{:.1}/{:.1}/{:.1}", cr[0], cr[1], cr[2]) == "6.6/1.9/1.9",
        || format!("comparison ledger {c:?}"),
    )?;
    Ok(format!(
        "24 random schedules reconcile; bridge {}/{} at {:.1}%/{:.1}%/{:.1}%, comparison {}/{} at {:.1}%/{:.1}%/{:.1}%",
        b.successes, b.attempts, br[0], br[1], br[2], c.successes, c.attempts, cr[0], cr[1], cr[2]
    ))
}

// ---- cost --------------------------------------------------------------------

pub const PRICES: Pricing = Pricing { input_per_mtok: 0.15, output_per_mtok: 3.50 };

/// 7600 metered scripted calls whose reported usage averages
/// 1529.97 input and 231.32 output tokens.
pub fn check_cost() -> Check {
    const CALLS: u64 = 7600;
    let counter = std::sync::atomic::AtomicU64::new(0);
    let chat = ScriptedChat::new().with_responder(|_| Some("ok".into())).with_usage(move |_, _| {
        let i = counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        Some(TokenUsage { input: if i < 7372 { 1530 } else { 1529 }, output: if i < 2432 { 232 } else { 231 } })
    });
    let meter = std::sync::Arc::new(UsageMeter::new());
    let client = ChatClient::new(ProviderSpec::scripted(ProviderKind::Chat, "gen"), std::sync::Arc::new(chat)).with_meter(meter.clone());
    for i in 0..CALLS {
        client.chat(&format!("prompt {i}")).map_err(|e| e.to_string())?;
    }
    let total = meter.total();
    let metered = total.cost(&PRICES);
    let projected = projected_cost(7.6 * 1000.0, 1529.97, 231.32, &PRICES);
    ensure(total.request_count == CALLS && total.estimated_requests == 0, || format!("{total:?}"))?;
    ensure((total.avg_input() - 1529.97).abs() < 1e-9 && (total.avg_output() - 231.32).abs() < 1e-9, || {
        format!("averages {} {}", total.avg_input(), total.avg_output())
    })?;
    ensure((metered - 7.90).abs() <= 0.05 && (projected - 7.90).abs() <= 0.05, || format!("${metered} / ${projected}"))?;
    Ok(format!("metered ${metered:.4}, projected ${projected:.4} for 1000 questions"))
}

// ---- grammar -----------------------------------------------------------------

const WORDS: [&str; 12] = ["river", "Osk", "1871", "mill", "Mira Holt", "north", "x", "café", "42.5", "a-b", "tower's", "#3"];

fn phrase(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.random_range(1..=max);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

pub fn random_tuples(rng: &mut ChaCha8Rng) -> Vec<TupleRecord> {
    (0..rng.random_range(1..=5))
        .map(|_| {
            let tag = ["bridge_entity", "query", "attribute", "entity_score", "search_queries"][rng.random_range(0..5)];
            TupleRecord::new(tag, (0..rng.random_range(0..=4)).map(|_| phrase(rng, 4)).collect())
        })
        .collect()
}

pub const SECTION_KEYS: [&str; 6] = ["MULTI-HOP QUESTION", "ANSWER", "REASONING PATH", "SOURCES", "Sub-question 1", "Answer 1"];

pub fn random_sections(rng: &mut ChaCha8Rng) -> Vec<(String, String)> {
    let mut keys: Vec<&str> = SECTION_KEYS.to_vec();
    for i in (1..keys.len()).rev() {
        keys.swap(i, rng.random_range(0..=i));
    }
    keys.truncate(rng.random_range(1..=SECTION_KEYS.len()));
    keys.iter()
        .map(|k| {
            let lines: Vec<String> = (0..rng.random_range(1..=3)).map(|_| phrase(rng, 6)).collect();
            (k.to_string(), lines.join("\n"))
        })
        .collect()
}

pub fn tuple_round_trip(records: &[TupleRecord]) -> Result<(), String> {
    let text = format_tuples(records);
    let back = parse_delimited_tuples(&text).map_err(|e| e.to_string())?.strict().map_err(|e| e.to_string())?;
    ensure(back == records, || format!("{text:?} parsed to {back:?}"))
}

pub fn section_round_trip(pairs: &[(String, String)]) -> Result<(), String> {
    let schema = SECTION_KEYS.iter().fold(SectionSchema::new(), |s, k| s.optional(k)).sentinel("NONE");
    let text = format_sectioned(pairs);
    let want: BTreeMap<String, String> = pairs.iter().cloned().collect();
    match parse_sectioned(&text, &schema).map_err(|e| e.to_string())? {
        Sectioned::Sections { sections, .. } if sections == want => Ok(()),
        other => Err(format!("{text:?} parsed to {other:?}")),
    }
}

fn refusal_json(r: &Refusal) -> Value {
    json!({"refusal": r.kind, "reason": r.reason})
}

/// Parse one fixture block with the parser its `kind` names.
fn parse_block(kind: &str, raw: &str, ctx: &Value) -> Result<Value, String> {
    let doc = |k: &str| {
        let d = &ctx[k];
        Document::new(d["id"].as_str().unwrap(), d["title"].as_str().unwrap(), d["text"].as_str().unwrap())
    };
    let s = |k: &str| ctx[k].as_str().unwrap().to_string();
    let to = |r: Result<Value, Refusal>| r.map(|v| json!({"ok": v})).unwrap_or_else(|e| refusal_json(&e));
    let v = |x: serde_json::Result<Value>| x.unwrap();
    Ok(match kind {
        "bridge_extraction" => to(parse_extraction(raw, &doc("source")).map(|x| v(serde_json::to_value(x)))),
        "subquestions" => to(parse_subquestions(raw, &s("bridge_entity")).map(|x| v(serde_json::to_value(x)))),
        "fusion" => {
            let hidden: Vec<String> = serde_json::from_value(ctx["hidden"].clone()).unwrap();
            to(parse_fusion(raw, &s("final_answer"), &hidden).map(|x| v(serde_json::to_value(x))))
        }
        "profile" => to(parse_profile(raw, &doc("source")).map(|x| v(serde_json::to_value(x)))),
        "scores" => to(parse_scores(raw).map(|x| v(serde_json::to_value(x)))),
        "plan" => to(parse_plan(raw).map(|x| v(serde_json::to_value(x)))),
        "build" => {
            let profile = parse_profile(
                r#"("subject_entity"<|>"Arlen Vale"<|>"town") ## ("attribute"<|>"Population"<|>"4200"<|>"q")<|COMPLETE|>"#,
                &doc("source"),
            )
            .unwrap();
            to(parse_build(raw, &profile, &doc("candidate"), None).map(|x| v(serde_json::to_value(x))))
        }
        "polish_bridge" | "polish_compare" => {
            let qt = if kind == "polish_bridge" { QuestionType::Bridge } else { QuestionType::Comparison };
            match parse_outcome(raw, qt) {
                Ok(o) => json!({"ok": o}),
                Err(e) => json!({"refusal": "malformed", "reason": e.to_string()}),
            }
        }
        "assessment" => match parse_assessment(raw) {
            Ok((multi_hop, dims)) => json!({"ok": {"multi_hop": multi_hop, "dims": dims}}),
            Err(e) => json!({"refusal": "malformed", "reason": e.to_string()}),
        },
        other => return Err(format!("unknown block kind `{other}`")),
    })
}

/// `expect` may omit `reason` for refusals; everything it states must match.
fn matches(expect: &Value, got: &Value) -> bool {
    match (expect.get("refusal"), got.get("refusal")) {
        (Some(e), Some(g)) => e == g && expect.get("reason").is_none_or(|r| Some(r) == got.get("reason")),
        (None, None) => expect["ok"] == got["ok"],
        _ => false,
    }
}

pub fn check_grammar_fixture() -> Check {
    let text = std::fs::read_to_string(fixture("grammar_blocks.json")).map_err(|e| e.to_string())?;
    let f: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let blocks = f["blocks"].as_array().ok_or("no blocks")?;
    for b in blocks {
        let got = parse_block(b["kind"].as_str().unwrap(), b["raw"].as_str().unwrap(), &f["context"])?;
        ensure(matches(&b["expect"], &got), || format!("{}: got {got}", b["name"]))?;
    }
    Ok(format!("{} fixture blocks", blocks.len()))
}

pub fn check_grammar() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..10_000 {
        tuple_round_trip(&random_tuples(&mut rng)).map_err(|e| format!("tuple case {i}: {e}"))?;
        section_round_trip(&random_sections(&mut rng)).map_err(|e| format!("section case {i}: {e}"))?;
    }
    let fixture = check_grammar_fixture()?;
    Ok(format!("10000 tuple and 10000 sectioned round trips, {fixture} parsed as documented"))
}

// ---- validators ----------------------------------------------------------------

/// 25 bridge and 25 comparison questions from the default world.
pub fn fifty_items() -> Result<Vec<QuestionRecord>, String> {
    let env = SimEnv::new(World::generate(WorldSpec::default())).map_err(|e| e.to_string())?;
    let ctx = env.context();
    let run = RunParams { budget: 40, target: Some(25), ..RunParams::default() };
    let mut out = run_bridge(&ctx, &run).map_err(|e| e.to_string())?.outputs;
    out.truncate(25);
    let mut c = run_comparison(&ctx, &run, &CompareParams::default()).map_err(|e| e.to_string())?.outputs;
    c.truncate(25);
    out.extend(c);
    Ok(out)
}

pub fn check_validators() -> Check {
    let items = fifty_items()?;
    ensure(items.len() == 50, || format!("only {} items", items.len()))?;
    for r in &items {
        let rep = validate_record(r);
        ensure(rep.passed(), || format!("{}: {:?}", r.id, rep.issues))?;
    }
    let bridge = items.iter().find(|r| r.qtype == QuestionType::Bridge).unwrap();
    let comparison = items.iter().find(|r| r.qtype == QuestionType::Comparison).unwrap();
    let caught = |r: &QuestionRecord, check: &str| validate_record(r).failures().any(|i| i.check == check);

    let mut same_doc = bridge.clone();
    same_doc.triples[1].doc_id = same_doc.triples[0].doc_id.clone();
    ensure(caught(&same_doc, "fact_distribution"), || "same-doc triple not caught".into())?;

    let mut same_doc = comparison.clone();
    if let SubParts::Comparison(c) = &mut same_doc.sub_parts {
        c.doc_b = c.doc_a.clone();
    }
    ensure(caught(&same_doc, "disjoint_sources"), || "same-doc comparison not caught".into())?;

    let mut dup = bridge.clone();
    dup.evidence[1] = Evidence { doc_id: dup.evidence[0].doc_id.clone(), segment: dup.evidence[1].segment.clone() };
    ensure(caught(&dup, "evidence"), || "duplicate evidence doc not caught".into())?;

    let mut revealing = bridge.clone();
    revealing.question = format!("{} ({})", revealing.question, revealing.sub_questions[0].answer);
    ensure(caught(&revealing, "entity_hidden"), || "entity-revealing question not caught".into())?;
    Ok("50 scripted items pass; same-doc evidence and entity-revealing mutations caught".into())
}

// ---- end to end ----------------------------------------------------------------

pub fn cli(dir: &Path, args: &[&str]) -> i32 {
    let config = dir.join("hopsynth.toml");
    let mut argv = vec!["hopsynth".to_string(), "--config".into(), config.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    hopsynth::app::main_from(argv)
}

/// Scripted `init-sim`, `ingest`, `index`, both synth runs, `judge` on each
/// output and `report`, in `dir`.
pub fn full_run(dir: &Path) -> Result<(), String> {
    let init = hopsynth::app::main_from(["hopsynth", "init-sim", dir.to_str().unwrap()]);
    ensure(init == 0, || "init-sim failed".into())?;
    let steps: [&[&str]; 7] = [
        &["ingest"],
        &["index"],
        &["synth", "bridge", "--budget", "40", "--target", "25"],
        &["synth", "compare", "--budget", "40", "--target", "25"],
        &["judge", "out/bridge.jsonl"],
        &["judge", "out/compare.jsonl"],
        &["report"],
    ];
    let here = std::env::current_dir().unwrap();
    for s in steps {
        let args: Vec<String> = s
            .iter()
            .map(|a| if a.starts_with("out/") { dir.join(a).display().to_string() } else { a.to_string() })
            .collect();
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let code = cli(dir, &refs);
        ensure(code == 0, || format!("`{}` exited {code} (cwd {})", s.join(" "), here.display()))?;
    }
    Ok(())
}

/// Every file under `dir/out`, relative path to bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.join("out")];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn check_determinism() -> Check {
    let t = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_run(a.path())?;
    let first = t.elapsed().as_secs_f64();
    full_run(b.path())?;
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    ensure(sa.keys().eq(sb.keys()), || format!("file sets differ: {:?} vs {:?}", sa.keys(), sb.keys()))?;
    if let Some((k, _)) = sa.iter().find(|(k, v)| sb[*k] != **v) {
        return Err(format!("{k} differs between runs"));
    }
    let items = hopsynth::record::read_dataset(&a.path().join("out/bridge.jsonl")).map_err(|e| e.to_string())?.len()
        + hopsynth::record::read_dataset(&a.path().join("out/compare.jsonl")).map_err(|e| e.to_string())?.len();
    ensure(items == 50, || format!("{items} questions"))?;
    ensure(first < 60.0, || format!("one run took {first:.1}s"))?;
    Ok(format!("{} output files byte-identical, {items} questions, {first:.1}s per run", sa.len()))
}

// ---- loss ------------------------------------------------------------------------

pub fn check_loss() -> Check {
    for k in 2..=16usize {
        for s in [-3.0, 0.0, 0.7, 12.5] {
            let l = group_loss(s, &vec![s; k - 1]);
            ensure((l - (k as f64).ln()).abs() < 1e-9, || format!("k={k} s={s}: {l}"))?;
        }
    }
    // Exported groups scored uniformly give ln k per group.
    let store = hopsynth::corpus::CorpusStore::from_documents(
        (0..6).map(|i| Document::new(format!("d{i}"), format!("T{i}"), format!("text {i}"))).collect(),
    )
    .map_err(|e| e.to_string())?;
    let groups: Vec<ContrastiveGroup> = (0..3)
        .map(|g| ContrastiveGroup {
            query: format!("q{g}"),
            query_hash: hopsynth::provider::scripted::query_hash(&format!("q{g}")),
            pos: String::new(),
            negs: Vec::new(),
            pos_id: format!("d{g}"),
            neg_ids: (3..6).map(|i| format!("d{i}")).collect(),
            outcome_notes: (3..6).map(|i| (format!("d{i}"), "step3a_subq".to_string())).collect(),
        })
        .collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = export_groups(&groups, &store, dir.path()).map_err(|e| e.to_string())?;
    let back = read_groups(&dir.path().join(&m.file)).map_err(|e| e.to_string())?;
    let scored: Vec<(f64, Vec<f64>)> = back.iter().map(|g| (0.25, vec![0.25; g.negs.len()])).collect();
    let l = batch_loss(&scored);
    ensure((l - 4f64.ln()).abs() < 1e-9, || format!("exported batch loss {l}"))?;
    let hand = group_loss(2.0, &[0.0, 0.0]);
    ensure((hand - 0.2395447662218845).abs() < 1e-9, || format!("single group {hand}"))?;
    Ok(format!("ln k for k in 2..=16, exported 4-doc groups {l:.9} = ln 4"))
}
