//! Offline world: a generated corpus plus rule-based models that answer
//! every prompt from its fact table.
//!
//! Used by the examples, the integration tests and the `scripted` backend of
//! the command line. Failure modes are injected per document through
//! [`Behavior`], which is how the rejection schedules are reproduced.

pub mod llm;
pub mod world;

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::corpus::CorpusStore;
use crate::provider::scripted::{HashingEmbedder, ScriptedChat};
use crate::provider::{ChatClient, Embedder, ProviderKind, ProviderSpec, Reranker, UsageMeter, UsageRole};
use crate::retrieval::{Indexes, Retriever};
use crate::synth::{SynthContext, SynthError};

pub use llm::{SimJudge, SimLlm, SimSolver};
pub use world::{Behavior, EntityType, World, WorldSpec};

pub const EMBED_DIM: usize = 256;

pub fn embedder() -> Embedder {
    Embedder::new(ProviderSpec::scripted(ProviderKind::Embedding, "sim-embed"), Arc::new(HashingEmbedder::new(EMBED_DIM)))
}

/// A world with its corpus indexed and a shared usage meter.
#[derive(Clone)]
pub struct SimEnv {
    pub world: Arc<World>,
    pub store: Arc<CorpusStore>,
    pub indexes: Arc<Indexes>,
    pub meter: Arc<UsageMeter>,
}

impl SimEnv {
    pub fn new(world: World) -> Result<Self, SynthError> {
        let store = world.store()?;
        let indexes = Indexes::build(&store, &embedder(), 64)?;
        Ok(Self { world: Arc::new(world), store: Arc::new(store), indexes: Arc::new(indexes), meter: Arc::new(UsageMeter::new()) })
    }

    pub fn retriever(&self) -> Retriever {
        Retriever::new(self.store.clone(), self.indexes.clone(), embedder())
    }

    pub fn reranker(&self) -> Reranker {
        Reranker::new(ProviderSpec::scripted(ProviderKind::Rerank, "sim-rerank"), Arc::new(self.world.reranker()))
    }

    fn client(&self, name: &str, role: UsageRole, f: impl Fn(&str) -> Option<String> + Send + Sync + 'static) -> ChatClient {
        ChatClient::new(ProviderSpec::scripted(ProviderKind::Chat, name), Arc::new(ScriptedChat::new().with_responder(f)))
            .with_meter(self.meter.clone())
            .with_role(role)
    }

    /// Generator and reviewer share one rule set.
    pub fn llm(&self, name: &str) -> ChatClient {
        let llm = SimLlm::new(self.world.clone());
        self.client(name, UsageRole::Synthesis, move |p| llm.respond(p))
    }

    pub fn context(&self) -> SynthContext {
        SynthContext {
            retriever: self.retriever(),
            reranker: self.reranker(),
            generator: self.llm("sim-generator"),
            filter: self.llm("sim-filter"),
            polisher: self.llm("sim-polisher"),
        }
    }

    /// `noise_per_mille` is the chance a run drifts a rating by a grade.
    pub fn judge(&self, name: &str, seed: u64, noise_per_mille: u64) -> ChatClient {
        let j = SimJudge::new(seed, noise_per_mille);
        self.client(name, UsageRole::Judging, move |p| j.respond(p))
    }

    pub fn solver(&self, name: &str) -> ChatClient {
        let s = SimSolver::new(self.world.clone());
        self.client(name, UsageRole::Diagnostic, move |p| s.respond(p))
    }
}

/// Per-source outcome counts for a bridge run over a dedicated pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BridgeSchedule {
    /// First candidate declines sub-question generation, second succeeds.
    pub subq_invalid: usize,
    /// First candidate fails fusion, second succeeds.
    pub fusion_none: usize,
    pub polish_reject: usize,
    pub clean: usize,
}

impl BridgeSchedule {
    pub const PUBLISHED: BridgeSchedule = BridgeSchedule { subq_invalid: 29, fusion_none: 4, polish_reject: 4, clean: 60 };

    pub fn sources(&self) -> usize {
        self.subq_invalid + self.fusion_none + self.polish_reject + self.clean
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComparisonSchedule {
    pub filter_reject: usize,
    pub construction_fail: usize,
    pub polish_reject: usize,
    pub clean: usize,
}

impl ComparisonSchedule {
    pub const PUBLISHED: ComparisonSchedule =
        ComparisonSchedule { filter_reject: 7, construction_fail: 2, polish_reject: 2, clean: 95 };

    pub fn sources(&self) -> usize {
        self.filter_reject + self.construction_fail + self.polish_reject + self.clean
    }
}

fn town_world(seed: u64, towns: usize) -> World {
    World::generate(WorldSpec { seed, towns, people: towns + towns / 8 + 2, companies: 30, institutions: 20 })
}

/// World whose towns, used as the source pool, fail as `s` prescribes.
pub fn bridge_schedule_world(s: &BridgeSchedule, seed: u64) -> (World, BTreeSet<String>) {
    let mut w = town_world(seed, s.sources());
    let towns: Vec<(String, String)> =
        w.docs_of_type(EntityType::Town).iter().map(|d| (d.id.clone(), d.title.clone())).collect();
    for (i, (id, title)) in towns.iter().enumerate() {
        let founder = w.facts_in_doc(id)[0].object.clone();
        if i < s.subq_invalid + s.fusion_none {
            let decoy = w.add_decoy(&founder);
            let decoy_title = w.doc(&decoy).unwrap().title.clone();
            let b = if i < s.subq_invalid { Behavior::SubqInvalid } else { Behavior::FusionNone };
            w.set_behavior(&decoy_title, b);
        } else if i < s.subq_invalid + s.fusion_none + s.polish_reject {
            w.set_behavior(title, Behavior::PolishReject);
        }
    }
    (w, towns.into_iter().map(|(id, _)| id).collect())
}

pub fn comparison_schedule_world(s: &ComparisonSchedule, seed: u64) -> (World, BTreeSet<String>) {
    let mut w = town_world(seed, s.sources());
    let towns: Vec<(String, String)> =
        w.docs_of_type(EntityType::Town).iter().map(|d| (d.id.clone(), d.title.clone())).collect();
    let plan = [
        (s.filter_reject, Behavior::FilterReject),
        (s.construction_fail, Behavior::ConstructionFail),
        (s.polish_reject, Behavior::ComparePolishReject),
    ];
    let mut it = towns.iter();
    for (n, b) in plan {
        for (_, title) in it.by_ref().take(n) {
            w.set_behavior(title, b);
        }
    }
    (w, towns.into_iter().map(|(id, _)| id).collect())
}
