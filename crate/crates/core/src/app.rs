//! Command-line surface. Every subcommand reads the run configuration,
//! writes machine-readable outputs under `paths.out` and prints a short
//! summary. Exit codes: 0 success, 1 partial result, 2 configuration or
//! usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bridge::{chain_nhop, run_bridge};
use crate::comparison::run_comparison;
use crate::config::{Backend, ConfigError, RunConfig, SlotConfig};
use crate::corpus::{ingest, CorpusError, CorpusStore};
use crate::eval::audit::{retrieval_audit, AuditMethod, RetrievalAudit};
use crate::eval::judge::{
    aggregate_quality, format_dimension_table, format_quality_table, judge_dataset, read_assessments,
    reliability_report, write_assessments, write_heatmaps, AvgPolicy, QualityReport, DIMENSIONS,
};
use crate::eval::qa::{diagnostic_qa, DiagnosticResult, SolverMode};
use crate::forge::{export_groups, forge, ForgeError};
use crate::provider::ResponseCache;
use crate::provider::cost::{cost_usd, projected_cost, Pricing};
use crate::provider::http::{HttpChat, HttpEmbedder, HttpReranker};
use crate::provider::scripted::fnv1a;
use crate::provider::{ChatClient, Embedder, ProviderError, ProviderKind, Reranker, UsageMeter, UsageRole};
use crate::record::{read_dataset, write_dataset, DatasetError, QuestionRecord, RejectionLedger, Stage};
use crate::retrieval::{Indexes, RetrievalError, Retriever};
use crate::sim::{self, SimJudge, SimLlm, SimSolver, World};
use crate::synth::{RunParams, SynthContext, SynthError};
use crate::validate::{validate_record, ValidationReport};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Eval(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> AppError + '_ {
    move |source| AppError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Partial,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Partial => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hopsynth", version, about = "Multi-hop question synthesis and dataset evaluation")]
pub struct Cli {
    /// Run configuration file.
    #[arg(long, short, global = true, default_value = "hopsynth.toml")]
    pub config: PathBuf,
    /// Overrides `parallelism` from the configuration.
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
    /// Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a scripted configuration and the matching generated corpus into a directory.
    InitSim {
        dir: PathBuf,
    },
    /// Load the JSONL corpus into the document store.
    Ingest,
    /// Build the BM25 and dense indexes.
    Index,
    /// Synthesize bridge or comparison questions.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Simulate synthesis over retrieved candidates and export contrastive groups.
    ForgeTriples {
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Check structural constraints of a dataset file.
    Validate {
        dataset: PathBuf,
    },
    /// Rate a dataset with every configured judge.
    Judge {
        dataset: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Solver accuracy with the question alone and with gold evidence.
    Diagnose {
        dataset: PathBuf,
    },
    /// Score BM25 and dense retrieval against the gold evidence.
    AuditRetrieval {
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        method: MethodArg,
    },
    /// Quality table from judge assessment files.
    Report {
        /// Assessment files; defaults to every file in `<out>/judge`.
        judgements: Vec<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
    },
    /// Dollar cost from recorded usage, or a projection from averages.
    Cost {
        #[arg(long)]
        requests: Option<f64>,
        #[arg(long, requires = "requests")]
        avg_input: Option<f64>,
        #[arg(long, requires = "requests")]
        avg_output: Option<f64>,
        /// USD per million input tokens; defaults to the generator's price.
        #[arg(long)]
        price_in: Option<f64>,
        #[arg(long)]
        price_out: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Bridge questions.
    Bridge(SynthArgs),
    /// Comparison questions.
    Compare(SynthArgs),
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub target: Option<usize>,
    /// Chain length for bridge questions.
    #[arg(long)]
    pub hops: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Bm25,
    Dense,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    IncludeAll,
    MultiHopOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ChatRole {
    Synthesis,
    Judge,
    Solver,
}

/// Providers, stores and the usage meter for one invocation.
pub struct Runtime {
    pub cfg: RunConfig,
    pub world: Arc<World>,
    pub meter: Arc<UsageMeter>,
    cache: Arc<ResponseCache>,
}

impl Runtime {
    pub fn new(cfg: RunConfig) -> Self {
        let cache = Arc::new(match &cfg.paths.cache {
            Some(d) => ResponseCache::on_disk(d),
            None => ResponseCache::in_memory(),
        });
        let needs_world = cfg.slots().iter().any(|(_, s)| s.backend == Backend::Scripted);
        let world = if needs_world { World::generate(cfg.sim) } else { World::default() };
        Self { world: Arc::new(world), meter: Arc::new(UsageMeter::new()), cache, cfg }
    }

    fn chat(&self, slot: &SlotConfig, role: ChatRole) -> Result<ChatClient, ProviderError> {
        let spec = slot.spec(ProviderKind::Chat);
        let backend: Arc<dyn crate::provider::ChatBackend> = match slot.backend {
            Backend::Http => Arc::new(HttpChat::new(&spec)?),
            Backend::Scripted => {
                let chat = crate::provider::scripted::ScriptedChat::new();
                let w = self.world.clone();
                Arc::new(match role {
                    ChatRole::Synthesis => {
                        let llm = SimLlm::new(w);
                        chat.with_responder(move |p| llm.respond(p))
                    }
                    ChatRole::Judge => {
                        let j = SimJudge::new(fnv1a(slot.label().as_bytes()), slot.noise_per_mille);
                        chat.with_responder(move |p| j.respond(p))
                    }
                    ChatRole::Solver => {
                        let s = SimSolver::new(w);
                        chat.with_responder(move |p| s.respond(p))
                    }
                })
            }
        };
        let usage_role = match role {
            ChatRole::Synthesis => UsageRole::Synthesis,
            ChatRole::Judge => UsageRole::Judging,
            ChatRole::Solver => UsageRole::Diagnostic,
        };
        Ok(ChatClient::new(spec, backend).with_cache(self.cache.clone()).with_meter(self.meter.clone()).with_role(usage_role))
    }

    pub fn embedder(&self) -> Result<Embedder, ProviderError> {
        let slot = &self.cfg.providers.embedder;
        Ok(match slot.backend {
            Backend::Http => {
                let spec = slot.spec(ProviderKind::Embedding);
                Embedder::new(spec.clone(), Arc::new(HttpEmbedder::new(&spec)?))
            }
            Backend::Scripted => sim::embedder(),
        })
    }

    pub fn reranker(&self) -> Result<Reranker, ProviderError> {
        let slot = &self.cfg.providers.reranker;
        let spec = slot.spec(ProviderKind::Rerank);
        Ok(match (slot.backend, &slot.scores_tsv) {
            (_, Some(tsv)) => Reranker::new(spec, Arc::new(self.world.reranker().load_scores_tsv(tsv)?)),
            (Backend::Http, None) => Reranker::new(spec.clone(), Arc::new(HttpReranker::new(&spec)?)),
            (Backend::Scripted, None) => Reranker::new(spec, Arc::new(self.world.reranker())),
        })
    }

    pub fn store(&self) -> Result<Arc<CorpusStore>, AppError> {
        Ok(Arc::new(CorpusStore::open(&self.cfg.paths.store)?))
    }

    pub fn retriever(&self) -> Result<Retriever, AppError> {
        let indexes = Indexes::load(&self.cfg.paths.index)?;
        Ok(Retriever::new(self.store()?, Arc::new(indexes), self.embedder()?))
    }

    pub fn context(&self) -> Result<SynthContext, AppError> {
        let p = &self.cfg.providers;
        Ok(SynthContext {
            retriever: self.retriever()?,
            reranker: self.reranker()?,
            generator: self.chat(&p.generator, ChatRole::Synthesis)?,
            filter: self.chat(&p.filter, ChatRole::Synthesis)?,
            polisher: self.chat(&p.polisher, ChatRole::Synthesis)?,
        })
    }

    fn run_params(&self, budget: Option<usize>, target: Option<usize>) -> RunParams {
        RunParams {
            seed: self.cfg.seed,
            budget: budget.unwrap_or(self.cfg.synth.budget),
            target: target.or(self.cfg.synth.target),
            parallelism: self.cfg.parallelism,
            mmr: self.cfg.mmr,
            ..RunParams::default()
        }
    }

    fn out(&self, rel: &str) -> Result<PathBuf, AppError> {
        let p = self.cfg.paths.out.join(rel);
        if let Some(d) = p.parent() {
            fs::create_dir_all(d).map_err(io(d))?;
        }
        Ok(p)
    }

    fn write_json<T: Serialize>(&self, rel: &str, v: &T) -> Result<PathBuf, AppError> {
        let p = self.out(rel)?;
        let mut s = serde_json::to_string_pretty(v).expect("report serializes");
        s.push('\n');
        fs::write(&p, s).map_err(io(&p))?;
        Ok(p)
    }

    /// Append this invocation's usage, one line per `(model, role)`.
    fn record_usage(&self, command: &str) -> Result<(), AppError> {
        let mut agg: BTreeMap<(String, UsageRole), UsageLine> = BTreeMap::new();
        for c in self.meter.calls() {
            let e = agg.entry((c.model.clone(), c.role)).or_insert_with(|| UsageLine {
                command: command.to_string(),
                model: c.model.clone(),
                role: c.role,
                requests: 0,
                input_tokens: 0,
                output_tokens: 0,
                estimated: 0,
            });
            e.requests += 1;
            e.input_tokens += c.input_tokens;
            e.output_tokens += c.output_tokens;
            e.estimated += u64::from(c.estimated);
        }
        if agg.is_empty() {
            return Ok(());
        }
        let p = self.out(USAGE_FILE)?;
        let mut s = fs::read_to_string(&p).unwrap_or_default();
        for line in agg.values() {
            s.push_str(&serde_json::to_string(line).expect("usage serializes"));
            s.push('\n');
        }
        fs::write(&p, s).map_err(io(&p))
    }
}

pub const USAGE_FILE: &str = "usage.jsonl";

/// One line of `usage.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLine {
    pub command: String,
    pub model: String,
    pub role: UsageRole,
    pub requests: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Requests whose counts came from the length heuristic.
    pub estimated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub attempts: u64,
    pub successes: u64,
    pub rejections: BTreeMap<String, u64>,
    pub rates: BTreeMap<String, f64>,
    pub avg_attempts: Option<f64>,
    pub sources_processed: usize,
}

impl LedgerReport {
    pub fn new(l: &RejectionLedger, sources_processed: usize) -> Self {
        let stages = [
            Stage::ExtractionMalformed,
            Stage::RetrievalEmpty,
            Stage::Step3aSubq,
            Stage::Step3bFusion,
            Stage::Filter,
            Stage::Construction,
            Stage::PolisherReject,
            Stage::ChainDegenerate,
        ];
        Self {
            attempts: l.attempts,
            successes: l.successes,
            rejections: stages.iter().filter(|s| l.rejected(**s) > 0).map(|s| (s.name().to_string(), l.rejected(*s))).collect(),
            rates: stages.iter().filter(|s| l.rejected(**s) > 0).map(|s| (s.name().to_string(), l.rate(*s))).collect(),
            avg_attempts: l.avg_attempts(),
            sources_processed,
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!("attempts {}  successes {}", self.attempts, self.successes);
        for (k, n) in &self.rejections {
            let _ = write!(s, "  {k} {n} ({:.1}%)", 100.0 * self.rates[k]);
        }
        s
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
}

/// Parse `argv` and run. Returns the process exit code.
pub fn main_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(s) => s.code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<Status, AppError> {
    if let Command::InitSim { dir } = &cli.command {
        return init_sim(dir);
    }
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(p) = cli.parallelism {
        cfg.parallelism = p;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let rt = Runtime::new(cfg);
    let (name, status) = match cli.command {
        Command::InitSim { .. } => unreachable!(),
        Command::Ingest => ("ingest", cmd_ingest(&rt)?),
        Command::Index => ("index", cmd_index(&rt)?),
        Command::Synth(SynthCommand::Bridge(a)) => ("synth bridge", cmd_bridge(&rt, &a)?),
        Command::Synth(SynthCommand::Compare(a)) => ("synth compare", cmd_compare(&rt, &a)?),
        Command::ForgeTriples { budget } => ("forge-triples", cmd_forge(&rt, budget)?),
        Command::Validate { dataset } => ("validate", cmd_validate(&rt, &dataset)?),
        Command::Judge { dataset, runs } => ("judge", cmd_judge(&rt, &dataset, runs)?),
        Command::Diagnose { dataset } => ("diagnose", cmd_diagnose(&rt, &dataset)?),
        Command::AuditRetrieval { dataset, method } => ("audit-retrieval", cmd_audit(&rt, &dataset, method)?),
        Command::Report { judgements, policy } => ("report", cmd_report(&rt, judgements, policy)?),
        Command::Cost { requests, avg_input, avg_output, price_in, price_out } => {
            ("cost", cmd_cost(&rt, requests.map(|r| (r, avg_input.unwrap_or(0.0), avg_output.unwrap_or(0.0))), price_in, price_out)?)
        }
    };
    rt.record_usage(name)?;
    Ok(status)
}

fn init_sim(dir: &Path) -> Result<Status, AppError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let cfg = RunConfig::scripted(Path::new("."));
    let world = World::generate(cfg.sim);
    let corpus = dir.join("corpus.jsonl");
    let mut s = String::new();
    for d in &world.docs {
        s.push_str(&serde_json::to_string(&serde_json::json!({"id": d.id, "title": d.title, "text": d.text})).expect("json"));
        s.push('\n');
    }
    fs::write(&corpus, s).map_err(io(&corpus))?;
    let path = dir.join("hopsynth.toml");
    let text = toml::to_string(&cfg).map_err(|e| AppError::Usage(e.to_string()))?;
    fs::write(&path, text).map_err(io(&path))?;
    println!("wrote {} ({} documents) and {}", corpus.display(), world.docs.len(), path.display());
    Ok(Status::Ok)
}

fn cmd_ingest(rt: &Runtime) -> Result<Status, AppError> {
    let r = ingest(&rt.cfg.paths.corpus, &rt.cfg.paths.store)?;
    let m = &r.manifest;
    println!(
        "ingested {} of {} documents ({} over the size limit, {} malformed lines) into {}",
        m.total_kept,
        m.total_read,
        m.total_dropped_oversize,
        m.malformed_lines,
        rt.cfg.paths.store.display()
    );
    for e in &r.line_errors {
        eprintln!("line {}: {}", e.line, e.message);
    }
    Ok(if r.line_errors.is_empty() { Status::Ok } else { Status::Partial })
}

fn cmd_index(rt: &Runtime) -> Result<Status, AppError> {
    let store = rt.store()?;
    let idx = Indexes::build(&store, &rt.embedder()?, 64)?;
    idx.save(&rt.cfg.paths.index)?;
    let failures = idx.meta.embed_failures.len();
    println!(
        "indexed {} documents ({} dense, dim {}) into {}",
        idx.meta.doc_count,
        idx.meta.dense_count,
        idx.meta.dim,
        rt.cfg.paths.index.display()
    );
    Ok(if failures == 0 { Status::Ok } else { Status::Partial })
}

fn finish_synth(
    rt: &Runtime,
    name: &str,
    records: &[QuestionRecord],
    ledger: &LedgerReport,
    target: Option<usize>,
) -> Result<Status, AppError> {
    let path = rt.out(&format!("{name}.jsonl"))?;
    write_dataset(&path, records)?;
    rt.write_json(&format!("{name}.ledger.json"), ledger)?;
    println!("{} questions -> {}", records.len(), path.display());
    println!("{}", ledger.summary());
    let complete = match target {
        Some(t) => records.len() >= t,
        None => !records.is_empty(),
    };
    Ok(if complete { Status::Ok } else { Status::Partial })
}

fn cmd_bridge(rt: &Runtime, a: &SynthArgs) -> Result<Status, AppError> {
    let ctx = rt.context()?;
    let run = rt.run_params(a.budget, a.target);
    let out = run_bridge(&ctx, &run)?;
    let hops = a.hops.unwrap_or(rt.cfg.synth.hops);
    if hops < 2 {
        return Err(AppError::Usage("--hops must be at least 2".into()));
    }
    let mut records = out.outputs;
    if let Some(t) = run.target {
        records.truncate(t);
    }
    let mut report = LedgerReport::new(&out.ledger, out.sources_processed);
    if hops > 2 {
        let mut chain_ledger = RejectionLedger::new();
        let mut grown = Vec::new();
        for r in &records {
            let c = chain_nhop(&ctx, r, hops, &run)?;
            chain_ledger.merge(&c.ledger);
            grown.extend(c.record);
        }
        println!("chain extension: {}", LedgerReport::new(&chain_ledger, records.len()).summary());
        records = grown;
        let mut total = out.ledger.clone();
        total.merge(&chain_ledger);
        report = LedgerReport::new(&total, out.sources_processed);
    }
    let name = if hops == 2 { "bridge".to_string() } else { format!("bridge_{hops}hop") };
    finish_synth(rt, &name, &records, &report, run.target)
}

fn cmd_compare(rt: &Runtime, a: &SynthArgs) -> Result<Status, AppError> {
    let ctx = rt.context()?;
    let run = rt.run_params(a.budget, a.target);
    let out = run_comparison(&ctx, &run, &rt.cfg.compare)?;
    let mut records = out.outputs;
    if let Some(t) = run.target {
        records.truncate(t);
    }
    finish_synth(rt, "compare", &records, &LedgerReport::new(&out.ledger, out.sources_processed), run.target)
}

fn cmd_forge(rt: &Runtime, budget: Option<usize>) -> Result<Status, AppError> {
    let ctx = rt.context()?;
    let run = rt.run_params(budget, None);
    let out = forge(&ctx, &run, &rt.cfg.forge)?;
    let dir = rt.out("forge/x")?.parent().unwrap().to_path_buf();
    let manifest = export_groups(&out.groups, ctx.retriever.store(), &dir)?;
    rt.write_json("forge/ledger.json", &LedgerReport::new(&out.ledger, out.sources_processed))?;
    println!(
        "{} groups, {} negatives from {} sources -> {}",
        manifest.groups,
        manifest.negatives,
        out.sources_processed,
        dir.join(&manifest.file).display()
    );
    Ok(if manifest.groups > 0 { Status::Ok } else { Status::Partial })
}

fn cmd_validate(rt: &Runtime, dataset: &Path) -> Result<Status, AppError> {
    let records = read_dataset(dataset)?;
    let reports: Vec<ValidationReport> = records.iter().map(validate_record).collect();
    let failed = reports.iter().filter(|r| !r.passed()).count();
    let warned = reports.iter().filter(|r| r.warnings().next().is_some()).count();
    rt.write_json(&format!("validate/{}.json", stem(dataset)), &reports)?;
    println!("{} records: {} failed, {} with warnings", records.len(), failed, warned);
    for r in reports.iter().filter(|r| !r.passed()) {
        for i in r.failures() {
            println!("  {} {}: {}", r.record_id, i.check, i.message);
        }
    }
    Ok(if failed == 0 { Status::Ok } else { Status::Partial })
}

fn cmd_judge(rt: &Runtime, dataset: &Path, runs: Option<usize>) -> Result<Status, AppError> {
    let records = read_dataset(dataset)?;
    let runs = runs.unwrap_or(rt.cfg.judge.runs);
    if runs == 0 {
        return Err(AppError::Usage("--runs must be at least 1".into()));
    }
    if rt.cfg.providers.judges.is_empty() {
        return Err(AppError::Config(ConfigError::Invalid("no judges configured".into())));
    }
    let mut all = Vec::new();
    let mut dropped = 0;
    let mut reliability = Vec::new();
    for slot in &rt.cfg.providers.judges {
        let client = rt.chat(slot, ChatRole::Judge)?;
        let batch = judge_dataset(&records, &client, slot.label(), runs, rt.cfg.judge.cache_off)?;
        dropped += batch.dropped;
        if runs >= 2 {
            match reliability_report(&batch.assessments, slot.label(), runs) {
                Ok(r) => reliability.push(r),
                Err(e) => eprintln!("{}: reliability not computed: {e}", slot.label()),
            }
        }
        all.extend(batch.assessments);
    }
    all.sort_by(|a, b| (&a.item_id, &a.judge_id, a.run_index).cmp(&(&b.item_id, &b.judge_id, b.run_index)));
    let name = stem(dataset);
    let path = rt.out(&format!("judge/{name}.jsonl"))?;
    write_assessments(&path, &all).map_err(io(&path))?;
    if !reliability.is_empty() {
        rt.write_json(&format!("reliability/{name}.json"), &reliability)?;
        let dir = rt.cfg.paths.out.join("reliability").join(&name);
        write_heatmaps(&reliability, &dir).map_err(io(&dir))?;
        println!("{:<16} {:>7} {:>7} {:>7}", "Judge", "AvgSD", "Alpha", "Kappa");
        for r in &reliability {
            let kappa = r.kappa.map_or("n/a".to_string(), |k| format!("{k:.3}"));
            println!("{:<16} {:>7.3} {:>7.3} {:>7}", r.judge_id, r.avg_sd, r.alpha, kappa);
        }
    }
    let q = aggregate_quality(&all, None, rt.cfg.judge.avg_policy);
    print!("{}", format_quality_table(&[(name, q)]));
    println!("{} assessments -> {} ({} runs dropped)", all.len(), path.display(), dropped);
    Ok(if dropped == 0 { Status::Ok } else { Status::Partial })
}

fn cmd_diagnose(rt: &Runtime, dataset: &Path) -> Result<Status, AppError> {
    let records = read_dataset(dataset)?;
    if rt.cfg.providers.solvers.is_empty() {
        return Err(AppError::Config(ConfigError::Invalid("no solvers configured".into())));
    }
    let mut results: Vec<DiagnosticResult> = Vec::new();
    for slot in &rt.cfg.providers.solvers {
        let client = rt.chat(slot, ChatRole::Solver)?;
        for mode in [SolverMode::QOnly, SolverMode::QDocs] {
            results.push(diagnostic_qa(&records, &client, slot.label(), mode));
        }
    }
    let path = rt.write_json(&format!("diagnose/{}.json", stem(dataset)), &results)?;
    println!("{:<16} {:<7} {:>6} {:>6} {:>5}", "Model", "Mode", "EM", "F1", "N");
    for r in &results {
        println!("{:<16} {:<7} {:>6.1} {:>6.1} {:>5}", r.model_id, r.mode.to_string(), 100.0 * r.em, 100.0 * r.f1, r.n);
    }
    println!("-> {}", path.display());
    Ok(if results.iter().all(|r| r.skipped == 0) { Status::Ok } else { Status::Partial })
}

fn cmd_audit(rt: &Runtime, dataset: &Path, method: MethodArg) -> Result<Status, AppError> {
    let records = read_dataset(dataset)?;
    let retriever = rt.retriever()?;
    let methods = match method {
        MethodArg::Bm25 => vec![AuditMethod::Bm25],
        MethodArg::Dense => vec![AuditMethod::Dense],
        MethodArg::Both => vec![AuditMethod::Bm25, AuditMethod::Dense],
    };
    let a = &rt.cfg.audit;
    let audits = methods
        .into_iter()
        .map(|m| retrieval_audit(&records, &retriever, m, &a.ks, a.support_cutoff))
        .collect::<Result<Vec<RetrievalAudit>, _>>()?;
    let path = rt.write_json(&format!("audit/{}.json", stem(dataset)), &audits)?;
    let mut head = format!("{:<8} {:>6}", "Method", "MAP");
    for k in &a.ks {
        let _ = write!(head, " {:>6} {:>7}", format!("R@{k}"), format!("NDCG@{k}"));
    }
    println!("{head} {:>6}", "SupF1");
    for r in &audits {
        let mut row = format!("{:<8} {:>6.3}", r.method_id, r.map);
        for k in &a.ks {
            let _ = write!(row, " {:>6.3} {:>7.3}", r.recall_at[k], r.ndcg_at[k]);
        }
        println!("{row} {:>6.3}", r.support_f1);
    }
    println!("-> {}", path.display());
    Ok(if audits.iter().all(|r| r.skipped == 0) { Status::Ok } else { Status::Partial })
}

/// Rows of `report.csv`.
pub fn quality_csv(rows: &[(String, QualityReport)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["Dataset".to_string(), "MultiHop%".into(), "AvgScore".into(), "Items".into()];
    header.extend(DIMENSIONS.iter().map(|(k, _)| k.to_string()));
    w.write_record(&header).expect("in-memory write");
    for (label, r) in rows {
        let mut row = vec![label.clone(), format!("{:.2}", r.multi_hop_pct), format!("{:.4}", r.avg_score), r.items.to_string()];
        row.extend(DIMENSIONS.iter().map(|(k, _)| r.per_dimension.get(*k).map_or(String::new(), |v| format!("{v:.4}"))));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn cmd_report(rt: &Runtime, mut files: Vec<PathBuf>, policy: Option<PolicyArg>) -> Result<Status, AppError> {
    if files.is_empty() {
        let dir = rt.cfg.paths.out.join("judge");
        let entries = fs::read_dir(&dir).map_err(io(&dir))?;
        files = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "jsonl")).collect();
        files.sort();
    }
    if files.is_empty() {
        return Err(AppError::Usage("no assessment files to report on".into()));
    }
    let policy = match policy {
        Some(PolicyArg::IncludeAll) => AvgPolicy::IncludeAll,
        Some(PolicyArg::MultiHopOnly) => AvgPolicy::MultiHopOnly,
        None => rt.cfg.judge.avg_policy,
    };
    let mut rows = Vec::new();
    for f in &files {
        let a = read_assessments(f).map_err(io(f))?;
        rows.push((stem(f), aggregate_quality(&a, None, policy)));
    }
    let csv_path = rt.out("report.csv")?;
    fs::write(&csv_path, quality_csv(&rows)).map_err(io(&csv_path))?;
    rt.write_json("report.json", &rows)?;
    print!("{}", format_quality_table(&rows));
    println!();
    print!("{}", format_dimension_table(&rows));
    println!("-> {}", csv_path.display());
    Ok(if rows.iter().all(|(_, r)| r.items > 0) { Status::Ok } else { Status::Partial })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLine {
    pub model: String,
    pub requests: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub lines: Vec<CostLine>,
    pub total_usd: f64,
    /// Models without a configured price.
    pub unpriced: Vec<String>,
}

/// Price recorded usage with the configured per-model prices.
pub fn price_usage(lines: &[UsageLine], cfg: &RunConfig) -> CostReport {
    let mut by_model: BTreeMap<&str, (u64, u64, u64)> = BTreeMap::new();
    for l in lines {
        let e = by_model.entry(&l.model).or_default();
        e.0 += l.requests;
        e.1 += l.input_tokens;
        e.2 += l.output_tokens;
    }
    let mut unpriced = Vec::new();
    let lines: Vec<CostLine> = by_model
        .into_iter()
        .map(|(model, (requests, input, output))| {
            let slot = cfg.slots().into_iter().map(|(_, s)| s).find(|s| s.model == model);
            let pricing = slot.map(|s| Pricing { input_per_mtok: s.price_in_per_mtok, output_per_mtok: s.price_out_per_mtok });
            if pricing.is_none() {
                unpriced.push(model.to_string());
            }
            CostLine {
                model: model.to_string(),
                requests,
                input_tokens: input,
                output_tokens: output,
                usd: pricing.map_or(0.0, |p| cost_usd(input as f64, output as f64, &p)),
            }
        })
        .collect();
    let total_usd = lines.iter().map(|l| l.usd).sum();
    CostReport { lines, total_usd, unpriced }
}

fn cmd_cost(rt: &Runtime, projection: Option<(f64, f64, f64)>, price_in: Option<f64>, price_out: Option<f64>) -> Result<Status, AppError> {
    if let Some((requests, avg_in, avg_out)) = projection {
        let g = &rt.cfg.providers.generator;
        let p = Pricing {
            input_per_mtok: price_in.unwrap_or(g.price_in_per_mtok),
            output_per_mtok: price_out.unwrap_or(g.price_out_per_mtok),
        };
        let usd = projected_cost(requests, avg_in, avg_out, &p);
        rt.write_json("cost.json", &serde_json::json!({"requests": requests, "avg_input": avg_in, "avg_output": avg_out, "pricing": p, "total_usd": usd}))?;
        println!("{requests} requests x ({avg_in} in, {avg_out} out) tokens -> ${usd:.2}");
        return Ok(Status::Ok);
    }
    let path = rt.cfg.paths.out.join(USAGE_FILE);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    let lines = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<Vec<UsageLine>, _>>()
        .map_err(|e| AppError::Eval(format!("{}: {e}", path.display())))?;
    let report = price_usage(&lines, &rt.cfg);
    rt.write_json("cost.json", &report)?;
    println!("{:<20} {:>9} {:>12} {:>12} {:>9}", "Model", "Requests", "Input", "Output", "USD");
    for l in &report.lines {
        println!("{:<20} {:>9} {:>12} {:>12} {:>9.4}", l.model, l.requests, l.input_tokens, l.output_tokens, l.usd);
    }
    println!("total ${:.2}", report.total_usd);
    Ok(if report.unpriced.is_empty() { Status::Ok } else { Status::Partial })
}
