//! Run configuration: one TOML file, `${VAR}` interpolation for secrets.
//!
//! ```toml
//! seed = 7
//!
//! [paths]
//! corpus = "corpus.jsonl"
//! store = "work/store"
//! index = "work/index"
//! out = "work/out"
//!
//! [providers.generator]
//! backend = "http"
//! endpoint = "https://api.example.com/v1"
//! model = "gen-large"
//! auth_env = "GEN_API_KEY"
//! ```
//!
//! The full key list is in `docs/formats.md`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::comparison::CompareParams;
use crate::eval::judge::AvgPolicy;
use crate::forge::ForgeParams;
use crate::provider::{ProviderKind, ProviderSpec};
use crate::retrieval::MmrParams;
use crate::sim::WorldSpec;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("environment variable `{0}` is not set")]
    MissingVar(String),
    #[error("unterminated `${{` at byte {0}")]
    Unterminated(usize),
    #[error(transparent)]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

/// Replace `${NAME}` with the value of environment variable `NAME`.
/// `$$` escapes a literal dollar sign.
pub fn interpolate(raw: &str, lookup: impl Fn(&str) -> Option<String>) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(raw.len());
    let mut rest = raw;
    let mut offset = 0;
    while let Some(i) = rest.find('$') {
        out.push_str(&rest[..i]);
        let tail = &rest[i..];
        if let Some(t) = tail.strip_prefix("$$") {
            out.push('$');
            offset += i + 2;
            rest = t;
        } else if let Some(t) = tail.strip_prefix("${") {
            let end = t.find('}').ok_or(ConfigError::Unterminated(offset + i))?;
            let name = &t[..end];
            out.push_str(&lookup(name).ok_or_else(|| ConfigError::MissingVar(name.to_string()))?);
            offset += i + 3 + end;
            rest = &t[end + 1..];
        } else {
            out.push('$');
            offset += i + 1;
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Http,
    /// In-process rule-based model over the `[sim]` world.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotConfig {
    pub backend: Backend,
    /// Label used in reports; defaults to the model name.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model: String,
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default)]
    pub price_in_per_mtok: f64,
    #[serde(default)]
    pub price_out_per_mtok: f64,
    /// Scripted judges: per-mille chance that a run drifts a rating.
    #[serde(default = "default_noise")]
    pub noise_per_mille: u64,
    /// Reranker only: replay a trained model's `scores.tsv`.
    #[serde(default)]
    pub scores_tsv: Option<PathBuf>,
}

fn default_noise() -> u64 {
    100
}

impl SlotConfig {
    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.model)
    }

    pub fn spec(&self, kind: ProviderKind) -> ProviderSpec {
        let mut s = match (self.backend, &self.endpoint) {
            (Backend::Http, Some(e)) => ProviderSpec::new(kind, e, &self.model),
            _ => ProviderSpec::scripted(kind, &self.model),
        };
        s.auth_env = self.auth_env.clone();
        s.with_prices(self.price_in_per_mtok, self.price_out_per_mtok)
    }

    fn check(&self, slot: &str, kind: ProviderKind) -> Result<(), ConfigError> {
        if self.backend == Backend::Http && self.endpoint.is_none() {
            return Err(ConfigError::Invalid(format!("slot `{slot}`: http backend needs an endpoint")));
        }
        self.spec(kind).validate().map_err(|e| ConfigError::Invalid(format!("slot `{slot}`: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Providers {
    pub generator: SlotConfig,
    /// Scores comparison profiles; kept separate so thresholds stay stable
    /// when the generator changes.
    pub filter: SlotConfig,
    pub polisher: SlotConfig,
    #[serde(default)]
    pub judges: Vec<SlotConfig>,
    #[serde(default)]
    pub solvers: Vec<SlotConfig>,
    pub embedder: SlotConfig,
    pub reranker: SlotConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Newline-delimited `{id, title, text}` input.
    pub corpus: PathBuf,
    pub store: PathBuf,
    pub index: PathBuf,
    pub out: PathBuf,
    /// On-disk completion cache; in-memory only when unset.
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub budget: usize,
    pub target: Option<usize>,
    /// Bridge chain length; 2 is the plain bridge question.
    pub hops: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self { budget: 10, target: None, hops: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSettings {
    pub runs: usize,
    /// Every run reaches the provider (needed for reliability numbers).
    pub cache_off: bool,
    pub avg_policy: AvgPolicy,
}

impl Default for JudgeSettings {
    fn default() -> Self {
        Self { runs: 5, cache_off: true, avg_policy: AvgPolicy::IncludeAll }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSettings {
    pub ks: Vec<usize>,
    /// Retrieved-set size for Support F1; |golden| when unset.
    pub support_cutoff: Option<usize>,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self { ks: vec![1, 2, 5, 10], support_cutoff: None }
    }
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub paths: Paths,
    pub providers: Providers,
    /// World answered by scripted chat backends.
    #[serde(default)]
    pub sim: WorldSpec,
    #[serde(default)]
    pub mmr: MmrParams,
    #[serde(default)]
    pub synth: SynthSettings,
    #[serde(default)]
    pub compare: CompareParams,
    #[serde(default)]
    pub forge: ForgeParams,
    #[serde(default)]
    pub judge: JudgeSettings,
    #[serde(default)]
    pub audit: AuditSettings,
}

impl RunConfig {
    pub fn parse(raw: &str, base: &Path) -> Result<Self, ConfigError> {
        let text = interpolate(raw, |k| std::env::var(k).ok())?;
        let mut cfg: RunConfig = toml::from_str(&text)?;
        cfg.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&raw, path.parent().unwrap_or(Path::new(".")))
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [&mut paths.corpus, &mut paths.store, &mut paths.index, &mut paths.out] {
            fix(p);
        }
        if let Some(c) = paths.cache.as_mut() {
            fix(c);
        }
        if let Some(s) = self.providers.reranker.scores_tsv.as_mut() {
            fix(s);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.providers;
        p.generator.check("generator", ProviderKind::Chat)?;
        p.filter.check("filter", ProviderKind::Chat)?;
        p.polisher.check("polisher", ProviderKind::Chat)?;
        p.embedder.check("embedder", ProviderKind::Embedding)?;
        p.reranker.check("reranker", ProviderKind::Rerank)?;
        for (group, slots) in [("judges", &p.judges), ("solvers", &p.solvers)] {
            let mut seen = BTreeSet::new();
            for s in slots {
                s.check(group, ProviderKind::Chat)?;
                if !seen.insert(s.label()) {
                    return Err(ConfigError::Invalid(format!("duplicate {group} label `{}`", s.label())));
                }
            }
        }
        let c = &self.compare;
        if !(1..=5).contains(&c.min_entity) || !(1..=5).contains(&c.min_attr) {
            return Err(ConfigError::Invalid("compare thresholds must lie in 1..=5".into()));
        }
        if c.k == 0 {
            return Err(ConfigError::Invalid("compare.k must be positive".into()));
        }
        self.mmr.validate().map_err(|e| ConfigError::Invalid(format!("mmr: {e}")))?;
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        if self.synth.hops < 2 {
            return Err(ConfigError::Invalid("synth.hops must be at least 2".into()));
        }
        if self.forge.group_size < 2 {
            return Err(ConfigError::Invalid("forge.group_size must be at least 2".into()));
        }
        if self.judge.runs == 0 {
            return Err(ConfigError::Invalid("judge.runs must be at least 1".into()));
        }
        Ok(())
    }

    /// Every slot the run talks to, with its provider kind.
    pub fn slots(&self) -> Vec<(ProviderKind, &SlotConfig)> {
        let p = &self.providers;
        let mut v = vec![
            (ProviderKind::Chat, &p.generator),
            (ProviderKind::Chat, &p.filter),
            (ProviderKind::Chat, &p.polisher),
            (ProviderKind::Embedding, &p.embedder),
            (ProviderKind::Rerank, &p.reranker),
        ];
        v.extend(p.judges.iter().chain(&p.solvers).map(|s| (ProviderKind::Chat, s)));
        v
    }

    /// A fully scripted configuration rooted at `dir`.
    pub fn scripted(dir: &Path) -> Self {
        let slot = |model: &str| SlotConfig {
            backend: Backend::Scripted,
            name: None,
            endpoint: None,
            model: model.to_string(),
            auth_env: None,
            price_in_per_mtok: 0.0,
            price_out_per_mtok: 0.0,
            noise_per_mille: default_noise(),
            scores_tsv: None,
        };
        RunConfig {
            seed: 7,
            parallelism: 4,
            paths: Paths {
                corpus: dir.join("corpus.jsonl"),
                store: dir.join("store"),
                index: dir.join("index"),
                out: dir.join("out"),
                cache: None,
            },
            providers: Providers {
                generator: slot("sim-generator"),
                filter: slot("sim-filter"),
                polisher: slot("sim-polisher"),
                judges: vec![slot("sim-judge-a"), SlotConfig { noise_per_mille: 250, ..slot("sim-judge-b") }],
                solvers: vec![slot("sim-solver")],
                embedder: slot("sim-embed"),
                reranker: slot("sim-rerank"),
            },
            sim: WorldSpec::default(),
            mmr: MmrParams::default(),
            synth: SynthSettings::default(),
            compare: CompareParams::default(),
            forge: ForgeParams::default(),
            judge: JudgeSettings::default(),
            audit: AuditSettings::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(k: &str) -> Option<String> {
        (k == "KEY").then(|| "s3cret".to_string())
    }

    #[test]
    fn interpolation() {
        assert_eq!(interpolate("a=${KEY};", env).unwrap(), "a=s3cret;");
        assert_eq!(interpolate("cost $$5 and $x", env).unwrap(), "cost $5 and $x");
        assert!(matches!(interpolate("${NOPE}", env), Err(ConfigError::MissingVar(v)) if v == "NOPE"));
        assert!(matches!(interpolate("x ${KEY", env), Err(ConfigError::Unterminated(2))));
    }

    #[test]
    fn scripted_config_round_trips_through_toml() {
        let cfg = RunConfig::scripted(Path::new("/tmp/run"));
        let text = toml::to_string(&cfg).unwrap();
        let back = RunConfig::parse(&text, Path::new("/")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_thresholds_and_unknown_keys() {
        let mut cfg = RunConfig::scripted(Path::new("/tmp/run"));
        cfg.compare.min_attr = 6;
        assert!(cfg.validate().is_err());
        let text = toml::to_string(&RunConfig::scripted(Path::new("/tmp/run"))).unwrap();
        assert!(RunConfig::parse(&format!("bogus = 1\n{text}"), Path::new("/")).is_err());
    }

    #[test]
    fn http_slot_needs_endpoint() {
        let mut cfg = RunConfig::scripted(Path::new("/tmp/run"));
        cfg.providers.generator.backend = Backend::Http;
        assert!(cfg.validate().is_err());
        cfg.providers.generator.endpoint = Some("https://api.example.com/v1".into());
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let text = toml::to_string(&RunConfig::scripted(Path::new("rel"))).unwrap();
        let cfg = RunConfig::parse(&text, Path::new("/base")).unwrap();
        assert_eq!(cfg.paths.store, Path::new("/base/rel/store"));
    }
}
