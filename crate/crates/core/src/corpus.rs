//! Corpus ingestion and the on-disk document store.
//!
//! A store is a directory holding three files:
//!
//! * `docs.log`: one JSON document per line, in ingestion order.
//! * `docs.idx`: tab-separated `id`, byte offset and byte length of each
//!   line in `docs.log`.
//! * `manifest.json`: the [`CorpusManifest`] of the ingest that produced it.
//!
//! The store is written once by [`ingest`] and is read-only afterwards.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::text::word_count;

/// Documents longer than this many whitespace tokens are dropped at ingest.
pub const MAX_WORDS: usize = 4096;

pub const LOG_FILE: &str = "docs.log";
pub const INDEX_FILE: &str = "docs.idx";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("document `{0}` not found")]
    NotFound(String),
    #[error("requested {requested} documents but only {available} are available")]
    NotEnough { requested: usize, available: usize },
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
    pub word_count: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Self { id: id.into(), title: title.into(), word_count: word_count(&text), text }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub source_path: String,
    pub total_read: usize,
    pub total_kept: usize,
    pub total_dropped_oversize: usize,
    /// Lines that could not be parsed as a document record. Not part of
    /// `total_read`.
    pub malformed_lines: usize,
    /// SHA-256 of `docs.log`.
    pub checksum: String,
}

/// A per-line ingestion problem. Ingestion continues past these.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub manifest: CorpusManifest,
    pub line_errors: Vec<LineError>,
}

#[derive(Deserialize)]
struct InputRecord {
    id: String,
    title: String,
    text: String,
}

/// Read newline-delimited `{id, title, text}` records from `source` and write
/// the kept documents to a fresh store at `store_path`.
pub fn ingest(source: &Path, store_path: &Path) -> Result<IngestReport, CorpusError> {
    let file = fs::File::open(source).map_err(io_err(source))?;
    let reader = BufReader::new(file);

    let mut seen = BTreeSet::new();
    let mut kept = Vec::new();
    let mut line_errors = Vec::new();
    let mut total_read = 0;
    let mut dropped = 0;

    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(source))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InputRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                line_errors.push(LineError { line: i + 1, message: e.to_string() });
                continue;
            }
        };
        total_read += 1;
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::DuplicateId(rec.id));
        }
        let doc = Document::new(rec.id, rec.title, rec.text);
        if doc.word_count > MAX_WORDS {
            dropped += 1;
        } else {
            kept.push(doc);
        }
    }

    fs::create_dir_all(store_path).map_err(io_err(store_path))?;
    let mut log = Vec::new();
    let mut idx = String::new();
    for doc in &kept {
        let line = serde_json::to_string(doc).expect("document serializes");
        idx.push_str(&format!("{}\t{}\t{}\n", escape_id(&doc.id), log.len(), line.len()));
        log.extend_from_slice(line.as_bytes());
        log.push(b'\n');
    }
    let checksum = hex::encode(Sha256::digest(&log));
    let manifest = CorpusManifest {
        source_path: source.display().to_string(),
        total_read,
        total_kept: kept.len(),
        total_dropped_oversize: dropped,
        malformed_lines: line_errors.len(),
        checksum,
    };

    write_atomic(&store_path.join(LOG_FILE), &log)?;
    write_atomic(&store_path.join(INDEX_FILE), idx.as_bytes())?;
    let manifest_json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&store_path.join(MANIFEST_FILE), &manifest_json)?;

    Ok(IngestReport { manifest, line_errors })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

// Ids are opaque; tabs and newlines would break the index format.
fn escape_id(id: &str) -> String {
    id.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

/// Immutable, in-memory view of a document store. Safe to share across
/// threads.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
    manifest: Option<CorpusManifest>,
}

impl CorpusStore {
    /// Open a store written by [`ingest`].
    pub fn open(dir: &Path) -> Result<Self, CorpusError> {
        let log_path = dir.join(LOG_FILE);
        let idx_path = dir.join(INDEX_FILE);
        let log = fs::read(&log_path).map_err(io_err(&log_path))?;
        let idx = fs::read_to_string(&idx_path).map_err(io_err(&idx_path))?;

        let mut docs = Vec::new();
        for (n, line) in idx.lines().enumerate() {
            let mut parts = line.split('\t');
            let (Some(_id), Some(off), Some(len), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(CorpusError::Corrupt(format!("index line {}", n + 1)));
            };
            let off: usize = off
                .parse()
                .map_err(|_| CorpusError::Corrupt(format!("bad offset on index line {}", n + 1)))?;
            let len: usize = len
                .parse()
                .map_err(|_| CorpusError::Corrupt(format!("bad length on index line {}", n + 1)))?;
            let slice = log
                .get(off..off + len)
                .ok_or_else(|| CorpusError::Corrupt(format!("index line {} out of range", n + 1)))?;
            let doc: Document = serde_json::from_slice(slice)
                .map_err(|e| CorpusError::Corrupt(format!("record {}: {e}", n + 1)))?;
            docs.push(doc);
        }

        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = match fs::read(&manifest_path) {
            Ok(bytes) => Some(
                serde_json::from_slice(&bytes)
                    .map_err(|e| CorpusError::Corrupt(format!("manifest: {e}")))?,
            ),
            Err(_) => None,
        };
        let mut store = Self::from_documents(docs)?;
        store.manifest = manifest;
        Ok(store)
    }

    /// Build an in-memory store. Applies the same duplicate-id rule as
    /// [`ingest`] but not the length filter.
    pub fn from_documents(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(docs.len());
        for (i, d) in docs.iter().enumerate() {
            if by_id.insert(d.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(d.id.clone()));
            }
        }
        Ok(Self { docs, by_id, manifest: None })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn manifest(&self) -> Option<&CorpusManifest> {
        self.manifest.as_ref()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Result<&Document, CorpusError> {
        self.by_id
            .get(id)
            .map(|&i| &self.docs[i])
            .ok_or_else(|| CorpusError::NotFound(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Draw `n` distinct documents not in `exclude`. The result depends only
    /// on `(seed, store contents, exclude)`.
    pub fn sample_documents(
        &self,
        n: usize,
        seed: u64,
        exclude: &BTreeSet<String>,
    ) -> Result<Vec<Document>, CorpusError> {
        let mut pool: Vec<&Document> =
            self.docs.iter().filter(|d| !exclude.contains(&d.id)).collect();
        if n > pool.len() {
            return Err(CorpusError::NotEnough { requested: n, available: pool.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (picked, _) = pool.partial_shuffle(&mut rng, n);
        Ok(picked.iter().map(|d| (*d).clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(dir: &Path, lines: &[String]) -> PathBuf {
        let p = dir.join("input.jsonl");
        fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    fn rec(id: &str, words: usize) -> String {
        let text = vec!["w"; words].join(" ");
        serde_json::json!({"id": id, "title": format!("T {id}"), "text": text}).to_string()
    }

    #[test]
    fn keeps_short_documents() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_lines(dir.path(), &[rec("a", 10), rec("b", 10), rec("c", 10)]);
        let rep = ingest(&src, &dir.path().join("store")).unwrap();
        assert_eq!(rep.manifest.total_kept, 3);
        assert_eq!(rep.manifest.total_dropped_oversize, 0);
    }

    #[test]
    fn drops_documents_over_the_limit() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_lines(dir.path(), &[rec("big", 5000)]);
        let rep = ingest(&src, &dir.path().join("store")).unwrap();
        assert_eq!(rep.manifest.total_kept, 0);
        assert_eq!(rep.manifest.total_dropped_oversize, 1);
    }

    #[test]
    fn exactly_at_limit_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_lines(dir.path(), &[rec("edge", MAX_WORDS), rec("over", MAX_WORDS + 1)]);
        let rep = ingest(&src, &dir.path().join("store")).unwrap();
        assert_eq!(rep.manifest.total_kept, 1);
        let store = CorpusStore::open(&dir.path().join("store")).unwrap();
        assert!(store.contains("edge"));
        assert!(!store.contains("over"));
    }

    #[test]
    fn malformed_lines_are_collected() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_lines(
            dir.path(),
            &[rec("a", 3), "{not json".to_string(), r#"{"id":"x"}"#.to_string(), rec("b", 3)],
        );
        let rep = ingest(&src, &dir.path().join("store")).unwrap();
        assert_eq!(rep.manifest.total_kept, 2);
        assert_eq!(rep.line_errors.len(), 2);
        assert_eq!(rep.line_errors[0].line, 2);
        assert_eq!(rep.line_errors[1].line, 3);
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_lines(dir.path(), &[rec("a", 3), rec("a", 4)]);
        let err = ingest(&src, &dir.path().join("store")).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateId(ref id) if id == "a"), "{err}");
    }

    #[test]
    fn get_missing_is_not_found() {
        let store = CorpusStore::from_documents(vec![Document::new("x", "X", "x y")]).unwrap();
        assert!(matches!(store.get("missing"), Err(CorpusError::NotFound(_))));
        assert_eq!(store.get("x").unwrap().word_count, 2);
    }

    #[test]
    fn sampling_edge_cases() {
        let docs = (0..10).map(|i| Document::new(format!("d{i}"), "t", "x")).collect();
        let store = CorpusStore::from_documents(docs).unwrap();
        assert!(store.sample_documents(0, 1, &BTreeSet::new()).unwrap().is_empty());
        let exclude: BTreeSet<String> = ["d0".to_string(), "d1".to_string()].into();
        let err = store.sample_documents(9, 1, &exclude).unwrap_err();
        assert!(matches!(err, CorpusError::NotEnough { requested: 9, available: 8 }));
        let got = store.sample_documents(8, 3, &exclude).unwrap();
        assert!(got.iter().all(|d| !exclude.contains(&d.id)));
    }

    #[test]
    fn ids_with_tabs_survive_the_index() {
        let dir = tempfile::tempdir().unwrap();
        let line = serde_json::json!({"id": "a\tb", "title": "t", "text": "x"}).to_string();
        let src = write_lines(dir.path(), &[line]);
        ingest(&src, &dir.path().join("store")).unwrap();
        let store = CorpusStore::open(&dir.path().join("store")).unwrap();
        assert_eq!(store.get("a\tb").unwrap().text, "x");
    }
}
