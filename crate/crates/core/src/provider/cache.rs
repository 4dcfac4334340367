use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GenerationParams;

/// Completion cache keyed by a stable hash of
/// `(endpoint, model, prompt, params)`.
///
/// Entries live in memory and, when a directory is configured, as one
/// pretty-printed JSON file per key under `<dir>/<key[0..2]>/<key>.json`.
#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, String>>,
}

#[derive(Serialize, Deserialize)]
struct DiskEntry {
    endpoint: String,
    model: String,
    params: GenerationParams,
    prompt: String,
    response: String,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), mem: Mutex::default() }
    }

    pub fn key(endpoint: &str, model: &str, prompt: &str, params: &GenerationParams) -> String {
        let material = serde_json::to_vec(&(endpoint, model, prompt, params)).expect("key serializes");
        hex::encode(Sha256::digest(&material))
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(&key[..2]).join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(hit) = self.mem.lock().expect("cache poisoned").get(key) {
            return Some(hit.clone());
        }
        let path = self.path_for(key)?;
        let bytes = fs::read(path).ok()?;
        let entry: DiskEntry = serde_json::from_slice(&bytes).ok()?;
        self.mem.lock().expect("cache poisoned").insert(key.to_string(), entry.response.clone());
        Some(entry.response)
    }

    pub fn put(
        &self,
        key: &str,
        endpoint: &str,
        model: &str,
        prompt: &str,
        params: &GenerationParams,
        response: &str,
    ) {
        self.mem.lock().expect("cache poisoned").insert(key.to_string(), response.to_string());
        if let Some(path) = self.path_for(key) {
            let entry = DiskEntry {
                endpoint: endpoint.to_string(),
                model: model.to_string(),
                params: params.clone(),
                prompt: prompt.to_string(),
                response: response.to_string(),
            };
            // A failed disk write only costs a future cache miss.
            if let Some(parent) = path.parent() {
                let _ = fs::create_dir_all(parent);
            }
            if let Ok(json) = serde_json::to_vec_pretty(&entry) {
                let _ = fs::write(path, json);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.mem.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
