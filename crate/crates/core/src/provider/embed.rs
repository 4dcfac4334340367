use std::sync::Arc;

use super::{EmbedBackend, ProviderError, ProviderSpec};

/// Cosine similarity. For unit vectors this is the dot product.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Embedding model returning L2-normalized vectors of a fixed dimension.
#[derive(Clone)]
pub struct Embedder {
    spec: ProviderSpec,
    backend: Arc<dyn EmbedBackend>,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder").field("model", &self.spec.model_name).finish()
    }
}

impl Embedder {
    pub fn new(spec: ProviderSpec, backend: Arc<dyn EmbedBackend>) -> Self {
        Self { spec, backend }
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::EmptyInput);
        }
        let raw = self.backend.embed_raw(texts)?;
        if raw.len() != texts.len() {
            return Err(ProviderError::Format(format!(
                "expected {} vectors, got {}",
                texts.len(),
                raw.len()
            )));
        }
        let dim = raw[0].len();
        raw.into_iter()
            .map(|v| {
                if v.len() != dim {
                    return Err(ProviderError::DimensionMismatch { expected: dim, got: v.len() });
                }
                normalize(v)
            })
            .collect()
    }

    pub fn embed_one(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        Ok(self.embed(&[text.to_string()])?.remove(0))
    }
}

fn normalize(mut v: Vec<f32>) -> Result<Vec<f32>, ProviderError> {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(ProviderError::Format("zero or non-finite embedding".into()));
    }
    for x in &mut v {
        *x = (f64::from(*x) / norm) as f32;
    }
    Ok(v)
}
