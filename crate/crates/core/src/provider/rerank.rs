use std::sync::Arc;

use super::{ProviderError, ProviderSpec, RerankBackend};

/// A document handed to a reranker. The id lets table-driven backends
/// replay precomputed scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RerankDoc {
    pub id: String,
    pub text: String,
}

/// Pairwise (query, document) scorer. Higher means more complementary.
#[derive(Clone)]
pub struct Reranker {
    spec: ProviderSpec,
    backend: Arc<dyn RerankBackend>,
}

impl std::fmt::Debug for Reranker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Reranker").field("model", &self.spec.model_name).finish()
    }
}

impl Reranker {
    pub fn new(spec: ProviderSpec, backend: Arc<dyn RerankBackend>) -> Self {
        Self { spec, backend }
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    pub fn rerank_score(&self, query: &str, doc: &RerankDoc) -> Result<f64, ProviderError> {
        Ok(self.score_batch(query, std::slice::from_ref(doc))?[0])
    }

    /// Scores in input order.
    pub fn score_batch(&self, query: &str, docs: &[RerankDoc]) -> Result<Vec<f64>, ProviderError> {
        if docs.is_empty() {
            return Ok(Vec::new());
        }
        let scores = self.backend.score_batch(query, docs)?;
        if scores.len() != docs.len() {
            return Err(ProviderError::Format(format!(
                "expected {} scores, got {}",
                docs.len(),
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(ProviderError::Format(format!("non-finite score {bad}")));
        }
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::scripted::ScriptedReranker;
    use crate::provider::ProviderKind;

    fn doc(id: &str) -> RerankDoc {
        RerankDoc { id: id.into(), text: format!("text of {id}") }
    }

    #[test]
    fn table_scores_in_input_order() {
        let r = Reranker::new(
            ProviderSpec::scripted(ProviderKind::Rerank, "r"),
            Arc::new(ScriptedReranker::new().with_score("q", "d1", 0.9).with_score("q", "d2", 0.1)),
        );
        assert_eq!(r.score_batch("q", &[doc("d2"), doc("d1")]).unwrap(), vec![0.1, 0.9]);
        assert_eq!(r.rerank_score("q", &doc("d1")).unwrap(), r.rerank_score("q", &doc("d1")).unwrap());
        assert!(r.score_batch("q", &[]).unwrap().is_empty());
    }
}
