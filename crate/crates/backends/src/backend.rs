//! The model backend interface shared by HTTP clients and mocks.
//!
//! Each method returns the model's raw reply; the role operations in
//! [`crate::roles`] validate and parse it, so every backend goes through the
//! same checks.

use fineforge_core::{InstructionTemplate, SourceDocument, TokenMatrix};

use crate::error::BackendError;

pub trait ModelBackend: Send + Sync {
    /// Reply for one step of the genericization chain. `previous` is the
    /// prior step's reply, if any.
    fn genericize(
        &self,
        _query: &str,
        _step: usize,
        _previous: Option<&str>,
    ) -> Result<String, BackendError> {
        Err(BackendError::Unsupported("genericize"))
    }

    /// Number of genericization steps this backend runs.
    fn genericize_steps(&self) -> usize {
        1
    }

    fn describe(&self, _document: &str) -> Result<String, BackendError> {
        Err(BackendError::Unsupported("describe"))
    }

    fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        Err(BackendError::Unsupported("embed"))
    }

    /// Token-level embeddings, or `None` when the backend only pools.
    fn embed_tokens(&self, _texts: &[String]) -> Result<Option<Vec<TokenMatrix>>, BackendError> {
        Ok(None)
    }

    /// Either `null` or a JSON object `{"fills": [...], "answer": "..."}`.
    fn instantiate(
        &self,
        _template: &InstructionTemplate,
        _document: &SourceDocument,
        _chunk_index: usize,
    ) -> Result<String, BackendError> {
        Err(BackendError::Unsupported("instantiate"))
    }

    fn judge(&self, _instruction: &str, _answer: &str) -> Result<String, BackendError> {
        Err(BackendError::Unsupported("judge"))
    }
}

impl<B: ModelBackend + ?Sized> ModelBackend for std::sync::Arc<B> {
    fn genericize(&self, q: &str, step: usize, prev: Option<&str>) -> Result<String, BackendError> {
        (**self).genericize(q, step, prev)
    }
    fn genericize_steps(&self) -> usize {
        (**self).genericize_steps()
    }
    fn describe(&self, d: &str) -> Result<String, BackendError> {
        (**self).describe(d)
    }
    fn embed(&self, t: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        (**self).embed(t)
    }
    fn embed_tokens(&self, t: &[String]) -> Result<Option<Vec<TokenMatrix>>, BackendError> {
        (**self).embed_tokens(t)
    }
    fn instantiate(
        &self,
        t: &InstructionTemplate,
        d: &SourceDocument,
        k: usize,
    ) -> Result<String, BackendError> {
        (**self).instantiate(t, d, k)
    }
    fn judge(&self, i: &str, a: &str) -> Result<String, BackendError> {
        (**self).judge(i, a)
    }
}
