//! Client for chat-completion style HTTP endpoints.

use std::time::Duration;

use fineforge_core::{InstructionTemplate, SourceDocument, TokenMatrix};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::backend::ModelBackend;
use crate::error::BackendError;
use crate::prompts::PromptSet;
use crate::protocol::{ChatMessage, ChatRequest, ChatResponse};

pub const CHAT_PATH: &str = "/v1/chat/completions";
pub const EMBEDDINGS_PATH: &str = "/v1/embeddings";

#[derive(Debug, Clone)]
pub struct HttpBackend {
    pub base_url: String,
    pub chat_path: String,
    pub embeddings_path: String,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub api_key: Option<String>,
    /// Ask the embeddings endpoint for per-token vectors.
    pub token_embeddings: bool,
    pub prompts: PromptSet,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingReply {
    data: Vec<EmbeddingItem>,
}

#[derive(Deserialize)]
struct EmbeddingItem {
    #[serde(default)]
    index: Option<usize>,
    #[serde(default)]
    embedding: Vec<f32>,
    #[serde(default)]
    token_embeddings: Option<Vec<Vec<f64>>>,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            chat_path: CHAT_PATH.into(),
            embeddings_path: EMBEDDINGS_PATH.into(),
            model: model.into(),
            temperature: 0.0,
            max_tokens: None,
            api_key: None,
            token_embeddings: false,
            prompts: PromptSet::default(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}{}", self.base_url, path);
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => resp
                .into_json()
                .map_err(|e| BackendError::Transport(format!("reading response: {e}"))),
            Err(ureq::Error::Status(status, resp)) => Err(BackendError::Http {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") {
                    Err(BackendError::Timeout)
                } else {
                    Err(BackendError::Transport(msg))
                }
            }
        }
    }

    pub fn chat(&self, messages: Vec<ChatMessage>) -> Result<ChatResponse, BackendError> {
        let req = ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        req.validate().map_err(BackendError::Fatal)?;
        let body = serde_json::to_value(&req).expect("request serializes");
        let reply: ChatReply = serde_json::from_value(self.post(&self.chat_path, &body)?)
            .map_err(|e| BackendError::Transport(format!("unexpected chat response: {e}")))?;
        let choice = reply
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Transport("chat response has no choices".into()))?;
        Ok(ChatResponse {
            content: choice.message.content.unwrap_or_default(),
            finish_reason: choice.finish_reason,
        })
    }

    fn embeddings(&self, texts: &[String]) -> Result<Vec<EmbeddingItem>, BackendError> {
        let mut body = json!({ "model": self.model, "input": texts });
        if self.token_embeddings {
            body["return_token_embeddings"] = Value::Bool(true);
        }
        let mut reply: EmbeddingReply =
            serde_json::from_value(self.post(&self.embeddings_path, &body)?).map_err(|e| {
                BackendError::Transport(format!("unexpected embeddings response: {e}"))
            })?;
        if reply.data.iter().all(|d| d.index.is_some()) {
            reply.data.sort_by_key(|d| d.index);
        }
        Ok(reply.data)
    }
}

impl ModelBackend for HttpBackend {
    fn genericize(&self, query: &str, step: usize, previous: Option<&str>) -> Result<String, BackendError> {
        let prompt = self
            .prompts
            .genericize_chain
            .get(step)
            .ok_or(BackendError::Unsupported("genericize step beyond prompt chain"))?;
        let prev = previous.unwrap_or("");
        Ok(self
            .chat(prompt.render(&[("query", query), ("previous", prev)]))?
            .content)
    }

    fn genericize_steps(&self) -> usize {
        self.prompts.genericize_chain.len()
    }

    fn describe(&self, document: &str) -> Result<String, BackendError> {
        Ok(self.chat(self.prompts.describe.render(&[("document", document)]))?.content)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        Ok(self.embeddings(texts)?.into_iter().map(|d| d.embedding).collect())
    }

    fn embed_tokens(&self, texts: &[String]) -> Result<Option<Vec<TokenMatrix>>, BackendError> {
        if !self.token_embeddings {
            return Ok(None);
        }
        self.embeddings(texts)?
            .into_iter()
            .map(|d| {
                let rows = d.token_embeddings.ok_or_else(|| {
                    BackendError::Transport("response lacks token_embeddings".into())
                })?;
                TokenMatrix::from_rows(&rows)
                    .map_err(|e| BackendError::Transport(format!("bad token embeddings: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn instantiate(
        &self,
        template: &InstructionTemplate,
        document: &SourceDocument,
        chunk_index: usize,
    ) -> Result<String, BackendError> {
        let slots: Vec<String> = template
            .slots()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s.description))
            .collect();
        let k = chunk_index.to_string();
        let messages = self.prompts.instantiate.render(&[
            ("template", &template.template_text),
            ("slots", &slots.join("\n")),
            ("chunk_index", &k),
            ("document", &document.text),
        ]);
        Ok(self.chat(messages)?.content)
    }

    fn judge(&self, instruction: &str, answer: &str) -> Result<String, BackendError> {
        let messages = self
            .prompts
            .judge
            .render(&[("instruction", instruction), ("answer", answer)]);
        Ok(self.chat(messages)?.content)
    }
}
