//! Deterministic offline backends.
//!
//! [`MockBackend`] answers every role with a pure function of its seed and
//! input. [`ScriptedBackend`] replays canned replies, for exercising error
//! handling.

use std::collections::{HashSet, VecDeque};
use std::sync::Mutex;

use fineforge_core::document::sentence_spans;
use fineforge_core::excerpt::encode_excerpt;
use fineforge_core::seed::{stable_hash, unit_hash};
use fineforge_core::{InstructionTemplate, SourceDocument, TokenMatrix, Tokenizer, WordTokenizer};
use serde::{Deserialize, Serialize};

use crate::backend::ModelBackend;
use crate::error::BackendError;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "have", "in", "is",
    "it", "its", "of", "on", "or", "that", "the", "their", "this", "to", "was", "were", "which",
    "with",
];

pub const MOCK_DESCRIPTION: &str =
    "A document that explains the topic in enough detail to answer the question.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockOptions {
    pub seed: u64,
    pub dim: usize,
    pub incompatible_rate: f64,
    pub min_answer_chars: usize,
    /// Chunk count used to place the answer for a given chunk index.
    pub chunks: usize,
    /// Fraction of the document's characters each answer covers.
    pub answer_fraction: f64,
}

impl Default for MockOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: 64,
            incompatible_rate: 0.05,
            min_answer_chars: 40,
            chunks: 5,
            answer_fraction: 1.0 / 3.0,
        }
    }
}

impl MockOptions {
    /// Parses `mock:` or `mock:?seed=7&dim=32`.
    pub fn from_endpoint(endpoint: &str) -> Result<Self, String> {
        Self::default().with_endpoint(endpoint)
    }

    /// These options with any set in the endpoint's query string replaced.
    pub fn with_endpoint(self, endpoint: &str) -> Result<Self, String> {
        let rest = endpoint
            .strip_prefix("mock:")
            .ok_or_else(|| format!("not a mock endpoint: {endpoint}"))?;
        let query = rest.trim_start_matches("//").trim_start_matches('?');
        let mut opts = self;
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| format!("bad mock option {pair:?}"))?;
            let bad = |e: &dyn std::fmt::Display| format!("bad value for {k}: {e}");
            match k {
                "seed" => opts.seed = v.parse().map_err(|e| bad(&e))?,
                "dim" => opts.dim = v.parse().map_err(|e| bad(&e))?,
                "incompatible_rate" => opts.incompatible_rate = v.parse().map_err(|e| bad(&e))?,
                "min_answer_chars" => opts.min_answer_chars = v.parse().map_err(|e| bad(&e))?,
                "chunks" => opts.chunks = v.parse().map_err(|e| bad(&e))?,
                "answer_fraction" => opts.answer_fraction = v.parse().map_err(|e| bad(&e))?,
                _ => return Err(format!("unknown mock option {k:?}")),
            }
        }
        if opts.dim == 0 {
            return Err("mock dim must be positive".into());
        }
        Ok(opts)
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    opts: MockOptions,
}

fn normalize_word(w: &str) -> String {
    w.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

fn strip_trailing_punct(s: &str) -> &str {
    s.trim_end_matches(|c: char| !c.is_alphanumeric())
}

impl MockBackend {
    pub fn new(opts: MockOptions) -> Self {
        Self { opts }
    }

    pub fn options(&self) -> &MockOptions {
        &self.opts
    }

    /// Signed feature hash of the word's character trigrams, with `#` marking
    /// word boundaries. Stopwords and punctuation hash to zero.
    fn word_vector(&self, word: &str, out: &mut [f64]) {
        let w = normalize_word(word);
        if w.is_empty() || STOPWORDS.contains(&w.as_str()) {
            return;
        }
        let marked: Vec<char> = format!("#{w}#").chars().collect();
        for tri in marked.windows(3) {
            let tri: String = tri.iter().collect();
            let h = stable_hash(self.opts.seed, &["trigram", &tri]);
            let slot = (h % self.opts.dim as u64) as usize;
            let sign = if (h >> 63) == 1 { -1.0 } else { 1.0 };
            out[slot] += sign;
        }
    }

    fn token_rows(&self, text: &str) -> Vec<Vec<f64>> {
        WordTokenizer
            .tokenize(text)
            .into_iter()
            .map(|tok| {
                let mut row = vec![0.0; self.opts.dim];
                self.word_vector(tok, &mut row);
                row
            })
            .collect()
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.opts.dim];
        for row in self.token_rows(text) {
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        if acc.iter().all(|&x| x == 0.0) {
            acc[0] = 1.0;
        }
        acc.into_iter().map(|x| x as f32).collect()
    }

    fn is_incompatible(&self, template_id: &str, document_id: &str, chunk_index: usize) -> bool {
        let k = chunk_index.to_string();
        unit_hash(self.opts.seed, &["incompatible", template_id, document_id, &k])
            < self.opts.incompatible_rate
    }

    /// Sentence index the answer for `chunk_index` starts at.
    fn anchor(&self, chunk_index: usize, sentences: usize) -> usize {
        if chunk_index == 0 {
            return 0;
        }
        (chunk_index * sentences / (self.opts.chunks + 1)).min(sentences - 1)
    }

    fn answer_span(&self, text: &str, spans: &[std::ops::Range<usize>], anchor: usize) -> (usize, usize) {
        let want = self.opts.answer_fraction * text.chars().count() as f64;
        let chars = |a: usize, b: usize| text[spans[a].start..spans[b].end].chars().count() as f64;
        let (mut first, mut last) = (anchor, anchor);
        while chars(first, last) < want && last + 1 < spans.len() {
            last += 1;
        }
        while chars(first, last) < want && first > 0 {
            first -= 1;
        }
        (first, last)
    }
}

impl ModelBackend for MockBackend {
    fn genericize(&self, query: &str, _step: usize, previous: Option<&str>) -> Result<String, BackendError> {
        if let Some(prev) = previous {
            return Ok(prev.to_string());
        }
        let first = query.split_whitespace().next().unwrap_or("");
        let reply = serde_json::json!({
            "template": format!("{first} <fi>topic</fi>"),
            "description": MOCK_DESCRIPTION,
        });
        Ok(reply.to_string())
    }

    fn describe(&self, document: &str) -> Result<String, BackendError> {
        Ok(sentence_spans(document)
            .first()
            .map(|r| document[r.clone()].to_string())
            .unwrap_or_default())
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn embed_tokens(&self, texts: &[String]) -> Result<Option<Vec<TokenMatrix>>, BackendError> {
        let mats = texts
            .iter()
            .map(|t| {
                let mut rows = self.token_rows(t);
                if rows.is_empty() {
                    let mut row = vec![0.0; self.opts.dim];
                    row[0] = 1.0;
                    rows.push(row);
                }
                TokenMatrix::from_rows(&rows).map_err(|e| BackendError::Fatal(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Some(mats))
    }

    fn instantiate(
        &self,
        template: &InstructionTemplate,
        document: &SourceDocument,
        chunk_index: usize,
    ) -> Result<String, BackendError> {
        if self.is_incompatible(&template.id, &document.id, chunk_index) {
            return Ok("null".into());
        }
        let text = &document.text;
        let spans = sentence_spans(text);
        if spans.is_empty() {
            return Ok("null".into());
        }
        let anchor = self.anchor(chunk_index, spans.len());
        let fills: Vec<String> = (0..template.complexity())
            .map(|j| {
                let s = &text[spans[(anchor + j) % spans.len()].clone()];
                let words: Vec<&str> = s.split_whitespace().take(5).collect();
                let fill = strip_trailing_punct(&words.join(" ")).to_string();
                if fill.is_empty() { words.join(" ") } else { fill }
            })
            .collect();
        let (first, last) = self.answer_span(text, &spans, anchor);
        let span = &text[spans[first].start..spans[last].end];
        let words: Vec<&str> = span.split_whitespace().collect();
        let answer = if words.len() < 8 {
            encode_excerpt(&words.join(" "), None)
        } else {
            encode_excerpt(&words[..4].join(" "), Some(&words[words.len() - 4..].join(" ")))
        };
        Ok(serde_json::json!({ "fills": fills, "answer": answer }).to_string())
    }

    fn judge(&self, instruction: &str, answer: &str) -> Result<String, BackendError> {
        let answer_words: HashSet<String> = answer.split_whitespace().map(normalize_word).collect();
        let on_topic = instruction
            .split_whitespace()
            .map(normalize_word)
            .any(|w| w.chars().count() >= 4 && answer_words.contains(&w));
        if answer.chars().count() >= self.opts.min_answer_chars && on_topic {
            Ok("5 - answers the instruction from the document".into())
        } else {
            Ok("2 - mostly unrelated to the instruction".into())
        }
    }
}

/// Replays queued replies in order, one per call, whatever the role.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<String, BackendError>>>,
    embeddings: Mutex<VecDeque<Result<Vec<Vec<f32>>, BackendError>>>,
}

impl ScriptedBackend {
    pub fn new<I: IntoIterator<Item = Result<String, BackendError>>>(replies: I) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
            embeddings: Mutex::default(),
        }
    }

    pub fn with_embeddings<I>(self, batches: I) -> Self
    where
        I: IntoIterator<Item = Result<Vec<Vec<f32>>, BackendError>>,
    {
        *self.embeddings.lock().unwrap() = batches.into_iter().collect();
        self
    }

    fn next(&self) -> Result<String, BackendError> {
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::Fatal("script exhausted".into())))
    }
}

impl ModelBackend for ScriptedBackend {
    fn genericize(&self, _q: &str, _step: usize, _prev: Option<&str>) -> Result<String, BackendError> {
        self.next()
    }
    fn describe(&self, _d: &str) -> Result<String, BackendError> {
        self.next()
    }
    fn embed(&self, _t: &[String]) -> Result<Vec<Vec<f32>>, BackendError> {
        self.embeddings
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::Fatal("script exhausted".into())))
    }
    fn instantiate(
        &self,
        _t: &InstructionTemplate,
        _d: &SourceDocument,
        _k: usize,
    ) -> Result<String, BackendError> {
        self.next()
    }
    fn judge(&self, _i: &str, _a: &str) -> Result<String, BackendError> {
        self.next()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_options() {
        let o = MockOptions::from_endpoint("mock:?seed=7&dim=32").unwrap();
        assert_eq!((o.seed, o.dim), (7, 32));
        assert_eq!(MockOptions::from_endpoint("mock:").unwrap(), MockOptions::default());
        assert!(MockOptions::from_endpoint("mock:?bogus=1").is_err());
        assert!(MockOptions::from_endpoint("http://x").is_err());
    }

    #[test]
    fn embedding_is_deterministic_and_topical() {
        let m = MockBackend::default();
        let cos = |a: &[f32], b: &[f32]| {
            let dot: f32 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let n = |v: &[f32]| v.iter().map(|x| x * x).sum::<f32>().sqrt();
            dot / (n(a) * n(b))
        };
        let a = m.embed_one("volcanoes erupt molten lava");
        assert_eq!(a, m.embed_one("volcanoes erupt molten lava"));
        let b = m.embed_one("the volcano erupts lava");
        let c = m.embed_one("quarterly banking regulations");
        assert!(cos(&a, &b) > cos(&a, &c));
        assert_eq!(m.embed_one("the of ,")[0], 1.0);
    }

    #[test]
    fn judge_rule() {
        let m = MockBackend::default();
        let long = "Volcanoes form where magma reaches the surface of the crust.";
        assert!(m.judge("explain volcanoes", long).unwrap().starts_with('5'));
        assert!(m.judge("explain banking", long).unwrap().starts_with('2'));
        assert!(m.judge("explain volcanoes", "Volcanoes.").unwrap().starts_with('2'));
    }
}
