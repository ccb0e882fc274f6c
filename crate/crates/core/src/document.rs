use serde::{Deserialize, Serialize};

use crate::tokenize::Tokenizer;

/// One line of `documents.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl SourceDocument {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            meta: None,
        }
    }

    pub fn token_count(&self, tokenizer: &dyn Tokenizer) -> usize {
        tokenizer.count_tokens(&self.text)
    }
}

/// Sentences with their byte ranges. A sentence ends at `.`, `!` or `?`
/// followed by whitespace or the end of the text.
pub fn sentence_spans(text: &str) -> Vec<std::ops::Range<usize>> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        let end_mark = matches!(c, '.' | '!' | '?');
        let boundary = chars.peek().is_none_or(|&(_, n)| n.is_whitespace());
        if end_mark && boundary {
            spans.push(start.take().unwrap()..i + c.len_utf8());
        }
    }
    if let Some(s) = start {
        spans.push(s..text.trim_end().len());
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_sentences() {
        let text = "First one. Second? Third has 3.5 numbers!  Tail without end";
        let got: Vec<&str> = sentence_spans(text).into_iter().map(|r| &text[r]).collect();
        assert_eq!(got, ["First one.", "Second?", "Third has 3.5 numbers!", "Tail without end"]);
        assert!(sentence_spans("   ").is_empty());
    }

    #[test]
    fn jsonl_shape() {
        let d: SourceDocument = serde_json::from_str(r#"{"id":"a","text":"b"}"#).unwrap();
        assert_eq!(d, SourceDocument::new("a", "b"));
        assert_eq!(serde_json::to_string(&d).unwrap(), r#"{"id":"a","text":"b"}"#);
    }
}
