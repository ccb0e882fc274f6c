//! Prompt files: a system part and a user part separated by a `---` line,
//! with `{{name}}` placeholders.

use std::path::Path;

use crate::protocol::ChatMessage;

const SEPARATOR: &str = "\n---\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Self {
        match text.split_once(SEPARATOR) {
            Some((system, user)) => Self {
                system: system.trim().to_string(),
                user: user.trim_start_matches('\n').trim_end().to_string(),
            },
            None => Self {
                system: String::new(),
                user: text.trim_end().to_string(),
            },
        }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> Vec<ChatMessage> {
        let mut messages = Vec::with_capacity(2);
        if !self.system.is_empty() {
            messages.push(ChatMessage::system(substitute(&self.system, vars)));
        }
        messages.push(ChatMessage::user(substitute(&self.user, vars)));
        messages
    }
}

/// Single-pass substitution; inserted values are never rescanned.
fn substitute(text: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = &after[..close];
                match vars.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + 2 + close + 2]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

/// Prompts for every chat role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    /// Genericization steps; each later step sees the previous reply as `{{previous}}`.
    pub genericize_chain: Vec<PromptTemplate>,
    pub describe: PromptTemplate,
    pub instantiate: PromptTemplate,
    pub judge: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            genericize_chain: vec![PromptTemplate::parse(include_str!(
                "../prompts/genericize.txt"
            ))],
            describe: PromptTemplate::parse(include_str!("../prompts/describe.txt")),
            instantiate: PromptTemplate::parse(include_str!("../prompts/instantiate.txt")),
            judge: PromptTemplate::parse(include_str!("../prompts/judge.txt")),
        }
    }
}

pub fn default_refine_prompt() -> PromptTemplate {
    PromptTemplate::parse(include_str!("../prompts/genericize_refine.txt"))
}
