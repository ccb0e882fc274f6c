//! Benchmark decontamination by token n-gram overlap.
//!
//! Templates are compared on their literal text only. Slot spans break the
//! token sequence, so no n-gram crosses a slot.

use std::collections::HashSet;

use crate::template::InstructionTemplate;

pub const DEFAULT_NGRAM: usize = 8;

const SEP: char = '\u{1f}';

/// Lowercased, punctuation-stripped word tokens.
pub fn decontamination_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = String> + '_ {
    tokens.windows(n).map(|w| w.join(&SEP.to_string()))
}

/// N-gram set built from a benchmark corpus.
#[derive(Debug, Clone)]
pub struct Decontaminator {
    n: usize,
    ngrams: HashSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decontaminated {
    pub kept: Vec<InstructionTemplate>,
    pub dropped: usize,
}

impl Decontaminator {
    /// # Panics
    /// If `n` is zero.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "n-gram length must be at least 1");
        Self {
            n,
            ngrams: HashSet::new(),
        }
    }

    pub fn from_corpus<I, S>(n: usize, corpus: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut d = Self::new(n);
        for text in corpus {
            d.add_benchmark_text(text.as_ref());
        }
        d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    pub fn add_benchmark_text(&mut self, text: &str) {
        let tokens = decontamination_tokens(text);
        self.ngrams.extend(ngrams(&tokens, self.n));
    }

    pub fn is_contaminated(&self, template: &InstructionTemplate) -> bool {
        if self.ngrams.is_empty() {
            return false;
        }
        template.body().literals().any(|lit| {
            let tokens = decontamination_tokens(lit);
            let hit = ngrams(&tokens, self.n).any(|g| self.ngrams.contains(&g));
            hit
        })
    }

    pub fn filter<I>(&self, templates: I) -> Decontaminated
    where
        I: IntoIterator<Item = InstructionTemplate>,
    {
        let mut dropped = 0;
        let kept = templates
            .into_iter()
            .filter(|t| {
                let dirty = self.is_contaminated(t);
                dropped += usize::from(dirty);
                !dirty
            })
            .collect();
        Decontaminated { kept, dropped }
    }
}

/// Drops every template sharing at least one `n`-gram with the benchmark corpus.
pub fn decontaminate<I, B, S>(templates: I, benchmark: B, n: usize) -> Decontaminated
where
    I: IntoIterator<Item = InstructionTemplate>,
    B: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    Decontaminator::from_corpus(n, benchmark).filter(templates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tpl(id: &str, text: &str) -> InstructionTemplate {
        InstructionTemplate::new(id, "test", text, "desc").unwrap()
    }

    #[test]
    fn tokens_are_lowercased_and_stripped() {
        assert_eq!(
            decontamination_tokens("What is 2+2?  Hello, World!"),
            ["what", "is", "22", "hello", "world"]
        );
        assert!(decontamination_tokens("?? !!").is_empty());
    }

    #[test]
    fn overlapping_template_is_dropped() {
        let out = decontaminate(vec![tpl("a", "what is 2+2")], ["what is 2+2?"], 3);
        assert!(out.kept.is_empty());
        assert_eq!(out.dropped, 1);
    }

    #[test]
    fn empty_benchmark_keeps_everything() {
        let empty: [&str; 0] = [];
        let out = decontaminate(vec![tpl("a", "what is 2+2")], empty, 1);
        assert_eq!(out.kept.len(), 1);
        assert_eq!(out.dropped, 0);
    }

    #[test]
    fn short_template_is_kept() {
        let out = decontaminate(vec![tpl("a", "what is")], ["what is 2+2?"], 3);
        assert_eq!(out.kept.len(), 1);
    }

    #[test]
    fn ngrams_do_not_cross_slots() {
        let bench = ["explain the theory of everything please"];
        let crossing = tpl("a", "explain the <fi>x</fi> theory of everything");
        let inside = tpl("b", "please explain the theory of <fi>x</fi>");
        let out = decontaminate(vec![crossing, inside], bench, 4);
        assert_eq!(out.dropped, 1);
        assert_eq!(out.kept[0].id, "a");
    }

    #[test]
    fn idempotent() {
        let bench = ["the quick brown fox jumps"];
        let templates = vec![
            tpl("a", "the quick brown <fi>animal</fi>"),
            tpl("b", "a slow brown fox"),
            tpl("c", "why does the quick brown fox jump"),
        ];
        let d = Decontaminator::from_corpus(3, bench);
        let once = d.filter(templates);
        let twice = d.filter(once.kept.clone());
        assert_eq!(twice.kept, once.kept);
        assert_eq!(twice.dropped, 0);
    }
}
