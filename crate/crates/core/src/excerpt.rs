//! Copy-span notation for generated answers.
//!
//! A model writes `<excerpt>prefix<...>suffix</excerpt>` instead of copying a
//! long document span token by token. Expansion finds the span that starts
//! with `prefix` and ends with `suffix` and splices in the document text.
//!
//! Matching runs on a normalized view of both sides (NFC, whitespace runs
//! collapsed to one space) and maps matches back to byte offsets in the
//! original document. Boundaries of 8 characters or more match
//! case-insensitively, and when they close the span they may also drop
//! trailing `.,;:!?` on a retry. Shorter boundaries match exactly.

use std::ops::Range;

use thiserror::Error;
use unicode_normalization::char::canonical_combining_class;
use unicode_normalization::UnicodeNormalization;

pub const EXCERPT_OPEN: &str = "<excerpt>";
pub const EXCERPT_CLOSE: &str = "</excerpt>";
pub const ELLIPSIS: &str = "<...>";

pub const DEFAULT_MIN_EXCERPT_RATIO: f64 = 0.80;

/// Boundaries shorter than this (in characters) are matched strictly.
pub const MIN_LENIENT_BOUNDARY: usize = 8;

const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExcerptError {
    #[error("unbalanced excerpt tags at byte {offset}")]
    UnbalancedExcerptTags { offset: usize },
    #[error("more than one <...> inside the excerpt block at byte {offset}")]
    MultipleEllipses { offset: usize },
    #[error("excerpt block at byte {offset} has an empty prefix or suffix")]
    EmptyBoundary { offset: usize },
    #[error("cannot expand excerpts against an empty document")]
    EmptyDocument,
    #[error("excerpt prefix not found in document: {prefix:?}")]
    PrefixNotFound { prefix: String },
    #[error("excerpt suffix not found after prefix: {suffix:?}")]
    SuffixNotFound { suffix: String },
}

impl ExcerptError {
    /// Short machine-readable name, for dead-letter records.
    pub fn reason(&self) -> &'static str {
        match self {
            Self::UnbalancedExcerptTags { .. } => "unbalanced_excerpt_tags",
            Self::MultipleEllipses { .. } => "multiple_ellipses",
            Self::EmptyBoundary { .. } => "empty_boundary",
            Self::EmptyDocument => "empty_document",
            Self::PrefixNotFound { .. } => "prefix_not_found",
            Self::SuffixNotFound { .. } => "suffix_not_found",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExcerptDirective {
    pub prefix: String,
    /// `None` for a verbatim block without `<...>`.
    pub suffix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MarkupPiece {
    Generated(String),
    Excerpt(ExcerptDirective),
}

/// Builds markup for a single excerpt directive.
pub fn encode_excerpt(prefix: &str, suffix: Option<&str>) -> String {
    match suffix {
        Some(s) => format!("{EXCERPT_OPEN}{prefix}{ELLIPSIS}{s}{EXCERPT_CLOSE}"),
        None => format!("{EXCERPT_OPEN}{prefix}{EXCERPT_CLOSE}"),
    }
}

pub fn parse_excerpt_markup(raw: &str) -> Result<Vec<MarkupPiece>, ExcerptError> {
    let mut pieces = Vec::new();
    let mut pos = 0;
    while pos < raw.len() {
        let rest = &raw[pos..];
        let open = rest.find(EXCERPT_OPEN);
        let close = rest.find(EXCERPT_CLOSE);
        let open_at = match (open, close) {
            (None, None) => {
                pieces.push(MarkupPiece::Generated(rest.to_string()));
                break;
            }
            (None, Some(c)) => {
                return Err(ExcerptError::UnbalancedExcerptTags { offset: pos + c })
            }
            (Some(o), Some(c)) if c < o => {
                return Err(ExcerptError::UnbalancedExcerptTags { offset: pos + c })
            }
            (Some(o), _) => o,
        };
        if open_at > 0 {
            pieces.push(MarkupPiece::Generated(rest[..open_at].to_string()));
        }
        let block_at = pos + open_at;
        let inner_start = block_at + EXCERPT_OPEN.len();
        let inner_rest = &raw[inner_start..];
        let close_rel = inner_rest
            .find(EXCERPT_CLOSE)
            .ok_or(ExcerptError::UnbalancedExcerptTags { offset: block_at })?;
        let inner = &inner_rest[..close_rel];
        if let Some(nested) = inner.find(EXCERPT_OPEN) {
            return Err(ExcerptError::UnbalancedExcerptTags {
                offset: inner_start + nested,
            });
        }
        let parts: Vec<&str> = inner.split(ELLIPSIS).collect();
        let directive = match parts.as_slice() {
            [verbatim] => ExcerptDirective {
                prefix: verbatim.to_string(),
                suffix: None,
            },
            [prefix, suffix] => ExcerptDirective {
                prefix: prefix.to_string(),
                suffix: Some(suffix.to_string()),
            },
            _ => return Err(ExcerptError::MultipleEllipses { offset: block_at }),
        };
        let empty = |s: &str| s.trim().is_empty();
        if empty(&directive.prefix) || directive.suffix.as_deref().is_some_and(empty) {
            return Err(ExcerptError::EmptyBoundary { offset: block_at });
        }
        pieces.push(MarkupPiece::Excerpt(directive));
        pos = inner_start + close_rel + EXCERPT_CLOSE.len();
    }
    Ok(pieces)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Generated,
    Excerpt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSegment {
    pub kind: SegmentKind,
    pub text: String,
    /// Byte range into the source document; set for excerpts only.
    pub span: Option<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedAnswer {
    segments: Vec<AnswerSegment>,
    answer_text: String,
    excerpt_chars: usize,
    total_chars: usize,
}

impl Default for ExpandedAnswer {
    fn default() -> Self {
        Self::new()
    }
}

impl ExpandedAnswer {
    pub fn new() -> Self {
        Self {
            segments: Vec::new(),
            answer_text: String::new(),
            excerpt_chars: 0,
            total_chars: 0,
        }
    }

    pub fn push(&mut self, segment: AnswerSegment) {
        let n = segment.text.chars().count();
        self.total_chars += n;
        if segment.kind == SegmentKind::Excerpt {
            self.excerpt_chars += n;
        }
        self.answer_text.push_str(&segment.text);
        self.segments.push(segment);
    }

    pub fn push_generated(&mut self, text: impl Into<String>) {
        self.push(AnswerSegment {
            kind: SegmentKind::Generated,
            text: text.into(),
            span: None,
        });
    }

    pub fn segments(&self) -> &[AnswerSegment] {
        &self.segments
    }

    pub fn answer_text(&self) -> &str {
        &self.answer_text
    }

    pub fn into_answer_text(self) -> String {
        self.answer_text
    }

    /// Excerpted characters over answer characters; 0 for an empty answer.
    pub fn excerpt_ratio(&self) -> f64 {
        if self.total_chars == 0 {
            0.0
        } else {
            self.excerpt_chars as f64 / self.total_chars as f64
        }
    }

    pub fn excerpt_spans(&self) -> impl Iterator<Item = &Range<usize>> {
        self.segments.iter().filter_map(|s| s.span.as_ref())
    }

    /// Relative start position, in characters, of the earliest excerpt span.
    pub fn excerpt_position(&self, document: &str) -> Option<f64> {
        let start = self.excerpt_spans().map(|r| r.start).min()?;
        let total = document.chars().count();
        if total == 0 {
            return None;
        }
        Some(document[..start].chars().count() as f64 / total as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RatioCheck {
    Pass,
    Fail { ratio: f64 },
}

impl RatioCheck {
    pub fn passed(self) -> bool {
        matches!(self, RatioCheck::Pass)
    }
}

/// Inclusive at the boundary: a ratio equal to `min_ratio` passes.
pub fn check_excerpt_ratio(answer: &ExpandedAnswer, min_ratio: f64) -> RatioCheck {
    let ratio = answer.excerpt_ratio();
    if ratio >= min_ratio {
        RatioCheck::Pass
    } else {
        RatioCheck::Fail { ratio }
    }
}

/// Normalized characters, each tagged with the original byte range it came from.
struct NormalizedText {
    chars: Vec<char>,
    origin: Vec<Range<usize>>,
}

impl NormalizedText {
    fn new(text: &str) -> Self {
        let mut chars = Vec::with_capacity(text.len());
        let mut origin = Vec::with_capacity(text.len());
        let mut iter = text.char_indices().peekable();
        while let Some((start, c)) = iter.next() {
            if c.is_whitespace() {
                let mut end = start + c.len_utf8();
                while let Some(&(i, w)) = iter.peek() {
                    if !w.is_whitespace() {
                        break;
                    }
                    end = i + w.len_utf8();
                    iter.next();
                }
                chars.push(' ');
                origin.push(start..end);
                continue;
            }
            // A starter plus its trailing combining marks normalizes as a unit.
            let mut end = start + c.len_utf8();
            while let Some(&(i, m)) = iter.peek() {
                if canonical_combining_class(m) == 0 {
                    break;
                }
                end = i + m.len_utf8();
                iter.next();
            }
            for n in text[start..end].nfc() {
                chars.push(n);
                origin.push(start..end);
            }
        }
        Self { chars, origin }
    }

    /// Normalized boundary text with surrounding whitespace removed.
    fn pattern(text: &str) -> Vec<char> {
        let mut chars = Self::new(text).chars;
        while chars.last() == Some(&' ') {
            chars.pop();
        }
        let lead = chars.iter().take_while(|&&c| c == ' ').count();
        chars.drain(..lead);
        chars
    }

    fn byte_range(&self, range: Range<usize>) -> Range<usize> {
        self.origin[range.start].start..self.origin[range.end - 1].end
    }
}

fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

#[derive(Clone)]
struct Boundary {
    chars: Vec<char>,
    lenient: bool,
}

impl Boundary {
    fn new(text: &str) -> Self {
        let chars = NormalizedText::pattern(text);
        let lenient = chars.len() >= MIN_LENIENT_BOUNDARY;
        Self { chars, lenient }
    }

    /// The boundary itself, then (if lenient) a copy without trailing punctuation.
    fn variants(&self) -> Vec<Boundary> {
        let mut out = vec![self.clone()];
        if self.lenient {
            let mut stripped = self.chars.clone();
            while stripped.last().is_some_and(|c| TRAILING_PUNCT.contains(c)) {
                stripped.pop();
            }
            if !stripped.is_empty() && stripped.len() != self.chars.len() {
                out.push(Boundary {
                    chars: stripped,
                    lenient: true,
                });
            }
        }
        out
    }

    fn find(&self, hay: &[char], from: usize) -> Option<usize> {
        let n = self.chars.len();
        if n == 0 || hay.len() < n {
            return None;
        }
        (from..=hay.len() - n).find(|&i| {
            let window = &hay[i..i + n];
            if self.lenient {
                window
                    .iter()
                    .zip(&self.chars)
                    .all(|(&a, &b)| a == b || fold(a) == fold(b))
            } else {
                window == self.chars.as_slice()
            }
        })
    }
}

enum Resolve {
    Found(Range<usize>),
    NoPrefix,
    NoSuffix,
}

fn resolve_from(
    hay: &[char],
    prefix: &Boundary,
    suffix: Option<&Boundary>,
    from: usize,
) -> Resolve {
    let mut saw_prefix = false;
    let prefix_variants = match suffix {
        Some(_) => vec![prefix.clone()],
        None => prefix.variants(),
    };
    for pv in &prefix_variants {
        let plen = pv.chars.len();
        let mut at = pv.find(hay, from);
        while let Some(ps) = at {
            saw_prefix = true;
            let pe = ps + plen;
            let Some(sfx) = suffix else {
                return Resolve::Found(ps..pe);
            };
            for sv in sfx.variants() {
                let slen = sv.chars.len();
                let earliest = ps.max(pe.saturating_sub(slen));
                if let Some(ss) = sv.find(hay, earliest) {
                    return Resolve::Found(ps..ss + slen);
                }
            }
            at = pv.find(hay, ps + 1);
        }
    }
    if saw_prefix {
        Resolve::NoSuffix
    } else {
        Resolve::NoPrefix
    }
}

/// Resolves every directive against `document` and splices in the copied text.
///
/// Directives resolve left to right. Each one searches from the end of the
/// previous span first and falls back to the whole document.
pub fn expand_excerpts(
    pieces: &[MarkupPiece],
    document: &str,
) -> Result<ExpandedAnswer, ExcerptError> {
    if document.is_empty() {
        return Err(ExcerptError::EmptyDocument);
    }
    let norm = NormalizedText::new(document);
    let mut cursor = 0;
    let mut answer = ExpandedAnswer::new();

    for piece in pieces {
        let directive = match piece {
            MarkupPiece::Generated(text) => {
                if !text.is_empty() {
                    answer.push_generated(text.clone());
                }
                continue;
            }
            MarkupPiece::Excerpt(d) => d,
        };
        let prefix = Boundary::new(&directive.prefix);
        let suffix = directive.suffix.as_deref().map(Boundary::new);

        let mut outcome = resolve_from(&norm.chars, &prefix, suffix.as_ref(), cursor);
        if cursor > 0 && !matches!(outcome, Resolve::Found(_)) {
            outcome = resolve_from(&norm.chars, &prefix, suffix.as_ref(), 0);
        }
        let range = match outcome {
            Resolve::Found(r) => r,
            Resolve::NoPrefix => {
                return Err(ExcerptError::PrefixNotFound {
                    prefix: directive.prefix.clone(),
                })
            }
            Resolve::NoSuffix => {
                return Err(ExcerptError::SuffixNotFound {
                    suffix: directive.suffix.clone().unwrap_or_default(),
                })
            }
        };
        cursor = range.end;
        let bytes = norm.byte_range(range);
        answer.push(AnswerSegment {
            kind: SegmentKind::Excerpt,
            text: document[bytes.clone()].to_string(),
            span: Some(bytes),
        });
    }
    Ok(answer)
}

/// Parses and expands in one step.
pub fn expand_markup(raw: &str, document: &str) -> Result<ExpandedAnswer, ExcerptError> {
    expand_excerpts(&parse_excerpt_markup(raw)?, document)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RELATIVITY: &str =
        "It is known that no preferred inertial frame exists according to the principle of relativity.";

    fn directive(prefix: &str, suffix: Option<&str>) -> MarkupPiece {
        MarkupPiece::Excerpt(ExcerptDirective {
            prefix: prefix.into(),
            suffix: suffix.map(Into::into),
        })
    }

    #[test]
    fn parses_relativity_markup() {
        let pieces = parse_excerpt_markup(
            "<excerpt>It is known that<...>the principle of relativity.</excerpt>",
        )
        .unwrap();
        assert_eq!(
            pieces,
            [directive("It is known that", Some("the principle of relativity."))]
        );
    }

    #[test]
    fn parses_plain_and_verbatim() {
        assert_eq!(
            parse_excerpt_markup("no tags at all").unwrap(),
            [MarkupPiece::Generated("no tags at all".into())]
        );
        assert_eq!(
            parse_excerpt_markup("<excerpt>verbatim copy</excerpt>").unwrap(),
            [directive("verbatim copy", None)]
        );
        assert_eq!(
            parse_excerpt_markup("Sure. <excerpt>a b c d<...>e f g h</excerpt> Done").unwrap(),
            [
                MarkupPiece::Generated("Sure. ".into()),
                directive("a b c d", Some("e f g h")),
                MarkupPiece::Generated(" Done".into()),
            ]
        );
    }

    #[test]
    fn markup_errors() {
        use ExcerptError::*;
        assert!(matches!(
            parse_excerpt_markup("<excerpt>open"),
            Err(UnbalancedExcerptTags { .. })
        ));
        assert!(matches!(
            parse_excerpt_markup("x</excerpt>"),
            Err(UnbalancedExcerptTags { .. })
        ));
        assert!(matches!(
            parse_excerpt_markup("<excerpt>a<excerpt>b</excerpt></excerpt>"),
            Err(UnbalancedExcerptTags { .. })
        ));
        assert!(matches!(
            parse_excerpt_markup("<excerpt>a<...>b<...>c</excerpt>"),
            Err(MultipleEllipses { .. })
        ));
        assert!(matches!(
            parse_excerpt_markup("<excerpt><...>b</excerpt>"),
            Err(EmptyBoundary { .. })
        ));
    }

    #[test]
    fn ellipsis_outside_block_is_literal() {
        assert_eq!(
            parse_excerpt_markup("wait <...> what").unwrap(),
            [MarkupPiece::Generated("wait <...> what".into())]
        );
    }

    #[test]
    fn expands_relativity_example() {
        let doc = format!("Some preamble. {RELATIVITY} Further text follows here.");
        let pieces = [directive("It is known that", Some("the principle of relativity."))];
        let a = expand_excerpts(&pieces, &doc).unwrap();
        assert_eq!(a.answer_text(), RELATIVITY);
        let spans: Vec<_> = a.excerpt_spans().cloned().collect();
        assert_eq!(spans.len(), 1);
        assert_eq!(&doc[spans[0].clone()], RELATIVITY);
        assert_eq!(a.excerpt_ratio(), 1.0);
    }

    #[test]
    fn suffix_punctuation_fallback() {
        let doc = "It is known that no preferred inertial frame exists according to the principle of relativity";
        let pieces = [directive("It is known that", Some("the principle of relativity."))];
        let a = expand_excerpts(&pieces, doc).unwrap();
        assert_eq!(a.answer_text(), doc);
    }

    #[test]
    fn whole_document_excerpt() {
        let doc = "The whole thing.";
        let a = expand_excerpts(&[directive(doc, None)], doc).unwrap();
        assert_eq!(a.excerpt_spans().next(), Some(&(0..doc.len())));
        assert_eq!(a.excerpt_ratio(), 1.0);
    }

    #[test]
    fn missing_prefix_and_suffix() {
        let err = expand_excerpts(&[directive("zzz-not-present", None)], RELATIVITY).unwrap_err();
        assert_eq!(
            err,
            ExcerptError::PrefixNotFound {
                prefix: "zzz-not-present".into()
            }
        );
        let err = expand_excerpts(&[directive("It is known", Some("quantum gravity"))], RELATIVITY)
            .unwrap_err();
        assert!(matches!(err, ExcerptError::SuffixNotFound { .. }));
        assert_eq!(
            expand_excerpts(&[directive("x", None)], ""),
            Err(ExcerptError::EmptyDocument)
        );
    }

    #[test]
    fn whitespace_and_case_are_normalized() {
        let doc = "Alpha  beta\n\tgamma DELTA epsilon zeta.";
        let a = expand_markup("<excerpt>alpha beta gamma<...>delta epsilon</excerpt>", doc).unwrap();
        assert_eq!(a.answer_text(), "Alpha  beta\n\tgamma DELTA epsilon");
    }

    #[test]
    fn short_boundaries_are_case_sensitive() {
        let doc = "Cat sat. cat ran far away.";
        let a = expand_markup("<excerpt>cat<...>away</excerpt>", doc).unwrap();
        assert_eq!(a.answer_text(), "cat ran far away");
        assert!(matches!(
            expand_markup("<excerpt>CAT<...>away</excerpt>", doc),
            Err(ExcerptError::PrefixNotFound { .. })
        ));
        // No punctuation fallback below the lenient length.
        assert!(matches!(
            expand_markup("<excerpt>ran far<...>away!</excerpt>", doc),
            Err(ExcerptError::SuffixNotFound { .. })
        ));
    }

    #[test]
    fn nfc_matches_decomposed_document() {
        let doc = "Le cafe\u{301} est ouvert le matin seulement.";
        let a = expand_markup("<excerpt>Le caf\u{e9} est<...>matin seulement.</excerpt>", doc)
            .unwrap();
        assert_eq!(a.answer_text(), doc);
    }

    #[test]
    fn shortest_span_and_cursor() {
        let doc = "one two three end. one two three end. four five six end.";
        let a = expand_markup(
            "<excerpt>one two three<...>end.</excerpt> and <excerpt>one two three<...>end.</excerpt>",
            doc,
        )
        .unwrap();
        let spans: Vec<_> = a.excerpt_spans().cloned().collect();
        assert_eq!(spans, [0..18, 19..37]);
    }

    #[test]
    fn cursor_falls_back_to_whole_document() {
        let doc = "first part here. second part here.";
        let a = expand_markup(
            "<excerpt>second part here.</excerpt><excerpt>first part here.</excerpt>",
            doc,
        )
        .unwrap();
        let spans: Vec<_> = a.excerpt_spans().cloned().collect();
        assert_eq!(spans, [17..34, 0..16]);
    }

    #[test]
    fn overlapping_prefix_and_suffix() {
        let doc = "x alpha beta gamma delta y";
        let a = expand_markup("<excerpt>alpha beta gamma<...>beta gamma delta</excerpt>", doc)
            .unwrap();
        assert_eq!(a.answer_text(), "alpha beta gamma delta");
    }

    #[test]
    fn ratio_boundary_is_inclusive() {
        let mut a = ExpandedAnswer::new();
        a.push_generated("g".repeat(20));
        a.push(AnswerSegment {
            kind: SegmentKind::Excerpt,
            text: "e".repeat(80),
            span: Some(0..80),
        });
        assert_eq!(a.excerpt_ratio(), 0.8);
        assert_eq!(check_excerpt_ratio(&a, 0.80), RatioCheck::Pass);
        assert!(!check_excerpt_ratio(&a, 0.81).passed());
    }

    #[test]
    fn ratio_extremes() {
        let mut generated = ExpandedAnswer::new();
        generated.push_generated("all model text");
        assert_eq!(
            check_excerpt_ratio(&generated, 0.8),
            RatioCheck::Fail { ratio: 0.0 }
        );
        let full = expand_markup("<excerpt>whole doc text</excerpt>", "whole doc text").unwrap();
        assert_eq!(check_excerpt_ratio(&full, 0.8), RatioCheck::Pass);
        assert_eq!(full.excerpt_ratio(), 1.0);
        assert_eq!(ExpandedAnswer::new().excerpt_ratio(), 0.0);
    }

    #[test]
    fn excerpt_position_uses_earliest_span() {
        let doc = "0123456789";
        let a = expand_markup("<excerpt>56789</excerpt><excerpt>234</excerpt>", doc).unwrap();
        assert_eq!(a.excerpt_position(doc), Some(0.2));
    }
}
