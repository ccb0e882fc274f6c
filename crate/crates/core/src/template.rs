//! Genericized instruction templates with `<fi>description</fi>` slots.
//!
//! A template is a user query where entity-specific spans have been replaced
//! by slots. Each slot carries a short description of what may fill it. Tags
//! are the literal ASCII strings `<fi>` and `</fi>`; they never nest, and any
//! other angle-bracket text is ordinary literal text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const OPEN_TAG: &str = "<fi>";
pub const CLOSE_TAG: &str = "</fi>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("unbalanced <fi> tags at byte {offset}: {reason}")]
    UnbalancedTags { offset: usize, reason: &'static str },
    #[error("empty slot description at byte {offset}")]
    EmptySlotDescription { offset: usize },
    #[error("template has {expected} slots but {got} fills were given")]
    ArityMismatch { expected: usize, got: usize },
    #[error("fill for slot {index} is empty")]
    EmptyFill { index: usize },
    #[error("fill for slot {index} contains a <fi> tag")]
    TagInFill { index: usize },
    #[error("declared complexity {declared} does not match {actual} parsed slots")]
    ComplexityMismatch { declared: usize, actual: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub index: usize,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Slot(SlotSpec),
}

/// Parsed form of a template string: alternating literal text and slots.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplateBody {
    segments: Vec<Segment>,
}

/// Splits `raw` into literal segments and slots.
pub fn parse_template(raw: &str) -> Result<TemplateBody, TemplateError> {
    let mut segments = Vec::new();
    let mut slot_index = 0;
    let mut pos = 0;

    while pos < raw.len() {
        let rest = &raw[pos..];
        let next_open = rest.find(OPEN_TAG);
        let next_close = rest.find(CLOSE_TAG);
        let open_at = match (next_open, next_close) {
            (None, None) => {
                segments.push(Segment::Literal(rest.to_string()));
                break;
            }
            (None, Some(c)) => {
                return Err(TemplateError::UnbalancedTags {
                    offset: pos + c,
                    reason: "closing tag without opening tag",
                })
            }
            (Some(o), Some(c)) if c < o => {
                return Err(TemplateError::UnbalancedTags {
                    offset: pos + c,
                    reason: "closing tag without opening tag",
                })
            }
            (Some(o), _) => o,
        };
        if open_at > 0 {
            segments.push(Segment::Literal(rest[..open_at].to_string()));
        }
        let desc_start = pos + open_at + OPEN_TAG.len();
        let inner = &raw[desc_start..];
        let close_rel = inner.find(CLOSE_TAG).ok_or(TemplateError::UnbalancedTags {
            offset: pos + open_at,
            reason: "opening tag is never closed",
        })?;
        if let Some(nested) = inner[..close_rel].find(OPEN_TAG) {
            return Err(TemplateError::UnbalancedTags {
                offset: desc_start + nested,
                reason: "nested opening tag",
            });
        }
        let description = &inner[..close_rel];
        if description.trim().is_empty() {
            return Err(TemplateError::EmptySlotDescription {
                offset: pos + open_at,
            });
        }
        segments.push(Segment::Slot(SlotSpec {
            index: slot_index,
            description: description.to_string(),
        }));
        slot_index += 1;
        pos = desc_start + close_rel + CLOSE_TAG.len();
    }

    Ok(TemplateBody { segments })
}

impl TemplateBody {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn slots(&self) -> impl Iterator<Item = &SlotSpec> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Slot(slot) => Some(slot),
            Segment::Literal(_) => None,
        })
    }

    pub fn literals(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Literal(text) => Some(text.as_str()),
            Segment::Slot(_) => None,
        })
    }

    pub fn complexity(&self) -> usize {
        self.slots().count()
    }

    /// Reassembles the raw template text, tags included.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(slot) => {
                    out.push_str(OPEN_TAG);
                    out.push_str(&slot.description);
                    out.push_str(CLOSE_TAG);
                }
            }
        }
        out
    }

    /// Replaces each slot, in order, with the matching fill.
    pub fn instantiate<S: AsRef<str>>(&self, fills: &[S]) -> Result<String, TemplateError> {
        let expected = self.complexity();
        if fills.len() != expected {
            return Err(TemplateError::ArityMismatch {
                expected,
                got: fills.len(),
            });
        }
        for (index, fill) in fills.iter().enumerate() {
            let fill = fill.as_ref();
            if fill.trim().is_empty() {
                return Err(TemplateError::EmptyFill { index });
            }
            if fill.contains(OPEN_TAG) || fill.contains(CLOSE_TAG) {
                return Err(TemplateError::TagInFill { index });
            }
        }

        let mut out = String::new();
        let mut last_slot = None;
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => out.push_str(text),
                Segment::Slot(slot) => {
                    out.push_str(fills[slot.index].as_ref());
                    last_slot = Some(slot.index);
                }
            }
            // A fill next to a literal "<" or "fi>" can splice a tag back together.
            if let Some(index) = last_slot {
                if out.contains(OPEN_TAG) || out.contains(CLOSE_TAG) {
                    return Err(TemplateError::TagInFill { index });
                }
            }
        }
        Ok(out)
    }
}

/// A genericized query plus the description of documents able to answer it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructionTemplate {
    pub id: String,
    pub source_dataset: String,
    pub template_text: String,
    pub compatible_doc_description: String,
    body: TemplateBody,
}

impl InstructionTemplate {
    pub fn new(
        id: impl Into<String>,
        source_dataset: impl Into<String>,
        template_text: impl Into<String>,
        compatible_doc_description: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let template_text = template_text.into();
        let body = parse_template(&template_text)?;
        Ok(Self {
            id: id.into(),
            source_dataset: source_dataset.into(),
            template_text,
            compatible_doc_description: compatible_doc_description.into(),
            body,
        })
    }

    pub fn body(&self) -> &TemplateBody {
        &self.body
    }

    pub fn slots(&self) -> impl Iterator<Item = &SlotSpec> {
        self.body.slots()
    }

    pub fn complexity(&self) -> usize {
        self.body.complexity()
    }

    pub fn instantiate<S: AsRef<str>>(&self, fills: &[S]) -> Result<String, TemplateError> {
        self.body.instantiate(fills)
    }

    pub fn to_record(&self) -> TemplateRecord {
        TemplateRecord {
            id: self.id.clone(),
            source_dataset: self.source_dataset.clone(),
            template_text: self.template_text.clone(),
            compatible_doc_description: self.compatible_doc_description.clone(),
            complexity: self.complexity(),
        }
    }
}

/// One line of `templates.jsonl`. Slots are not stored; they are recomputed
/// from `template_text` on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub id: String,
    pub source_dataset: String,
    pub template_text: String,
    pub compatible_doc_description: String,
    pub complexity: usize,
}

impl TryFrom<TemplateRecord> for InstructionTemplate {
    type Error = TemplateError;

    fn try_from(rec: TemplateRecord) -> Result<Self, Self::Error> {
        let t = InstructionTemplate::new(
            rec.id,
            rec.source_dataset,
            rec.template_text,
            rec.compatible_doc_description,
        )?;
        if t.complexity() != rec.complexity {
            return Err(TemplateError::ComplexityMismatch {
                declared: rec.complexity,
                actual: t.complexity(),
            });
        }
        Ok(t)
    }
}
