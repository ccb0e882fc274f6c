//! Deterministic stages for turning documents into instruction-answer
//! training records: template parsing and decontamination, excerpt
//! expansion, Gaussian chunk pooling, exact cosine retrieval,
//! complexity-matched sampling, token budgeting and dataset statistics.

pub mod analytics;
pub mod decontaminate;
pub mod document;
pub mod embfile;
pub mod excerpt;
pub mod index;
pub mod packer;
pub mod pooling;
pub mod sampler;
pub mod seed;
pub mod template;
pub mod tokenize;

pub use document::SourceDocument;
pub use excerpt::{expand_excerpts, parse_excerpt_markup, ExpandedAnswer};
pub use index::{CandidateMatch, EmbeddingStore, MatchConfig};
pub use packer::{TokenBudgetState, TrainingRecord};
pub use pooling::{pool, PooledEmbeddingSet, PoolingConfig, TokenMatrix};
pub use sampler::{ComplexityDistribution, SamplerConfig};
pub use template::{parse_template, InstructionTemplate, TemplateError};
pub use tokenize::{Tokenizer, WordTokenizer};
