//! Staged generation of instruction-answer training data.
//!
//! Stages run in order: genericize, describe, embed, index, match, sample,
//! instantiate, expand, judge, filter, pack, stats. Each reads the previous
//! stages' files under the work directory, writes its own atomically and
//! records a [`StageReport`] in `manifest.json`. A stage whose fingerprint
//! (its config, the seed, upstream fingerprints and input file hashes) is
//! unchanged is skipped.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod records;
pub mod stage;
pub mod stages;

pub use config::PipelineConfig;
pub use error::PipelineError;
pub use manifest::{Manifest, StageReport};
pub use pipeline::{Pipeline, RunOptions};
pub use stage::Stage;
