//! Model backends for the generation pipeline.
//!
//! Every model-backed step goes through [`ModelBackend`]; [`roles`] turns raw
//! replies into validated results. Backends are either HTTP chat-completion
//! clients or deterministic mocks, selected by endpoint (`mock:`).

pub mod backend;
pub mod config;
pub mod error;
pub mod http;
pub mod mock;
pub mod prompts;
pub mod protocol;
pub mod resilient;
pub mod roles;

pub use backend::ModelBackend;
pub use config::{build_backend, BackendConfig, ConfigError};
pub use error::{BackendError, RoleError};
pub use mock::{MockBackend, MockOptions, ScriptedBackend};
pub use protocol::{GenericizedQuery, InstantiationResult, InstantiationStatus, JudgeScore};
pub use resilient::{ResilientBackend, RetryPolicy};
