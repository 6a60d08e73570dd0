//! File formats, the completion engine, the local service and the
//! evaluation runner around `linecomp-core`.

pub mod config;
pub mod engine;
pub mod evaluate;
pub mod io;
pub mod prep;
pub mod service;
pub mod timeout;

pub use config::EngineConfig;
pub use engine::{CompletionRequest, CompletionResult, Engine, Session};
pub use linecomp_core as core;
