//! Command-level orchestration: experiment configuration, artifact
//! manifests with input-hash chaining, and the per-command implementations
//! behind the CLI verbs.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::*;
pub use config::*;
pub use manifest::*;
