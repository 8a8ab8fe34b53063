//! Sandboxed TikZ compilation and rendering, pluggable model backends, the
//! curation pipeline, a rollout simulator, and the evaluation harness.
//!
//! Pure scoring logic lives in [`tikzgym_core`], which is re-exported as
//! [`core`].

pub use tikzgym_core as core;

pub mod backends;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod dscloop;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod pipeline;
pub mod render;
pub mod sandbox;
pub mod scoring;
pub mod sketch;

pub use config::Config;
pub use error::{Error, Result};
