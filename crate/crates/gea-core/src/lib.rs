//! Group-evolving agents: an archive-based, open-ended evolution framework.
//!
//! Each iteration selects a parent group by a performance-novelty criterion
//! (cosine-distance KNN novelty over binary task-success vectors), shares the
//! group's evolutionary traces with every member, and evolves each member
//! through a reflect/evolve/act pipeline into an offspring group. A
//! tree-structured single-parent baseline, a deterministic simulated coding
//! environment, staged evaluation pipelines, and an analysis/robustness suite
//! round out the experiment harness.
//!
//! Entry points:
//! - [`engine::run`] executes one evolution run into a replayable transcript;
//! - [`experiment::run_compare`] runs matched group/tree seed pairs;
//! - [`experiment::run_robustness`] measures bug-repair speed;
//! - the `gea` binary wraps these as `run`, `compare`, `robustness`,
//!   `analyze`, and `replay` subcommands.

pub mod analysis;
pub mod archive;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod operators;
pub mod persist;
pub mod remote;
pub mod seeding;
pub mod selection;
pub mod simenv;
pub mod traces;

#[cfg(test)]
pub(crate) mod testutil;

pub use archive::{AgentId, AgentRecord, Archive, Patch, TaskSuccessVector, ToolTag};
pub use engine::{RunConfig, RunTranscript};
pub use error::{GeaError, Result};
pub use selection::{ParentGroup, SelectionConfig};
pub use simenv::SimWorld;
