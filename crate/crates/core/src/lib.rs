//! Symbolic tabletop exploration: world model, prompt codec, action
//! selection policies, session runner and height metrics.
//!
//! Everything here is deterministic and allocation-only (`no_std` + `alloc`).
//! Network transport, files and the command line live in the `tabletop`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod describe;
pub mod hash;
pub mod metrics;
pub mod policy;
pub mod select;
pub mod session;
pub mod world;

pub use describe::{ActionMenu, HistoryEntry, MenuSize, PromptTemplate};
pub use hash::StateHash;
pub use policy::{Decision, DecisionSource, Policy, PolicyError};
pub use select::{parse_selection, ParseError, Selection};
pub use session::{ExperimentConfig, StepRecord, Transcript};
pub use world::{Action, Cell, Effect, ObjectId, ObjectKind, Position, PositionSet, WorldState};
