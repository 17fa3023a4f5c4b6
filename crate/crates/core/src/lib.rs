//! Tooling for studying how reasoning models solve coding tasks.
//!
//! The crate covers the full loop:
//!
//! 1. [`forge`] — a typed registry of base coding problems and a composition
//!    engine that chains them into harder multi-stage tasks with inherited
//!    execution oracles.
//! 2. [`gateway`] — a chat-completion client with byte-exact record/replay
//!    fixtures so everything downstream runs offline.
//! 3. [`segment`] — rule-based decomposition of a reasoning trace into
//!    ordered atomic thought segments.
//! 4. [`tree`] — semantic labeling of segments and incremental construction
//!    of a rooted thought-tree, with validation, repair, and a deterministic
//!    keyword fallback.
//! 5. [`features`] — a fixed 54-value feature schema over tree structure,
//!    raw-trace statistics, and label distributions.
//! 6. [`forest`] — a from-scratch random-forest classifier with depth
//!    tuning, feature importance, partial dependence, and ablation
//!    protocols.
//! 7. [`intervene`] — z-score flagging of structurally anomalous traces and
//!    a guided one-shot retry loop.
//! 8. [`harness`] — execution-based correctness judges, the artifact store,
//!    and the end-to-end pipeline driver.
//!
//! Everything is deterministic given the seeds recorded in a run manifest;
//! replaying a manifest against the same fixture store reproduces every
//! artifact byte for byte.

pub mod features;
pub mod forest;
pub mod forge;
pub mod gateway;
pub mod harness;
pub mod intervene;
pub mod segment;
pub mod tree;

mod hashing;

pub use features::{FeatureSchema, FeatureVector};
pub use forest::{ForestModel, Metrics, TrainConfig};
pub use forge::{BaseProblem, ComposedProblem, Family, OracleSpec, TypeSig};
pub use gateway::{Completion, FixtureStore, ModelEndpoint};
pub use harness::{TraceRecord, Verdict};
pub use intervene::{FeatureStats, InterventionResult, WatchSpec};
pub use segment::{Segment, Sentence};
pub use tree::{Relation, SemanticLabel, ThoughtNode, ThoughtTree};
