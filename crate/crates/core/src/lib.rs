//! Knowledge-graph fact contextualization.
//!
//! Given a query fact, enumerate the facts in its two-hop neighbourhood and
//! rank them by contextual relevance with a neural ranker trained on labels
//! gathered by distant supervision over an entity-tagged corpus.

pub mod enumerate;
pub mod error;
pub mod eval;
pub mod fact;
pub mod features;
pub mod kg;
pub mod pipeline;
pub mod ranker;
pub mod rng;
pub mod supervision;
pub mod synth;
pub mod toy;

pub use error::{Error, Result};
pub use fact::{Fact, Path, PathStep, Relationship};
pub use kg::{load_graph, EntityId, EntityKind, GraphBuilder, KnowledgeGraph, PredicateId, Triple, TypeId};
