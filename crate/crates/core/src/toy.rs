//! The small Gates/Microsoft graph used throughout the tests and docs.

use crate::kg::{parse_graph_str, KnowledgeGraph};

pub const TOY_TRIPLES: &str = include_str!("../fixtures/toy/triples.tsv");
pub const TOY_ENTITIES: &str = include_str!("../fixtures/toy/entities.tsv");

pub fn toy_kg() -> KnowledgeGraph {
    parse_graph_str(TOY_TRIPLES, TOY_ENTITIES).expect("toy fixture parses")
}
