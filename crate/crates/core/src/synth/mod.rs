//! Rule-based generator of three-tier caption chains and the synthetic
//! scenes they describe.
//!
//! A chain climbs from a bare category ("woman") through one attribute
//! ("middle woman") to one relation phrase ("middle woman with dark hair").
//! Each tier has one hard negative that changes only that tier's component,
//! checked false against the scene by exhaustive predicate evaluation.

mod chain;
mod corpus;
mod query;
mod scene;
pub mod tables;

pub use chain::{negative_chain, positive_chain, NegativeKind, NegativeTier, PositiveChain, TIERS};
pub use corpus::{
    build_chain, check_containment, check_ground_truth, check_locality, corpus_stats, corpus_words, generate_corpus,
    validate_corpus, validate_record, ChainRecord, Corpus, CorpusConfig, CorpusStats, TierRecord,
};
pub use query::{AttributeTerm, Query, RelationPhrase};
pub use scene::{generate_scene, spatial_relations, spatial_word, Scene, SceneConfig, SceneObject};
pub use tables::{AttrClass, Group, SpatialKind};
