//! Document graphs, the property schema, and annotation ingestion.

mod graph;
mod io;
mod ridit;
mod schema;
mod temporal;

pub use graph::{
    AnnotationRecord, ArgumentNode, DocumentEdge, DocumentGraph, NodeLocation, PredicateNode,
    Response, SemanticsEdge, Sentence, EVENTIVE_SUPERSENSES,
};
pub use io::{corpus_to_string, load_corpus, parse_corpus, save_corpus, write_corpus};
pub use ridit::{confidence_histograms, ridit_score_corpus, ConfidenceHistogram};
pub use schema::{
    Classification, ElementKind, Gate, PropertySpec, ResponseType, Schema, DURATION_LEVELS,
};
pub use temporal::{
    has_free_pair, normalize_temporal, FreeOrder, Lock, TemporalTuple, LOCK_TOLERANCE,
};
