//! Induction of event, entity, semantic-role, and event-event relation types
//! from decompositional semantic annotations.
//!
//! Documents are graphs of predicate and argument nodes with
//! predicate-argument edges and windowed document edges. Each element carries
//! crowd annotations of simple properties (binary, categorical, ordinal, or
//! temporal 4-tuples) with annotator confidences. A generative model places a
//! latent type on every element, ties types together through prior factors,
//! and explains the annotations with mixed-effects likelihoods that include
//! per-annotator random intercepts.
//!
//! The crate is organised as:
//!
//! - [`corpus`]: graph data model, property schema, file I/O, ridit scoring
//!   of confidences, temporal-tuple normalization.
//! - [`likelihoods`]: annotation likelihood families with analytic gradients.
//! - [`params`]: the full parameter set and its checkpoint format.
//! - [`observe`]: compilation of annotations into discrete weighted outcomes.
//! - [`factorgraph`]: per-document factor graphs, loopy belief propagation,
//!   and an exact enumeration oracle.
//! - [`learning`]: EM with a belief-propagation E-step and an Adam M-step.
//! - [`selection`]: type-count selection with flat mixtures and bootstrap
//!   intervals.
//! - [`agreement`]: Krippendorff's alpha and confidence-threshold curves.
//! - [`synth`]: sampling corpora from the generative story with known labels.
//! - [`analysis`]: type summaries, confusion matrices, entropy, features.

pub mod agreement;
pub mod analysis;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod factorgraph;
pub mod learning;
pub mod likelihoods;
pub mod observe;
pub mod optim;
pub mod params;
pub mod selection;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
