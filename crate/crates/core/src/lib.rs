//! Ontology alignment, subsumption dictionaries and prompt infiltration for
//! retrieval-augmented generation, plus the metrics used to compare answers.
//!
//! The usual flow: [`parse`] two ontologies, [`align`] them, derive a
//! [`subsume::SubsumptionDictionary`], then [`infiltrate`] user prompts before
//! retrieval in [`rag`]. [`eval`] scores the resulting answers.

pub mod align;
pub mod error;
pub mod eval;
pub mod infiltrate;
pub mod model;
pub mod parse;
pub mod rag;
pub mod ragstore;
pub mod subsume;

pub use error::{Error, ProviderError, Result, Stage};
pub use model::{ClassIri, Ontology, OntologyClass};
