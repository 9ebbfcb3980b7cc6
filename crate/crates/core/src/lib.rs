//! Literature exploration over a paper corpus: keyword and embedding search,
//! 2-D projections, retrieval-augmented chat with grounded citations, and
//! summaries, reviews and exports of saved papers.

pub mod analysis;
pub mod bootstrap;
pub mod config;
pub mod corpus;
pub mod embedding;
mod fsutil;
pub mod grounding;
pub mod index;
pub mod library;
pub mod llm;
pub mod parallel;
pub mod projection;
pub mod rag;
pub mod sample;
pub mod saved;
pub mod templates;
pub mod text;

pub use library::{ErrorKind, Library, LibraryError, Space};
