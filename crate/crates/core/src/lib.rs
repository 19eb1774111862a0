//! Evidence retrieval for multi-hop question answering.
//!
//! Each question comes with its own pool of candidate sentences. Base
//! rankers (BM25, STS, IS) score the pool; the ensembles in [`fusion`]
//! combine them, and [`eval`] scores rankings against gold facts.

pub mod config;
pub mod corpus;
pub mod engine;
pub mod entities;
pub mod eval;
pub mod fusion;
pub mod ranking;
pub mod scorer;
pub mod sparse;
pub mod synth;

pub use corpus::{CandidateId, CandidateSentence, Dataset, QuestionRecord, QuestionType};
pub use ranking::{RankedCandidate, Ranking, Strategy};
