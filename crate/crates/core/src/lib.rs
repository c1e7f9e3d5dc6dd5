//! Item-based collaborative filtering over purchase logs.
//!
//! Item-item similarity is the Jaccard ratio of the items' buyer sets,
//! computed exactly or estimated from linear-counting bitvector sketches.
//! Recommendations rank unseen items either by raw similarity to the user's
//! purchases or by similarity weighted with the user's preference for the
//! purchased item.

pub mod cli;
pub mod corpus;
pub mod eval;
pub mod model_file;
pub mod parallel;
pub mod scoring;
pub mod similarity;
pub mod sketch;

pub use corpus::{Corpus, CorpusError, Event, MalformedRows, ProductId, PurchaseMatrix, UserId, UserProfile};
pub use parallel::Execution;
pub use scoring::{
    gamma, recommend_objective, recommend_subjective, rho, subjective_similarity, CandidatePolicy,
    Recommendation, ScoringConfig,
};
pub use similarity::{
    approx_jaccard, build_model, build_model_with, exact_jaccard, merge_similar_items,
    NeighborPolicy, SimilarityMode, SimilarityModel,
};
pub use sketch::{CardinalityEstimate, LinearCountingSketch, SketchError};
