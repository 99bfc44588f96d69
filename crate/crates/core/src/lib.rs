//! Topic-model pipeline for comparing how template-structured national
//! climate plans frame their policies.

pub mod analysis;
pub mod api;
pub mod corpus;
pub mod embedding;
pub mod evaluation;
pub mod interpret;
pub mod json;
pub mod lda;
pub mod pipeline;
pub mod rng;
