pub mod baseline;
pub mod channel;
pub mod correlation;
pub mod embeddings;
pub mod harness;
pub mod metrics;
pub mod policy;
pub mod protocol;
pub mod reconstruct;
pub mod scalar;
pub mod semantics;

pub use scalar::Real;

pub type EmbeddingTable = embeddings::Embeddings<f64>;
pub type EmbeddingTable32 = embeddings::Embeddings<f32>;
pub type Decision = correlation::RelevanceDecision<f64>;
