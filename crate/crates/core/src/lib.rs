//! Responsivity analysis for multi-party conversation transcripts.

pub mod agreement;
pub mod clusterlab;
pub mod convmetrics;
pub mod corpus;
mod csvio;
pub mod error;
mod fsutil;
pub mod linkspace;
pub mod llmlink;
pub mod mapviz;
pub mod scalar;
pub mod simlink;

pub use error::{Error, Result};

/// Double-precision aliases for the generic kernels.
pub type Embedding = simlink::EmbeddingVector<f64>;
pub type Features = convmetrics::FeatureVector<f64>;
pub type Matrix = clusterlab::FeatureMatrix<f64>;
pub type Assignment = clusterlab::ClusterAssignment<f64>;
pub type Profile = clusterlab::ClusterProfile<f64>;
pub type Agreement = agreement::AgreementMatrix<f64>;
/// Exact rational scalar, for oracle checks.
pub type ExactRatio = num_rational::Ratio<i64>;
