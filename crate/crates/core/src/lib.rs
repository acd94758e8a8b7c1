//! Streaming coresets for p-order tensor contraction and ℓp subspace
//! embedding.

pub mod coreset;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod latent;
pub mod lewis;
pub mod linalg;
pub mod linefilter;
pub mod merge_reduce;
pub mod pipeline;
pub mod score;
pub mod synth;

pub use coreset::{Coreset, Sampler, StageSummary, WeightedRow};
pub use error::{CoresetError, Result};
