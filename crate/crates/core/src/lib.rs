//! Privacy-preserving integration of heterogeneous social networks.
//!
//! The pipeline has five stages, each consuming the previous stage's files:
//!
//! 1. [`dp`] — sanitize a heterogeneous social graph under a per-type
//!    differential-privacy budget (attributes, friendship edges, post text).
//! 2. [`seqembed`] / [`hetero`] — learn per-network user embeddings from the
//!    sanitized graph with a relation-aware graph encoder.
//! 3. [`align`] — discover cross-network user correspondences without
//!    supervision (adversarially trained linear map + CSLS matching).
//! 4. [`fuse`] — propagate information across and within the two networks
//!    through the predicted anchors, yielding enhanced user embeddings.
//! 5. [`eval`] — measure downstream utility (interest prediction) and privacy
//!    leakage (gender/occupation inference attacks).
//!
//! Numeric kernels are generic over [`Scalar`] (`f32` or `f64`); the pipeline
//! and file formats use the crate-level alias [`Real`].

pub mod align;
pub mod checkpoint;
pub mod diagnostics;
pub mod dp;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fuse;
pub mod graph;
pub mod hetero;
pub(crate) mod linalg;
pub mod pipeline;
pub mod provenance;
pub mod rng;
pub mod scalar;
pub mod seqembed;
pub mod synth;

pub use embedding::EmbeddingTable;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete scalar used by the pipeline, file formats, and CLI.
pub type Real = f64;

/// Dense matrix over the pipeline scalar.
pub type Matrix = ndarray::Array2<Real>;

/// Tool version recorded in provenance headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
