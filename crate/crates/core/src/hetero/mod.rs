//! Relational graph encoder over the user/post graph.
//!
//! Users and posts share one feature space (disjoint column ranges), a
//! two-layer message-passing encoder mixes them along friendship and
//! authorship relations, and training minimizes an edge-reconstruction
//! loss over the user embeddings with degree-weighted negative sampling.

mod encoder;
mod features;
mod loss;
mod train;

pub use encoder::{backward, encode, forward, ForwardCache, HeteroEncoderParams, RelLists, RELATIONS};
pub use features::NodeFeatures;
pub use loss::{loss_grad, loss_graph, NegativeSampler};
pub use train::{train_hetero, train_hetero_logged, TrainConfig};
