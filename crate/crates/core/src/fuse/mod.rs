//! Cross-network embedding fusion.
//!
//! Two user graphs with aligned anchor users are fused in two moves. First,
//! anchor rows of either embedding matrix are enriched with their partner's
//! row through learned cross-network maps; non-anchor rows pass through
//! untouched. Second, each graph propagates the enriched matrix over its
//! normalized adjacency, re-emphasizing anchor rows at every hop, and mixes
//! all hop levels into the fused output. Both graphs train jointly against
//! their own friendship structure plus a regularizer pulling anchor pairs
//! together.

mod adjacency;
mod model;
pub(crate) mod train;

pub use adjacency::{AnchorMask, NormalizedAdjacency};
pub use model::{inter_propagate, Activation, FusionParams, IterativeParams};
pub use train::{total_loss, train_fusion, FusionConfig, FusionMode};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

/// Runs the hop hierarchy over one graph's enriched embeddings, standalone.
/// Uses the first network's mixing weights of `params`.
pub fn hierarchy_propagate(
    adj: &NormalizedAdjacency,
    mask: &AnchorMask,
    enriched: &EmbeddingTable,
    params: &FusionParams,
) -> Result<EmbeddingTable> {
    params.validate()?;
    if enriched.dim() != params.dim() {
        return Err(Error::DimMismatch(format!(
            "embeddings have dimension {}, weights expect {}",
            enriched.dim(),
            params.dim()
        )));
    }
    let cache = model::hierarchy_forward(adj, mask, enriched.vectors(), &params.wu1, params)?;
    EmbeddingTable::new(enriched.ids().to_vec(), cache.out)
}
