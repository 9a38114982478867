//! Full-batch training of the relational encoder against the
//! edge-reconstruction loss. Each epoch redraws the negative plan, so the
//! objective is stochastic across epochs while every epoch's gradient is
//! exact for its plan.

use serde::{Deserialize, Serialize};
use ndarray::Array2;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::rng::SeedTree;
use crate::scalar::Scalar;
use crate::Real;

use super::encoder::{backward, forward, HeteroEncoderParams, RelLists};
use super::loss::{loss_grad, NegativeSampler};
use super::NodeFeatures;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub out_dim: usize,
    /// Negatives per positive pair.
    pub negatives: usize,
    /// Exponent on degree for the negative distribution.
    pub neg_exponent: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 256,
            out_dim: 128,
            negatives: 5,
            neg_exponent: 0.75,
            learning_rate: 0.01,
            epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidArgument("encoder dims must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.neg_exponent >= 0.0) || !self.neg_exponent.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "negative-sampling exponent must be nonnegative, got {}",
                self.neg_exponent
            )));
        }
        Ok(())
    }
}

/// Loss under a fixed negative plan plus gradients for every weight matrix.
pub(crate) fn loss_and_grads<T: Scalar>(
    params: &HeteroEncoderParams<T>,
    st: &RelLists,
    h0: &Array2<T>,
    pairs: &[(usize, usize)],
    plan: &[Vec<usize>],
) -> Result<(T, HeteroEncoderParams<T>)> {
    let cache = forward(params, st, h0)?;
    let n_users = st.n_users;
    let z = cache.h2.slice(ndarray::s![..n_users, ..]).to_owned();
    let (loss, dz) = loss_grad(&z, pairs, plan)?;
    let mut d_h2 = Array2::zeros(cache.h2.dim());
    for u in 0..n_users {
        d_h2.row_mut(u).assign(&dz.row(u));
    }
    Ok((loss, backward(params, st, h0, &cache, &d_h2)))
}

/// Trained parameters, user embeddings, and the per-epoch loss trace.
pub fn train_hetero_logged(
    g: &HeteroGraph,
    feats: &NodeFeatures,
    cfg: &TrainConfig,
) -> Result<(HeteroEncoderParams, EmbeddingTable, Vec<Real>)> {
    cfg.validate()?;
    if feats.combined_dim() == 0 {
        return Err(Error::InvalidArgument(
            "node features are zero-dimensional; nothing to encode".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = g.friendships().to_vec();
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let mut degrees = vec![0usize; g.n_users()];
    for &(a, b) in &pairs {
        degrees[a] += 1;
        degrees[b] += 1;
    }
    let sampler = NegativeSampler::from_degrees(&degrees, cfg.neg_exponent)?;

    let st = RelLists::build(g);
    let h0 = feats.combined();
    let dims = [feats.combined_dim(), cfg.hidden_dim, cfg.out_dim];
    let tree = SeedTree::new(cfg.seed);
    let mut params = HeteroEncoderParams::init(dims, &mut tree.stream("hetero-init", &[]));

    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut rng = tree.stream("hetero-neg", &[epoch as u64]);
        let plan = sampler.plan(pairs.len(), cfg.negatives, &mut rng);
        let (loss, grads) = loss_and_grads(&params, &st, &h0, &pairs, &plan)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        losses.push(loss);
        for (w, gw) in params.tensors_mut().zip(grads.tensors()) {
            w.scaled_add(-cfg.learning_rate, gw);
        }
        if !params.is_finite() {
            return Err(Error::Diverged { epoch });
        }
    }

    let table = super::encoder::encode(g, feats, &params)?;
    Ok((params, table, losses))
}

/// [`train_hetero_logged`] without the loss trace.
pub fn train_hetero(
    g: &HeteroGraph,
    feats: &NodeFeatures,
    cfg: &TrainConfig,
) -> Result<(HeteroEncoderParams, EmbeddingTable)> {
    let (params, table, _) = train_hetero_logged(g, feats, cfg)?;
    Ok((params, table))
}
