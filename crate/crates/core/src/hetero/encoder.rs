//! Two-layer relational encoder.
//!
//! Layer update per node i:
//!   h_i' = act( sum_r (1/|N_i^r|) sum_{j in N_i^r} h_j W_r  +  h_i W_0 )
//! over the relations friendship (user-user), write (a user's posts feeding
//! the user) and written-by (the author feeding the post). The first layer
//! applies ReLU, the second is linear. Weights are stored input-dim x
//! output-dim so rows stay rows.

use ndarray::Array2;
use rand::Rng;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::scalar::{c, Scalar};
use crate::Real;

use super::NodeFeatures;

pub const RELATIONS: [&str; 3] = ["friendship", "write", "written-by"];

/// Weights for both layers: one matrix per relation plus a self weight.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroEncoderParams<T: Scalar = Real> {
    /// Indexed `[layer][relation]`, relation order as in [`RELATIONS`].
    pub w_rel: [[Array2<T>; 3]; 2],
    /// Self weight per layer.
    pub w_self: [Array2<T>; 2],
}

impl<T: Scalar> HeteroEncoderParams<T> {
    pub fn zeros(dims: [usize; 3]) -> Self {
        let layer = |i: usize, o: usize| {
            [
                Array2::zeros((i, o)),
                Array2::zeros((i, o)),
                Array2::zeros((i, o)),
            ]
        };
        HeteroEncoderParams {
            w_rel: [layer(dims[0], dims[1]), layer(dims[1], dims[2])],
            w_self: [
                Array2::zeros((dims[0], dims[1])),
                Array2::zeros((dims[1], dims[2])),
            ],
        }
    }

    /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per matrix.
    pub fn init(dims: [usize; 3], rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(dims);
        for w in p.tensors_mut() {
            let bound = 1.0 / (w.nrows() as f64).sqrt();
            for v in w.iter_mut() {
                *v = c::<T>(rng.gen_range(-bound..=bound));
            }
        }
        p
    }

    /// [input, hidden, output] widths.
    pub fn dims(&self) -> [usize; 3] {
        [
            self.w_self[0].nrows(),
            self.w_self[0].ncols(),
            self.w_self[1].ncols(),
        ]
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Array2<T>> {
        self.w_rel
            .iter()
            .flatten()
            .chain(self.w_self.iter())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Array2<T>> {
        self.w_rel
            .iter_mut()
            .flatten()
            .chain(self.w_self.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|w| w.iter().all(|v| v.is_finite()))
    }
}

/// Neighbor lists per relation over combined node indices
/// (users 0..n_users, then posts).
#[derive(Debug, Clone)]
pub struct RelLists {
    pub n_users: usize,
    pub nodes: usize,
    lists: [Vec<Vec<usize>>; 3],
}

impl RelLists {
    pub fn build(g: &HeteroGraph) -> RelLists {
        let nu = g.n_users();
        let nodes = nu + g.n_posts();
        let mut lists = [vec![Vec::new(); nodes], vec![Vec::new(); nodes], vec![Vec::new(); nodes]];
        for &(a, b) in g.friendships() {
            lists[0][a].push(b);
            lists[0][b].push(a);
        }
        for (p, &u) in g.post_author().iter().enumerate() {
            lists[1][u].push(nu + p);
            lists[2][nu + p].push(u);
        }
        RelLists { n_users: nu, nodes, lists }
    }

    pub fn neighbors(&self, relation: usize) -> &[Vec<usize>] {
        &self.lists[relation]
    }
}

/// Mean over each node's neighbor rows; nodes without neighbors keep zero.
fn aggregate<T: Scalar>(h: &Array2<T>, lists: &[Vec<usize>]) -> Array2<T> {
    let mut out = Array2::zeros(h.dim());
    for (i, js) in lists.iter().enumerate() {
        if js.is_empty() {
            continue;
        }
        let mut row = out.row_mut(i);
        for &j in js {
            row += &h.row(j);
        }
        let w = c::<T>(1.0 / js.len() as f64);
        row.mapv_inplace(|v| v * w);
    }
    out
}

/// Adjoint of [`aggregate`]: routes each output-row gradient back to the
/// neighbor rows it averaged.
fn aggregate_adjoint<T: Scalar>(grad: &Array2<T>, lists: &[Vec<usize>]) -> Array2<T> {
    let mut out: Array2<T> = Array2::zeros(grad.dim());
    for (i, js) in lists.iter().enumerate() {
        if js.is_empty() {
            continue;
        }
        let w = c::<T>(1.0 / js.len() as f64);
        for &j in js {
            out.row_mut(j).scaled_add(w, &grad.row(i));
        }
    }
    out
}

/// Everything the backward pass needs from a forward evaluation.
pub struct ForwardCache<T: Scalar> {
    pub s0: [Array2<T>; 3],
    pub pre1: Array2<T>,
    pub h1: Array2<T>,
    pub s1: [Array2<T>; 3],
    pub h2: Array2<T>,
}

pub fn forward<T: Scalar>(
    params: &HeteroEncoderParams<T>,
    st: &RelLists,
    h0: &Array2<T>,
) -> Result<ForwardCache<T>> {
    if h0.nrows() != st.nodes {
        return Err(Error::DimMismatch(format!(
            "features have {} rows, graph has {} nodes",
            h0.nrows(),
            st.nodes
        )));
    }
    if h0.ncols() != params.dims()[0] {
        return Err(Error::DimMismatch(format!(
            "features are {}-dimensional, encoder expects {}",
            h0.ncols(),
            params.dims()[0]
        )));
    }
    let zero = c::<T>(0.0);
    let s0 = [
        aggregate(h0, &st.lists[0]),
        aggregate(h0, &st.lists[1]),
        aggregate(h0, &st.lists[2]),
    ];
    let mut pre1 = h0.dot(&params.w_self[0]);
    for r in 0..3 {
        pre1 += &s0[r].dot(&params.w_rel[0][r]);
    }
    let h1 = pre1.mapv(|v| if v > zero { v } else { zero });
    let s1 = [
        aggregate(&h1, &st.lists[0]),
        aggregate(&h1, &st.lists[1]),
        aggregate(&h1, &st.lists[2]),
    ];
    let mut h2 = h1.dot(&params.w_self[1]);
    for r in 0..3 {
        h2 += &s1[r].dot(&params.w_rel[1][r]);
    }
    Ok(ForwardCache { s0, pre1, h1, s1, h2 })
}

/// Parameter gradients for a downstream gradient `d_h2` on the output.
pub fn backward<T: Scalar>(
    params: &HeteroEncoderParams<T>,
    st: &RelLists,
    h0: &Array2<T>,
    cache: &ForwardCache<T>,
    d_h2: &Array2<T>,
) -> HeteroEncoderParams<T> {
    let mut g = HeteroEncoderParams::zeros(params.dims());
    g.w_self[1] = cache.h1.t().dot(d_h2);
    let mut d_h1 = d_h2.dot(&params.w_self[1].t());
    for r in 0..3 {
        g.w_rel[1][r] = cache.s1[r].t().dot(d_h2);
        d_h1 += &aggregate_adjoint(&d_h2.dot(&params.w_rel[1][r].t()), &st.lists[r]);
    }
    let zero = c::<T>(0.0);
    let d_pre1 = ndarray::Zip::from(&d_h1)
        .and(&cache.pre1)
        .map_collect(|&gv, &pre| if pre > zero { gv } else { zero });
    g.w_self[0] = h0.t().dot(&d_pre1);
    for r in 0..3 {
        g.w_rel[0][r] = cache.s0[r].t().dot(&d_pre1);
    }
    g
}

/// Runs the encoder and returns the user rows keyed by user id.
pub fn encode(
    g: &HeteroGraph,
    feats: &NodeFeatures,
    params: &HeteroEncoderParams,
) -> Result<EmbeddingTable> {
    let st = RelLists::build(g);
    let cache = forward(params, &st, &feats.combined())?;
    let out_dim = params.dims()[2];
    let mut z = Array2::zeros((g.n_users(), out_dim));
    for u in 0..g.n_users() {
        z.row_mut(u).assign(&cache.h2.row(u));
    }
    let table = EmbeddingTable::new(g.user_ids().to_vec(), z)?;
    if !table.is_finite() {
        return Err(Error::NonFinite("encoder output".into()));
    }
    Ok(table)
}
