//! Joint training of the fusion model on two networks tied by anchors.

use serde::{Deserialize, Serialize};
use ndarray::Array2;

use crate::align::AnchorSet;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{extract_user_graph, HeteroGraph, UserGraph};
use crate::hetero::{loss_grad, loss_graph, NegativeSampler};
use crate::rng::SeedTree;
use crate::scalar::{c, Scalar};
use crate::Real;

use super::adjacency::{AnchorMask, NormalizedAdjacency};
use super::model::{
    hierarchy_backward, hierarchy_forward, inter_backward, inter_forward, iterative_backward,
    iterative_forward, Activation, FusionParams, IterativeParams,
};

/// Which intra-graph propagation the model uses: the anchor-emphasizing
/// hierarchy stack, or plain stacked GCN layers (its ablation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionMode {
    Hierarchy,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub out_dim: usize,
    /// Hop depth k of the propagation stack.
    pub k: usize,
    /// Anchor emphasis weight.
    pub alpha: f64,
    pub activation: Activation,
    /// Negative samples per friendship pair in the graph losses.
    pub negatives: usize,
    /// Exponent of the degree-based negative distribution.
    pub neg_exponent: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            out_dim: 128,
            k: 4,
            alpha: 2.0,
            activation: Activation::Relu,
            negatives: 5,
            neg_exponent: 0.75,
            learning_rate: 0.01,
            epochs: 50,
            seed: 0,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.out_dim == 0 {
            return Err(Error::InvalidArgument("output dimension must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("hop depth k must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "anchor emphasis alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Mean squared Euclidean distance over anchor pairs, with gradients on both
/// output tables. Empty pairs cost zero.
pub(crate) fn anchor_regularizer<T: Scalar>(
    o1: &Array2<T>,
    o2: &Array2<T>,
    apairs: &[(usize, usize)],
) -> (T, Array2<T>, Array2<T>) {
    let mut d1 = Array2::zeros(o1.raw_dim());
    let mut d2 = Array2::zeros(o2.raw_dim());
    if apairs.is_empty() {
        return (T::zero(), d1, d2);
    }
    let m = c::<T>(apairs.len() as f64);
    let scale = c::<T>(2.0) / m;
    let mut total = T::zero();
    for &(i, j) in apairs {
        for col in 0..o1.ncols() {
            let diff = o1[(i, col)] - o2[(j, col)];
            total += diff * diff;
            d1[(i, col)] += scale * diff;
            d2[(j, col)] -= scale * diff;
        }
    }
    (total / m, d1, d2)
}

/// Shared inputs of one fusion problem, matrix-level.
pub(crate) struct FusionInstance<'a, T: Scalar> {
    pub adj1: &'a NormalizedAdjacency,
    pub adj2: &'a NormalizedAdjacency,
    pub mask1: &'a AnchorMask,
    pub mask2: &'a AnchorMask,
    pub z1: &'a Array2<T>,
    pub z2: &'a Array2<T>,
    pub apairs: &'a [(usize, usize)],
    pub pairs1: &'a [(usize, usize)],
    pub pairs2: &'a [(usize, usize)],
}

/// Joint objective on computed outputs: both graph losses plus the anchor
/// regularizer, with gradients on the outputs.
fn output_grads<T: Scalar>(
    o1: &Array2<T>,
    o2: &Array2<T>,
    inst: &FusionInstance<'_, T>,
    plan1: &[Vec<usize>],
    plan2: &[Vec<usize>],
) -> Result<(T, Array2<T>, Array2<T>)> {
    let (l1, mut d1) = loss_grad(o1, inst.pairs1, plan1)?;
    let (l2, mut d2) = loss_grad(o2, inst.pairs2, plan2)?;
    let (reg, r1, r2) = anchor_regularizer(o1, o2, inst.apairs);
    d1 += &r1;
    d2 += &r2;
    Ok((l1 + l2 + reg, d1, d2))
}

pub(crate) fn hierarchy_loss_and_grads<T: Scalar>(
    params: &FusionParams<T>,
    inst: &FusionInstance<'_, T>,
    plan1: &[Vec<usize>],
    plan2: &[Vec<usize>],
) -> Result<(T, FusionParams<T>)> {
    let inter = inter_forward(inst.z1, inst.z2, inst.apairs, params);
    let c1 = hierarchy_forward(inst.adj1, inst.mask1, &inter.z1p, &params.wu1, params)?;
    let c2 = hierarchy_forward(inst.adj2, inst.mask2, &inter.z2p, &params.wu2, params)?;
    let (loss, d_o1, d_o2) = output_grads(&c1.out, &c2.out, inst, plan1, plan2)?;
    let (d_wu1, d_z1p) = hierarchy_backward(inst.adj1, inst.mask1, &c1, &d_o1, &params.wu1, params)?;
    let (d_wu2, d_z2p) = hierarchy_backward(inst.adj2, inst.mask2, &c2, &d_o2, &params.wu2, params)?;
    let (d_w12, d_w21) =
        inter_backward(inst.z1, inst.z2, &inter, &d_z1p, &d_z2p, inst.apairs, params);
    let grads = FusionParams {
        w12: d_w12,
        w21: d_w21,
        wu1: d_wu1,
        wu2: d_wu2,
        alpha: params.alpha,
        k: params.k,
        activation: params.activation,
    };
    Ok((loss, grads))
}

pub(crate) fn iterative_loss_and_grads<T: Scalar>(
    params: &IterativeParams<T>,
    inst: &FusionInstance<'_, T>,
    plan1: &[Vec<usize>],
    plan2: &[Vec<usize>],
) -> Result<(T, IterativeParams<T>)> {
    let ip = params.as_inter();
    let inter = inter_forward(inst.z1, inst.z2, inst.apairs, &ip);
    let c1 = iterative_forward(inst.adj1, &inter.z1p, &params.layers1, params.activation)?;
    let c2 = iterative_forward(inst.adj2, &inter.z2p, &params.layers2, params.activation)?;
    let (loss, d_o1, d_o2) = output_grads(&c1.out, &c2.out, inst, plan1, plan2)?;
    let (d_layers1, d_z1p) =
        iterative_backward(inst.adj1, &c1, &d_o1, &params.layers1, params.activation)?;
    let (d_layers2, d_z2p) =
        iterative_backward(inst.adj2, &c2, &d_o2, &params.layers2, params.activation)?;
    let (d_w12, d_w21) = inter_backward(inst.z1, inst.z2, &inter, &d_z1p, &d_z2p, inst.apairs, &ip);
    let grads = IterativeParams {
        w12: d_w12,
        w21: d_w21,
        layers1: d_layers1,
        layers2: d_layers2,
        k: params.k,
        activation: params.activation,
    };
    Ok((loss, grads))
}

/// Joint loss of already-computed fusion outputs: the two graph losses plus
/// the anchor regularizer. Anchor ids resolve against the table ids; an
/// empty anchor set costs nothing and warns, since training then degenerates
/// to two independent graphs.
pub fn total_loss(
    o1: &EmbeddingTable,
    o2: &EmbeddingTable,
    g1: &UserGraph,
    g2: &UserGraph,
    anchors: &AnchorSet,
    cfg: &FusionConfig,
) -> Result<Real> {
    cfg.validate()?;
    for (name, o, g) in [("first", o1, g1), ("second", o2, g2)] {
        if o.len() != g.n {
            return Err(Error::DimMismatch(format!(
                "{name} table has {} rows for a {}-user graph",
                o.len(),
                g.n
            )));
        }
    }
    if g1.edges.is_empty() || g2.edges.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let apairs = resolve_table_anchors(anchors, o1, o2)?;
    if apairs.is_empty() {
        eprintln!("warning: no anchor pairs; alignment regularizer is zero");
    }
    let tree = SeedTree::new(cfg.seed);
    let mut loss = 0.0;
    for (net, o, g) in [(0u64, o1, g1), (1u64, o2, g2)] {
        let sampler = NegativeSampler::from_degrees(&g.degrees(), cfg.neg_exponent)?;
        let plan = sampler.plan(
            g.edges.len(),
            cfg.negatives,
            &mut tree.stream("fusion-neg", &[0, net]),
        );
        loss += loss_graph(o.vectors(), &g.edges, &plan)?;
    }
    let (reg, _, _) = anchor_regularizer(o1.vectors(), o2.vectors(), &apairs);
    Ok(loss + reg)
}

fn resolve_table_anchors(
    anchors: &AnchorSet,
    o1: &EmbeddingTable,
    o2: &EmbeddingTable,
) -> Result<Vec<(usize, usize)>> {
    anchors
        .pairs()
        .iter()
        .map(|(s, t, _)| {
            let i = o1
                .row_of(s)
                .ok_or_else(|| Error::InvalidArgument(format!("anchor user {s} missing from first table")))?;
            let j = o2
                .row_of(t)
                .ok_or_else(|| Error::InvalidArgument(format!("anchor user {t} missing from second table")))?;
            Ok((i, j))
        })
        .collect()
}

fn resolve_graph_anchors(
    anchors: &AnchorSet,
    g1: &HeteroGraph,
    g2: &HeteroGraph,
) -> Result<Vec<(usize, usize)>> {
    anchors
        .pairs()
        .iter()
        .map(|(s, t, _)| {
            let i = g1
                .user_index(s)
                .ok_or_else(|| Error::InvalidArgument(format!("anchor user {s} missing from first graph")))?;
            let j = g2
                .user_index(t)
                .ok_or_else(|| Error::InvalidArgument(format!("anchor user {t} missing from second graph")))?;
            Ok((i, j))
        })
        .collect()
}

/// Embedding rows gathered in the graph's user order.
fn gather(z: &EmbeddingTable, g: &HeteroGraph) -> Result<Array2<Real>> {
    let d = z.dim();
    let mut out = Array2::zeros((g.n_users(), d));
    for (row, id) in g.user_ids().iter().enumerate() {
        let v = z
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("no embedding for user {id}")))?;
        out.row_mut(row).assign(&v);
    }
    Ok(out)
}

enum ModeParams {
    Hierarchy(FusionParams<Real>),
    Iterative(IterativeParams<Real>),
}

impl ModeParams {
    fn forward(
        &self,
        inst: &FusionInstance<'_, Real>,
    ) -> Result<(Array2<Real>, Array2<Real>)> {
        match self {
            ModeParams::Hierarchy(p) => {
                let inter = inter_forward(inst.z1, inst.z2, inst.apairs, p);
                let c1 = hierarchy_forward(inst.adj1, inst.mask1, &inter.z1p, &p.wu1, p)?;
                let c2 = hierarchy_forward(inst.adj2, inst.mask2, &inter.z2p, &p.wu2, p)?;
                Ok((c1.out, c2.out))
            }
            ModeParams::Iterative(p) => {
                let ip = p.as_inter();
                let inter = inter_forward(inst.z1, inst.z2, inst.apairs, &ip);
                let c1 = iterative_forward(inst.adj1, &inter.z1p, &p.layers1, p.activation)?;
                let c2 = iterative_forward(inst.adj2, &inter.z2p, &p.layers2, p.activation)?;
                Ok((c1.out, c2.out))
            }
        }
    }
}

/// Trains the fusion model on two embedded networks and returns the fused
/// embedding table of each. `mode` switches between the hierarchy stack and
/// its stacked-GCN ablation; everything else is shared.
pub fn train_fusion(
    g1: &HeteroGraph,
    g2: &HeteroGraph,
    z1: &EmbeddingTable,
    z2: &EmbeddingTable,
    anchors: &AnchorSet,
    cfg: &FusionConfig,
    mode: FusionMode,
) -> Result<(EmbeddingTable, EmbeddingTable)> {
    cfg.validate()?;
    let d = z1.dim();
    if d == 0 {
        return Err(Error::InvalidArgument("input embeddings have dimension 0".into()));
    }
    if z2.dim() != d {
        return Err(Error::DimMismatch(format!(
            "input embeddings disagree: {d} vs {}",
            z2.dim()
        )));
    }
    let z1m = gather(z1, g1)?;
    let z2m = gather(z2, g2)?;
    let ug1 = extract_user_graph(g1);
    let ug2 = extract_user_graph(g2);
    let adj1 = NormalizedAdjacency::from_user_graph(&ug1);
    let adj2 = NormalizedAdjacency::from_user_graph(&ug2);
    let apairs = resolve_graph_anchors(anchors, g1, g2)?;
    if apairs.is_empty() {
        eprintln!("warning: no anchor pairs; fusing as two independent graphs");
    }
    let mask1 = AnchorMask::new(g1.n_users(), &apairs.iter().map(|p| p.0).collect::<Vec<_>>())?;
    let mask2 = AnchorMask::new(g2.n_users(), &apairs.iter().map(|p| p.1).collect::<Vec<_>>())?;
    let inst = FusionInstance {
        adj1: &adj1,
        adj2: &adj2,
        mask1: &mask1,
        mask2: &mask2,
        z1: &z1m,
        z2: &z2m,
        apairs: &apairs,
        pairs1: &ug1.edges,
        pairs2: &ug2.edges,
    };

    let tree = SeedTree::new(cfg.seed);
    let mut init_rng = tree.stream("fusion-init", &[]);
    let mut params = match mode {
        FusionMode::Hierarchy => ModeParams::Hierarchy(FusionParams::init(
            d,
            cfg.out_dim,
            cfg.k,
            cfg.alpha,
            cfg.activation,
            &mut init_rng,
        )),
        FusionMode::Iterative => ModeParams::Iterative(IterativeParams::init(
            d,
            cfg.out_dim,
            cfg.k,
            cfg.activation,
            &mut init_rng,
        )),
    };

    if cfg.epochs > 0 {
        if ug1.edges.is_empty() || ug2.edges.is_empty() {
            return Err(Error::EmptyPairs);
        }
        let sampler1 = NegativeSampler::from_degrees(&ug1.degrees(), cfg.neg_exponent)?;
        let sampler2 = NegativeSampler::from_degrees(&ug2.degrees(), cfg.neg_exponent)?;
        let lr = cfg.learning_rate;
        for epoch in 0..cfg.epochs {
            let plan1 = sampler1.plan(
                ug1.edges.len(),
                cfg.negatives,
                &mut tree.stream("fusion-neg", &[epoch as u64, 0]),
            );
            let plan2 = sampler2.plan(
                ug2.edges.len(),
                cfg.negatives,
                &mut tree.stream("fusion-neg", &[epoch as u64, 1]),
            );
            match &mut params {
                ModeParams::Hierarchy(p) => {
                    let (loss, grads) = hierarchy_loss_and_grads(p, &inst, &plan1, &plan2)?;
                    if !loss.is_finite() {
                        return Err(Error::Diverged { epoch });
                    }
                    for (w, g) in p.tensors_mut().into_iter().zip(grads.tensors()) {
                        w.scaled_add(-lr, g);
                    }
                    if !p.is_finite() {
                        return Err(Error::Diverged { epoch });
                    }
                }
                ModeParams::Iterative(p) => {
                    let (loss, grads) = iterative_loss_and_grads(p, &inst, &plan1, &plan2)?;
                    if !loss.is_finite() {
                        return Err(Error::Diverged { epoch });
                    }
                    for (w, g) in p.tensors_mut().into_iter().zip(grads.tensors()) {
                        w.scaled_add(-lr, g);
                    }
                    if !p.is_finite() {
                        return Err(Error::Diverged { epoch });
                    }
                }
            }
        }
    }

    let (o1, o2) = params.forward(&inst)?;
    if !o1.iter().all(|v| v.is_finite()) || !o2.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("fusion output".into()));
    }
    Ok((
        EmbeddingTable::new(g1.user_ids().to_vec(), o1)?,
        EmbeddingTable::new(g2.user_ids().to_vec(), o2)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, UserSpec};
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn hetero(prefix: &str, n: usize, edges: &[(usize, usize)]) -> HeteroGraph {
        let mut b = GraphBuilder::new();
        for i in 0..n {
            b.add_user(UserSpec {
                id: format!("{prefix}{i}"),
                attrs: BTreeMap::new(),
                gender: None,
                occupation: None,
                interests: None,
            });
        }
        for &(i, j) in edges {
            b.add_friendship(format!("{prefix}{i}"), format!("{prefix}{j}"));
        }
        b.finish().unwrap()
    }

    fn random_table(prefix: &str, n: usize, d: usize, seed: u64) -> EmbeddingTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids = (0..n).map(|i| format!("{prefix}{i}")).collect();
        let mut m = Array2::zeros((n, d));
        for v in m.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        EmbeddingTable::new(ids, m).unwrap()
    }

    fn anchor_set(pairs: &[(usize, usize)]) -> AnchorSet {
        AnchorSet::new(
            pairs
                .iter()
                .map(|&(i, j)| (format!("a{i}"), format!("b{j}"), 1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn aligned_anchor_rows_cost_nothing() {
        let o = arr2(&[[1.0, -2.0], [0.5, 3.0]]);
        let (reg, d1, d2) = anchor_regularizer(&o, &o, &[(0, 0), (1, 1)]);
        assert_eq!(reg, 0.0);
        assert!(d1.iter().all(|&v| v == 0.0));
        assert!(d2.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pair_regularizer_hand_value() {
        let o1 = arr2(&[[1.0, 0.0]]);
        let o2 = arr2(&[[0.0, 1.0]]);
        let (reg, d1, d2) = anchor_regularizer(&o1, &o2, &[(0, 0)]);
        assert_eq!(reg, 2.0);
        assert_eq!(d1, arr2(&[[2.0, -2.0]]));
        assert_eq!(d2, arr2(&[[-2.0, 2.0]]));
    }

    #[test]
    fn empty_pairs_cost_nothing() {
        let o = arr2(&[[4.0, 5.0]]);
        let (reg, d1, _) = anchor_regularizer(&o, &o, &[]);
        assert_eq!(reg, 0.0);
        assert!(d1.iter().all(|&v| v == 0.0));
    }

    // Fixed-size FD instance shared by the gradient tests.
    struct Fixture {
        adj1: NormalizedAdjacency,
        adj2: NormalizedAdjacency,
        mask1: AnchorMask,
        mask2: AnchorMask,
        z1: Array2<Real>,
        z2: Array2<Real>,
        apairs: Vec<(usize, usize)>,
        pairs1: Vec<(usize, usize)>,
        pairs2: Vec<(usize, usize)>,
        plan1: Vec<Vec<usize>>,
        plan2: Vec<Vec<usize>>,
    }

    impl Fixture {
        fn new(seed: u64) -> Self {
            let g1 = UserGraph::new(5, vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]).unwrap();
            let g2 = UserGraph::new(4, vec![(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut fill = |shape: (usize, usize)| {
                let mut m = Array2::zeros(shape);
                for v in m.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
                m
            };
            let z1 = fill((5, 2));
            let z2 = fill((4, 2));
            let apairs = vec![(0, 1), (3, 2)];
            let plan1 = g1.edges.iter().map(|&(a, _)| vec![(a + 2) % 5, (a + 3) % 5]).collect();
            let plan2 = g2.edges.iter().map(|&(a, _)| vec![(a + 2) % 4, (a + 1) % 4]).collect();
            Fixture {
                adj1: NormalizedAdjacency::from_user_graph(&g1),
                adj2: NormalizedAdjacency::from_user_graph(&g2),
                mask1: AnchorMask::new(5, &[0, 3]).unwrap(),
                mask2: AnchorMask::new(4, &[1, 2]).unwrap(),
                z1,
                z2,
                apairs,
                pairs1: g1.edges,
                pairs2: g2.edges,
                plan1,
                plan2,
            }
        }

        fn instance(&self) -> FusionInstance<'_, Real> {
            FusionInstance {
                adj1: &self.adj1,
                adj2: &self.adj2,
                mask1: &self.mask1,
                mask2: &self.mask2,
                z1: &self.z1,
                z2: &self.z2,
                apairs: &self.apairs,
                pairs1: &self.pairs1,
                pairs2: &self.pairs2,
            }
        }
    }

    fn assert_close(fd: Real, an: Real, what: &str) {
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
        assert!(rel <= 1e-4, "{what}: fd {fd} vs analytic {an} (rel {rel})");
    }

    fn check_hierarchy_gradients(activation: Activation, seed: u64) {
        let fx = Fixture::new(seed);
        let inst = fx.instance();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let params = FusionParams::init(2, 3, 2, 1.5, activation, &mut rng);
        let (_, grads) = hierarchy_loss_and_grads(&params, &inst, &fx.plan1, &fx.plan2).unwrap();
        let h = 1e-6;
        for t in 0..4 {
            let shape = params.tensors()[t].raw_dim();
            for i in 0..shape[0] {
                for j in 0..shape[1] {
                    let mut up = params.clone();
                    up.tensors_mut()[t][(i, j)] += h;
                    let mut dn = params.clone();
                    dn.tensors_mut()[t][(i, j)] -= h;
                    let lu = hierarchy_loss_and_grads(&up, &inst, &fx.plan1, &fx.plan2).unwrap().0;
                    let ld = hierarchy_loss_and_grads(&dn, &inst, &fx.plan1, &fx.plan2).unwrap().0;
                    let fd = (lu - ld) / (2.0 * h);
                    assert_close(fd, grads.tensors()[t][(i, j)], &format!("tensor {t} ({i},{j})"));
                }
            }
        }
    }

    #[test]
    fn hierarchy_gradients_match_finite_differences() {
        check_hierarchy_gradients(Activation::Identity, 17);
    }

    #[test]
    fn hierarchy_gradients_match_finite_differences_relu() {
        check_hierarchy_gradients(Activation::Relu, 19);
    }

    #[test]
    fn iterative_gradients_match_finite_differences() {
        for (activation, seed) in [(Activation::Identity, 23u64), (Activation::Relu, 29)] {
            let fx = Fixture::new(seed);
            let inst = fx.instance();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let params = IterativeParams::init(2, 3, 2, activation, &mut rng);
            let (_, grads) = iterative_loss_and_grads(&params, &inst, &fx.plan1, &fx.plan2).unwrap();
            let h = 1e-6;
            let n_tensors = params.tensors().len();
            for t in 0..n_tensors {
                let shape = params.tensors()[t].raw_dim();
                for i in 0..shape[0] {
                    for j in 0..shape[1] {
                        let mut up = params.clone();
                        up.tensors_mut()[t][(i, j)] += h;
                        let mut dn = params.clone();
                        dn.tensors_mut()[t][(i, j)] -= h;
                        let lu =
                            iterative_loss_and_grads(&up, &inst, &fx.plan1, &fx.plan2).unwrap().0;
                        let ld =
                            iterative_loss_and_grads(&dn, &inst, &fx.plan1, &fx.plan2).unwrap().0;
                        let fd = (lu - ld) / (2.0 * h);
                        assert_close(
                            fd,
                            grads.tensors()[t][(i, j)],
                            &format!("{activation:?} tensor {t} ({i},{j})"),
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn total_loss_ignores_anchors_with_equal_rows() {
        let g1 = UserGraph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let g2 = UserGraph::new(3, vec![(0, 2), (1, 2)]).unwrap();
        let mut t1 = random_table("a", 3, 4, 1);
        let t2 = {
            // Row of b1 equals row of a0, so that anchor costs zero.
            let mut t = random_table("b", 3, 4, 2);
            let src = t1.vectors().row(0).to_owned();
            t.vectors_mut().row_mut(1).assign(&src);
            t
        };
        t1.vectors_mut(); // keep t1 mutable path exercised
        let cfg = FusionConfig { negatives: 2, ..FusionConfig::default() };
        let with = total_loss(&t1, &t2, &g1, &g2, &anchor_set(&[(0, 1)]), &cfg).unwrap();
        let without = total_loss(&t1, &t2, &g1, &g2, &AnchorSet::new(vec![]).unwrap(), &cfg).unwrap();
        assert_eq!(with, without);
        assert!(with.is_finite() && with > 0.0);
    }

    #[test]
    fn total_loss_checks_shapes_and_edges() {
        let g = UserGraph::new(3, vec![(0, 1)]).unwrap();
        let short = random_table("a", 2, 4, 1);
        let full = random_table("b", 3, 4, 2);
        let cfg = FusionConfig::default();
        let empty = AnchorSet::new(vec![]).unwrap();
        assert!(matches!(
            total_loss(&short, &full, &g, &g, &empty, &cfg),
            Err(Error::DimMismatch(_))
        ));
        let edgeless = UserGraph::new(3, vec![]).unwrap();
        let a = random_table("a", 3, 4, 1);
        assert!(matches!(
            total_loss(&a, &full, &edgeless, &g, &empty, &cfg),
            Err(Error::EmptyPairs)
        ));
    }

    fn small_cfg() -> FusionConfig {
        FusionConfig {
            out_dim: 4,
            k: 2,
            alpha: 1.0,
            negatives: 2,
            epochs: 0,
            ..FusionConfig::default()
        }
    }

    #[test]
    fn zero_epochs_is_a_deterministic_untrained_forward() {
        let g1 = hetero("a", 5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let g2 = hetero("b", 4, &[(0, 1), (1, 2), (2, 3)]);
        let z1 = random_table("a", 5, 3, 1);
        let z2 = random_table("b", 4, 3, 2);
        let anchors = anchor_set(&[(0, 0), (2, 3)]);
        let cfg = small_cfg();
        for mode in [FusionMode::Hierarchy, FusionMode::Iterative] {
            let (o1a, o2a) = train_fusion(&g1, &g2, &z1, &z2, &anchors, &cfg, mode).unwrap();
            let (o1b, o2b) = train_fusion(&g1, &g2, &z1, &z2, &anchors, &cfg, mode).unwrap();
            assert_eq!(o1a.vectors(), o1b.vectors());
            assert_eq!(o2a.vectors(), o2b.vectors());
            assert_eq!(o1a.dim(), 4);
            assert!(o1a.vectors().iter().any(|&v| v != 0.0));
            // One training step moves the weights.
            let trained = FusionConfig { epochs: 1, ..cfg.clone() };
            let (o1c, _) = train_fusion(&g1, &g2, &z1, &z2, &anchors, &trained, mode).unwrap();
            assert_ne!(o1a.vectors(), o1c.vectors());
        }
    }

    #[test]
    fn relabeled_users_fuse_to_the_same_vectors() {
        // Same graph content, users inserted in reversed order: per-id
        // outputs must agree up to floating-point summation order.
        let edges = [(0usize, 1usize), (1, 2), (2, 3), (0, 3), (1, 3)];
        let g1 = hetero("a", 4, &edges);
        let mut b = GraphBuilder::new();
        for i in (0..4).rev() {
            b.add_user(UserSpec {
                id: format!("a{i}"),
                attrs: BTreeMap::new(),
                gender: None,
                occupation: None,
                interests: None,
            });
        }
        for &(i, j) in &edges {
            b.add_friendship(format!("a{i}"), format!("a{j}"));
        }
        let g1_rev = b.finish().unwrap();
        let g2 = hetero("b", 3, &[(0, 1), (1, 2)]);
        let z1 = random_table("a", 4, 3, 1);
        let z2 = random_table("b", 3, 3, 2);
        let anchors = anchor_set(&[(1, 0), (3, 2)]);
        let cfg = small_cfg();
        let (fwd, _) = train_fusion(&g1, &g2, &z1, &z2, &anchors, &cfg, FusionMode::Hierarchy).unwrap();
        let (rev, _) =
            train_fusion(&g1_rev, &g2, &z1, &z2, &anchors, &cfg, FusionMode::Hierarchy).unwrap();
        for i in 0..4 {
            let id = format!("a{i}");
            let a = fwd.get(&id).unwrap();
            let b = rev.get(&id).unwrap();
            let worst =
                a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-9, "user {id} deviates by {worst}");
        }
    }

    #[test]
    fn runaway_learning_rate_diverges() {
        let g1 = hetero("a", 4, &[(0, 1), (1, 2), (2, 3)]);
        let g2 = hetero("b", 4, &[(0, 1), (1, 2), (2, 3)]);
        let z1 = random_table("a", 4, 3, 1);
        let z2 = random_table("b", 4, 3, 2);
        let anchors = anchor_set(&[(0, 0), (1, 1)]);
        let cfg = FusionConfig {
            learning_rate: 1e200,
            epochs: 5,
            out_dim: 4,
            k: 2,
            ..FusionConfig::default()
        };
        let err =
            train_fusion(&g1, &g2, &z1, &z2, &anchors, &cfg, FusionMode::Hierarchy).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "got {err:?}");
    }

    #[test]
    fn missing_ids_are_reported_by_name() {
        let g1 = hetero("a", 3, &[(0, 1), (1, 2)]);
        let g2 = hetero("b", 3, &[(0, 1), (1, 2)]);
        let z1 = random_table("a", 3, 3, 1);
        let z2 = random_table("b", 3, 3, 2);
        let ghost = AnchorSet::new(vec![("a9".into(), "b0".into(), 1.0)]).unwrap();
        let err = train_fusion(&g1, &g2, &z1, &z2, &ghost, &small_cfg(), FusionMode::Hierarchy)
            .unwrap_err();
        assert!(err.to_string().contains("a9"), "got {err}");

        let z_short = random_table("a", 2, 3, 1);
        let ok = anchor_set(&[(0, 0)]);
        let err = train_fusion(&g1, &g2, &z_short, &z2, &ok, &small_cfg(), FusionMode::Hierarchy)
            .unwrap_err();
        assert!(err.to_string().contains("a2"), "got {err}");
    }

    #[test]
    fn training_without_edges_surfaces_the_empty_pair_error() {
        let g1 = hetero("a", 3, &[]);
        let g2 = hetero("b", 3, &[(0, 1)]);
        let z1 = random_table("a", 3, 3, 1);
        let z2 = random_table("b", 3, 3, 2);
        let cfg = FusionConfig { epochs: 1, ..small_cfg() };
        let err = train_fusion(&g1, &g2, &z1, &z2, &anchor_set(&[(0, 0)]), &cfg, FusionMode::Hierarchy)
            .unwrap_err();
        assert!(matches!(err, Error::EmptyPairs));
    }

    #[test]
    fn self_fusion_aligns_anchor_outputs() {
        // Identical structure under two namespaces, every user anchored:
        // training must pull the two fused tables together.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 24;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < 0.18 {
                    edges.push((i, j));
                }
            }
        }
        let g1 = hetero("a", n, &edges);
        let g2 = hetero("b", n, &edges);
        let z1 = random_table("a", n, 6, 1);
        let z2 = random_table("b", n, 6, 2);
        let anchors = anchor_set(&(0..n).map(|i| (i, i)).collect::<Vec<_>>());
        // Identity activation: at this tiny scale the rectifier starves
        // whole towers of gradient before the anchor pull can act.
        let cfg = FusionConfig {
            out_dim: 6,
            k: 2,
            alpha: 1.0,
            activation: Activation::Identity,
            negatives: 3,
            learning_rate: 0.2,
            epochs: 800,
            seed: 0,
            ..FusionConfig::default()
        };
        let (o1, o2) =
            train_fusion(&g1, &g2, &z1, &z2, &anchors, &cfg, FusionMode::Hierarchy).unwrap();
        let mut mean = 0.0;
        for i in 0..n {
            let a = o1.vectors().row(i);
            let b = o2.vectors().row(i);
            let dot = a.dot(&b);
            let na = a.dot(&a).sqrt();
            let nb = b.dot(&b).sqrt();
            if na > 0.0 && nb > 0.0 {
                mean += dot / (na * nb);
            }
        }
        mean /= n as f64;
        assert!(mean >= 0.9, "mean anchor cosine {mean}");
    }
}
