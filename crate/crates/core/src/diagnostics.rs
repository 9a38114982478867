//! Fast invariant suite behind the command-line `verify` subcommand.
//!
//! Each property re-derives its oracle independently of the code under
//! test: exhaustive distribution ratios for the text mechanism, a sampling
//! bound for the numeric mechanism, central finite differences for the
//! fusion gradients, and dense matrix powers for the propagation stack.
//! The whole suite runs in well under a second.

use ndarray::Array2;
use rand::Rng;

use crate::dp::{pm_perturb, PmParams, TextMechanism};
use crate::fuse::{
    hierarchy_propagate, Activation, AnchorMask, FusionParams, NormalizedAdjacency,
};
use crate::fuse::train::{hierarchy_loss_and_grads, iterative_loss_and_grads, FusionInstance};
use crate::fuse::IterativeParams;
use crate::graph::UserGraph;
use crate::rng::SeedTree;
use crate::EmbeddingTable;
use crate::Real;

/// Outcome of one verified property.
#[derive(Debug, Clone)]
pub struct PropertyReport {
    pub name: &'static str,
    pub pass: bool,
    /// Worst observed margin or the first failure, human-readable.
    pub detail: String,
}

/// Runs all properties and reports each one.
pub fn run_invariant_suite(seed: u64) -> Vec<PropertyReport> {
    vec![
        text_ratio_bound(seed),
        numeric_unbiasedness(seed),
        fusion_gradient_check(seed),
        propagation_power_oracle(seed),
    ]
}

fn gaussian_matrix(shape: (usize, usize), rng: &mut impl Rng) -> Array2<Real> {
    let mut m = Array2::zeros(shape);
    for v in m.iter_mut() {
        *v = crate::synth::gaussian(rng);
    }
    m
}

/// Exhaustively checks that every substitution-probability ratio obeys the
/// distance-scaled bound and that every row sums to one.
fn text_ratio_bound(seed: u64) -> PropertyReport {
    let name = "text-mechanism-ratio-bound";
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("verify-text", &[]);
    let n = 8;
    let ids = (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>();
    let vec = gaussian_matrix((n, 3), &mut rng);
    let emb = match EmbeddingTable::new(ids, vec.clone()) {
        Ok(e) => e,
        Err(e) => return fail(name, format!("building the vocabulary table: {e}")),
    };
    let eps = 2.0;
    let mech = match TextMechanism::new(&emb, eps) {
        Ok(m) => m,
        Err(e) => return fail(name, format!("building the mechanism: {e}")),
    };
    let dists: Vec<Vec<f64>> = (0..n).map(|x| mech.distribution(x)).collect();
    let mut worst_sum = 0.0f64;
    let mut worst_ratio = f64::NEG_INFINITY;
    for (x, dist) in dists.iter().enumerate() {
        let sum: f64 = dist.iter().sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        for (xp, distp) in dists.iter().enumerate() {
            let diff = &vec.row(x) - &vec.row(xp);
            let d = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            for y in 0..n {
                let margin = (dist[y] / distp[y]).ln() - eps * d;
                worst_ratio = worst_ratio.max(margin);
            }
        }
    }
    let pass = worst_sum <= 1e-12 && worst_ratio <= 1e-9;
    PropertyReport {
        name,
        pass,
        detail: format!(
            "worst row-sum error {worst_sum:.2e}, worst log-ratio margin {worst_ratio:.2e}"
        ),
    }
}

/// Sample means of the numeric mechanism must sit within four standard
/// errors of the true value.
fn numeric_unbiasedness(seed: u64) -> PropertyReport {
    let name = "numeric-mechanism-unbiasedness";
    let tree = SeedTree::new(seed);
    let params = match PmParams::new(1.0) {
        Ok(p) => p,
        Err(e) => return fail(name, format!("building the mechanism: {e}")),
    };
    let n = 20_000;
    let mut worst_z = 0.0f64;
    for (i, &t) in [-1.0, 0.0, 0.7].iter().enumerate() {
        let mut rng = tree.stream("verify-pm", &[i as u64]);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let y = match pm_perturb(t, &params, &mut rng) {
                Ok(y) => y,
                Err(e) => return fail(name, format!("perturbing {t}: {e}")),
            };
            sum += y;
            sumsq += y * y;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        worst_z = worst_z.max((mean - t).abs() / se.max(1e-12));
    }
    PropertyReport {
        name,
        pass: worst_z <= 4.0,
        detail: format!("worst standardized deviation {worst_z:.2} (limit 4.0)"),
    }
}

/// Central finite differences over a handful of coordinates of every
/// parameter tensor, for both fusion modes.
fn fusion_gradient_check(seed: u64) -> PropertyReport {
    let name = "fusion-gradient-check";
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("verify-grad", &[]);

    let g1 = UserGraph::new(5, vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]).expect("graph");
    let g2 = UserGraph::new(4, vec![(0, 1), (1, 2), (2, 3)]).expect("graph");
    let adj1 = NormalizedAdjacency::from_user_graph(&g1);
    let adj2 = NormalizedAdjacency::from_user_graph(&g2);
    let anchors1 = [0usize, 2];
    let anchors2 = [1usize, 3];
    let mask1 = AnchorMask::new(5, &anchors1).expect("mask");
    let mask2 = AnchorMask::new(4, &anchors2).expect("mask");
    let z1 = gaussian_matrix((5, 3), &mut rng);
    let z2 = gaussian_matrix((4, 3), &mut rng);
    let apairs = [(0usize, 1usize), (2, 3)];
    let pairs1 = g1.edges.clone();
    let pairs2 = g2.edges.clone();
    let plan1: Vec<Vec<usize>> = pairs1.iter().map(|&(u, _)| vec![(u + 2) % 5]).collect();
    let plan2: Vec<Vec<usize>> = pairs2.iter().map(|&(u, _)| vec![(u + 2) % 4]).collect();
    let inst = FusionInstance {
        adj1: &adj1,
        adj2: &adj2,
        mask1: &mask1,
        mask2: &mask2,
        z1: &z1,
        z2: &z2,
        apairs: &apairs,
        pairs1: &pairs1,
        pairs2: &pairs2,
    };

    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut check = |fd: f64, an: f64| {
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
        worst = worst.max(rel);
    };

    let hp = FusionParams::init(3, 2, 2, 0.8, Activation::Relu, &mut rng);
    let (_, hg) = match hierarchy_loss_and_grads(&hp, &inst, &plan1, &plan2) {
        Ok(v) => v,
        Err(e) => return fail(name, format!("stacked mode: {e}")),
    };
    for t in 0..4 {
        let coords = [(0, 0), (hp.tensors()[t].nrows() - 1, hp.tensors()[t].ncols() - 1)];
        for (r, c) in coords {
            let mut lo = hp.clone();
            let mut hi = hp.clone();
            lo.tensors_mut()[t][(r, c)] -= h;
            hi.tensors_mut()[t][(r, c)] += h;
            let (l_lo, _) = hierarchy_loss_and_grads(&lo, &inst, &plan1, &plan2).expect("loss");
            let (l_hi, _) = hierarchy_loss_and_grads(&hi, &inst, &plan1, &plan2).expect("loss");
            check((l_hi - l_lo) / (2.0 * h), hg.tensors()[t][(r, c)]);
        }
    }

    let ip = IterativeParams::init(3, 2, 2, Activation::Relu, &mut rng);
    let (_, ig) = match iterative_loss_and_grads(&ip, &inst, &plan1, &plan2) {
        Ok(v) => v,
        Err(e) => return fail(name, format!("flat mode: {e}")),
    };
    for t in 0..ip.tensors().len() {
        let coords = [(0, 0), (ip.tensors()[t].nrows() - 1, ip.tensors()[t].ncols() - 1)];
        for (r, c) in coords {
            let mut lo = ip.clone();
            let mut hi = ip.clone();
            lo.tensors_mut()[t][(r, c)] -= h;
            hi.tensors_mut()[t][(r, c)] += h;
            let (l_lo, _) = iterative_loss_and_grads(&lo, &inst, &plan1, &plan2).expect("loss");
            let (l_hi, _) = iterative_loss_and_grads(&hi, &inst, &plan1, &plan2).expect("loss");
            check((l_hi - l_lo) / (2.0 * h), ig.tensors()[t][(r, c)]);
        }
    }

    PropertyReport {
        name,
        pass: worst <= 1e-4,
        detail: format!("worst relative gradient error {worst:.2e} (limit 1e-4)"),
    }
}

/// The level-`l` block of the propagation stack must equal the dense
/// normalized adjacency raised to the `l`-th power times the input.
fn propagation_power_oracle(seed: u64) -> PropertyReport {
    let name = "propagation-power-oracle";
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("verify-power", &[]);
    let g = UserGraph::new(
        8,
        vec![(0, 1), (1, 2), (2, 3), (3, 0), (2, 4), (4, 5), (5, 6), (6, 7), (7, 4)],
    )
    .expect("graph");
    let adj = NormalizedAdjacency::from_user_graph(&g);
    let mask = AnchorMask::new(8, &[]).expect("mask");
    let d = 3;
    let k = 3;
    let z = gaussian_matrix((8, d), &mut rng);
    let ids = (0..8).map(|i| format!("u{i}")).collect::<Vec<_>>();
    let table = EmbeddingTable::new(ids, z.clone()).expect("table");
    let dense = adj.dense();
    let mut power = z.clone();
    let mut worst = 0.0f64;
    for level in 1..=k {
        power = dense.dot(&power);
        let mut params = FusionParams::zeros(d, d, k, 0.0, Activation::Identity);
        for c in 0..d {
            params.wu1[(level * d + c, c)] = 1.0;
        }
        let out = match hierarchy_propagate(&adj, &mask, &table, &params) {
            Ok(t) => t,
            Err(e) => return fail(name, format!("level {level}: {e}")),
        };
        let diff = out.vectors() - &power;
        let err = diff.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst = worst.max(err);
    }
    PropertyReport {
        name,
        pass: worst <= 1e-10,
        detail: format!("worst deviation from dense powers {worst:.2e} (limit 1e-10)"),
    }
}

fn fail(name: &'static str, detail: String) -> PropertyReport {
    PropertyReport { name, pass: false, detail }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_property_passes_on_a_fresh_tree() {
        for report in run_invariant_suite(0) {
            assert!(report.pass, "{}: {}", report.name, report.detail);
        }
    }

    #[test]
    fn suite_is_seed_stable() {
        let a = run_invariant_suite(42);
        let b = run_invariant_suite(42);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.detail, y.detail);
        }
    }
}
