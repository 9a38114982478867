//! Synthetic fixtures: planted-structure instances with known ground truth,
//! used by tests, the acceptance suite, and the `synth` CLI command.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::align::AnchorSet;
use crate::embedding::EmbeddingTable;
use crate::error::Result;
use crate::graph::{AttrLiteral, GraphBuilder, HeteroGraph, UserSpec};
use crate::rng::SeedTree;
use crate::Matrix;

/// Standard normal draw (Box-Muller).
pub fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random orthogonal matrix: Gram-Schmidt on a Gaussian square matrix.
pub fn random_orthogonal(d: usize, rng: &mut impl Rng) -> Matrix {
    let mut m = Array2::zeros((d, d));
    for col in 0..d {
        loop {
            for r in 0..d {
                m[(r, col)] = gaussian(rng);
            }
            for prev in 0..col {
                let dot: f64 = (0..d).map(|r| m[(r, col)] * m[(r, prev)]).sum();
                for r in 0..d {
                    m[(r, col)] -= dot * m[(r, prev)];
                }
            }
            let norm: f64 = (0..d).map(|r| m[(r, col)] * m[(r, col)]).sum::<f64>().sqrt();
            if norm > 1e-6 {
                for r in 0..d {
                    m[(r, col)] /= norm;
                }
                break;
            }
        }
    }
    m
}

/// An anisotropic, shifted Gaussian point cloud and its image under a random
/// rotation. Row i of the target is row i of the source times the rotation,
/// so index equality is ground truth for alignment.
pub fn planted_rotation_pair(
    n: usize,
    d: usize,
    seed: u64,
) -> (EmbeddingTable, EmbeddingTable, Matrix) {
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("cloud", &[]);
    // Per-axis scales spread over a decade and a mean shift off the origin
    // make the cloud asymmetric enough that only the planted rotation maps
    // it onto the target distribution.
    let scales: Vec<f64> = (0..d)
        .map(|i| 0.4 * 10f64.powf(i as f64 / (d.max(2) - 1) as f64))
        .collect();
    let shift: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let mut src = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            src[(i, j)] = shift[j] + scales[j] * gaussian(&mut rng);
        }
    }
    let rotation = random_orthogonal(d, &mut tree.stream("rotation", &[]));
    let tgt = src.dot(&rotation);
    let z1 = EmbeddingTable::new((0..n).map(|i| format!("s{i}")).collect(), src)
        .expect("fresh ids");
    let z2 = EmbeddingTable::new((0..n).map(|i| format!("t{i}")).collect(), tgt)
        .expect("fresh ids");
    (z1, z2, rotation)
}

/// Paired community-structured networks over one population.
#[derive(Debug, Clone)]
pub struct CommunityPairConfig {
    pub users: usize,
    pub communities: usize,
    /// Fraction of users present in the ground-truth anchor set.
    pub anchor_fraction: f64,
    /// Edge probabilities: network A carries weak community signal,
    /// network B strong.
    pub intra_a: f64,
    pub inter_a: f64,
    pub intra_b: f64,
    pub inter_b: f64,
    pub posts_per_user: usize,
    pub vocab: usize,
    pub seed: u64,
}

impl Default for CommunityPairConfig {
    fn default() -> Self {
        CommunityPairConfig {
            users: 300,
            communities: 6,
            anchor_fraction: 0.5,
            intra_a: 0.05,
            inter_a: 0.02,
            intra_b: 0.35,
            inter_b: 0.005,
            posts_per_user: 1,
            vocab: 30,
            seed: 0,
        }
    }
}

fn community_of(i: usize, users: usize, communities: usize) -> usize {
    i * communities / users
}

fn sample_edges(
    users: usize,
    communities: usize,
    intra: f64,
    inter: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..users {
        for j in (i + 1)..users {
            let p = if community_of(i, users, communities) == community_of(j, users, communities) {
                intra
            } else {
                inter
            };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    edges
}

fn add_network_users(
    b: &mut GraphBuilder,
    prefix: &str,
    cfg: &CommunityPairConfig,
    genders: &[u8],
    rng: &mut ChaCha8Rng,
) {
    for i in 0..cfg.users {
        let comm = community_of(i, cfg.users, cfg.communities);
        let mut attrs = BTreeMap::new();
        attrs.insert("f0".to_string(), AttrLiteral::Num(rng.gen_range(-1.0..1.0)));
        attrs.insert("f1".to_string(), AttrLiteral::Num(rng.gen_range(-1.0..1.0)));
        b.add_user(UserSpec {
            id: format!("{prefix}{i:03}"),
            attrs,
            gender: Some(genders[i]),
            occupation: Some(comm),
            interests: Some(vec![comm]),
        });
    }
}

fn add_network_posts(
    b: &mut GraphBuilder,
    prefix: &str,
    cfg: &CommunityPairConfig,
    rng: &mut ChaCha8Rng,
) {
    let slice = (cfg.vocab / cfg.communities).max(1);
    for i in 0..cfg.users {
        let comm = community_of(i, cfg.users, cfg.communities);
        for p in 0..cfg.posts_per_user {
            let tokens: Vec<String> = (0..4)
                .map(|_| {
                    let w = if rng.gen::<f64>() < 0.7 {
                        (comm * slice + rng.gen_range(0..slice)) % cfg.vocab
                    } else {
                        rng.gen_range(0..cfg.vocab)
                    };
                    format!("w{w:03}")
                })
                .collect();
            b.add_post(format!("{prefix}p{i:03}x{p}"), format!("{prefix}{i:03}"), tokens);
        }
    }
}

/// Two networks over the same population with community-dependent structure
/// and a ground-truth anchor set covering a fraction of the users. Interest
/// and occupation labels equal the community; gender is independent noise.
pub fn community_pair(cfg: &CommunityPairConfig) -> Result<(HeteroGraph, HeteroGraph, AnchorSet)> {
    let tree = SeedTree::new(cfg.seed);
    let genders: Vec<u8> = {
        let mut rng = tree.stream("genders", &[]);
        (0..cfg.users).map(|_| rng.gen_range(0..2u8)).collect()
    };

    let mut graphs = Vec::with_capacity(2);
    for (prefix, intra, inter) in [("a", cfg.intra_a, cfg.inter_a), ("b", cfg.intra_b, cfg.inter_b)]
    {
        let mut b = GraphBuilder::new();
        let mut rng = tree.stream("attrs", &[prefix.as_bytes()[0] as u64]);
        add_network_users(&mut b, prefix, cfg, &genders, &mut rng);
        let mut rng = tree.stream("posts", &[prefix.as_bytes()[0] as u64]);
        add_network_posts(&mut b, prefix, cfg, &mut rng);
        let mut rng = tree.stream("edges", &[prefix.as_bytes()[0] as u64]);
        for (i, j) in sample_edges(cfg.users, cfg.communities, intra, inter, &mut rng) {
            b.add_friendship(format!("{prefix}{i:03}"), format!("{prefix}{j:03}"));
        }
        graphs.push(b.finish()?);
    }
    let g_b = graphs.pop().expect("two graphs");
    let g_a = graphs.pop().expect("two graphs");

    let n_anchor = (cfg.anchor_fraction * cfg.users as f64).round() as usize;
    let mut order: Vec<usize> = (0..cfg.users).collect();
    crate::graph::shuffle(&mut order, &mut tree.stream("anchors", &[]));
    let mut chosen: Vec<usize> = order.into_iter().take(n_anchor).collect();
    chosen.sort_unstable();
    let anchors = AnchorSet::new(
        chosen
            .into_iter()
            .map(|i| (format!("a{i:03}"), format!("b{i:03}"), 1.0))
            .collect(),
    )?;
    Ok((g_a, g_b, anchors))
}

/// A single network whose gender labels are exposed through one attribute
/// coordinate (+1 for gender 1, -1 for gender 0). Edges and the second
/// attribute are independent noise, so sanitizing the attributes is the
/// only thing standing between an attacker and the label.
pub fn gender_planted_graph(users: usize, seed: u64) -> Result<HeteroGraph> {
    let tree = SeedTree::new(seed);
    let mut rng = tree.stream("users", &[]);
    let mut b = GraphBuilder::new();
    for i in 0..users {
        let gender = rng.gen_range(0..2u8);
        let mut attrs = BTreeMap::new();
        attrs.insert(
            "signal".to_string(),
            AttrLiteral::Num(if gender == 1 { 1.0 } else { -1.0 }),
        );
        attrs.insert("noise".to_string(), AttrLiteral::Num(rng.gen_range(-1.0..1.0)));
        b.add_user(UserSpec {
            id: format!("u{i:03}"),
            attrs,
            gender: Some(gender),
            occupation: Some(i % 3),
            interests: Some(vec![i % 2]),
        });
    }
    let mut rng = tree.stream("posts", &[]);
    for i in 0..users {
        let tokens: Vec<String> =
            (0..3).map(|_| format!("w{:02}", rng.gen_range(0..15))).collect();
        b.add_post(format!("p{i:03}"), format!("u{i:03}"), tokens);
    }
    let mut rng = tree.stream("edges", &[]);
    let p = 8.0 / users as f64;
    for i in 0..users {
        for j in (i + 1)..users {
            if rng.gen::<f64>() < p {
                b.add_friendship(format!("u{i:03}"), format!("u{j:03}"));
            }
        }
    }
    b.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_is_orthogonal_and_planted() {
        let (z1, z2, r) = planted_rotation_pair(50, 8, 3);
        let mut rtr = r.t().dot(&r);
        for i in 0..8 {
            rtr[(i, i)] -= 1.0;
        }
        let gap: f64 = rtr.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(gap < 1e-10, "R not orthogonal, gap {gap}");
        let mapped = z1.vectors().dot(&r);
        for (a, b) in mapped.iter().zip(z2.vectors().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cloud_axes_have_distinct_scales() {
        let (z1, _, _) = planted_rotation_pair(400, 6, 9);
        let v = z1.vectors();
        let var = |j: usize| {
            let mean: f64 = v.column(j).sum() / v.nrows() as f64;
            v.column(j).iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.nrows() as f64
        };
        assert!(var(5) > 10.0 * var(0), "axis variances {} vs {}", var(5), var(0));
    }

    #[test]
    fn community_pair_is_consistent() {
        let cfg = CommunityPairConfig { users: 60, communities: 3, ..Default::default() };
        let (a, b, anchors) = community_pair(&cfg).unwrap();
        assert_eq!(a.n_users(), 60);
        assert_eq!(b.n_users(), 60);
        assert_eq!(anchors.len(), 30);
        for (s, t, _) in anchors.pairs() {
            assert_eq!(s[1..], t[1..], "anchor ids pair the same person");
            assert!(a.user_index(s).is_some());
            assert!(b.user_index(t).is_some());
        }
        // Community labels match on both sides.
        for i in 0..60 {
            let ia = a.user_index(&format!("a{i:03}")).unwrap();
            let ib = b.user_index(&format!("b{i:03}")).unwrap();
            assert_eq!(a.occupation()[ia], b.occupation()[ib]);
            assert_eq!(a.interests()[ia], b.interests()[ib]);
        }
        // Network B must carry much stronger community structure than A.
        let frac_intra = |g: &HeteroGraph, prefix: char| {
            let intra = g
                .friendships()
                .iter()
                .filter(|&&(x, y)| {
                    let cx = g.user_ids()[x][1..].parse::<usize>().unwrap() * 3 / 60;
                    let cy = g.user_ids()[y][1..].parse::<usize>().unwrap() * 3 / 60;
                    assert!(g.user_ids()[x].starts_with(prefix));
                    cx == cy
                })
                .count();
            intra as f64 / g.friendships().len() as f64
        };
        assert!(frac_intra(&b, 'b') > 0.9);
        assert!(frac_intra(&a, 'a') < 0.7);
    }

    #[test]
    fn gender_graph_exposes_the_signal_coordinate() {
        let g = gender_planted_graph(40, 1).unwrap();
        let schema = g.schema();
        let slot = schema.names.iter().position(|n| n == "signal").unwrap();
        for (u, av) in g.attrs().iter().enumerate() {
            let crate::graph::SlotValue::Numeric(x) = av.slots[slot] else {
                panic!("signal slot must be numeric")
            };
            let expect = if g.gender()[u] == Some(1) { 1.0 } else { -1.0 };
            assert_eq!(x, expect);
        }
        assert!(!g.friendships().is_empty());
        assert_eq!(g.n_posts(), 40);
    }
}
