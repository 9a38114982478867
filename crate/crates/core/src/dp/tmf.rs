//! Edge perturbation: a noisy edge count plus a per-cell threshold filter.
//!
//! The budget is split 10%/90%. The first share buys a Laplace-noised edge
//! count m̂; the second buys the per-cell filter, whose threshold θ is solved
//! so the expected output size hits m̂. Zero cells are never enumerated:
//! 0→1 flips come from geometric skipping across the upper-triangle index
//! space, discarding hits that land on existing edges.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::UserGraph;
use crate::rng::sample_laplace;

/// Per-run diagnostics, recorded in the sanitizer's provenance sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TmfDiagnostics {
    pub n: usize,
    pub input_edges: usize,
    pub noisy_count: u64,
    pub theta: f64,
    pub p_keep: f64,
    pub p_flip: f64,
    pub output_edges: usize,
}

/// Pr[Laplace(1/eps) > x].
fn laplace_tail(x: f64, eps: f64) -> f64 {
    if x >= 0.0 {
        0.5 * (-x * eps).exp()
    } else {
        1.0 - 0.5 * (x * eps).exp()
    }
}

/// Expected output edge count at threshold `theta`:
/// `m * p1 + (N - m) * p0` with `p1 = Pr[1 + Lap > θ]`, `p0 = Pr[Lap > θ]`.
pub fn expected_count(theta: f64, m: u64, big_n: u64, eps2: f64) -> f64 {
    let p1 = laplace_tail(theta - 1.0, eps2);
    let p0 = laplace_tail(theta, eps2);
    m as f64 * p1 + (big_n - m) as f64 * p0
}

/// Solves `expected_count(θ) = m_hat` by bisection. The expectation is
/// continuous and strictly decreasing in θ, from ≈N at the low end of the
/// bracket to ≈0 at the high end, so the root is unique inside it.
pub fn solve_theta(m: u64, big_n: u64, m_hat: u64, eps2: f64) -> f64 {
    let mut lo = -1.0 - 50.0 / eps2;
    let mut hi = 1.0 + 50.0 / eps2;
    let target = m_hat as f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_count(mid, m, big_n, eps2) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (expected_count(0.5 * (lo + hi), m, big_n, eps2) - target).abs() <= 1e-9 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Maps a linear upper-triangle index `k` to the pair (i, j), i < j, under
/// row-major order for an n-node graph.
fn decode_pair(k: u64, n: u64) -> (usize, usize) {
    // Row i occupies offsets [off(i), off(i+1)) with off(i) = i*(2n-i-1)/2.
    let off = |i: u64| i * (2 * n - i - 1) / 2;
    let nf = n as f64;
    let mut i = (nf - 0.5 - ((nf - 0.5) * (nf - 0.5) - 2.0 * k as f64).max(0.0).sqrt()) as u64;
    i = i.min(n - 2);
    while i + 1 < n - 1 && off(i + 1) <= k {
        i += 1;
    }
    while i > 0 && off(i) > k {
        i -= 1;
    }
    let j = i + 1 + (k - off(i));
    (i as usize, j as usize)
}

/// Applies the edge mechanism at budget `eps_g` and returns the perturbed
/// graph together with the run's diagnostics.
pub fn perturb_edges<R: Rng>(
    g: &UserGraph,
    eps_g: f64,
    rng: &mut R,
) -> Result<(UserGraph, TmfDiagnostics)> {
    if !(eps_g > 0.0) || !eps_g.is_finite() {
        return Err(Error::InvalidArgument(format!("edge budget {eps_g} must be positive")));
    }
    let n = g.n as u64;
    let big_n = if n < 2 { 0 } else { n * (n - 1) / 2 };
    if big_n == 0 {
        let diag = TmfDiagnostics {
            n: g.n,
            input_edges: 0,
            noisy_count: 0,
            theta: 0.0,
            p_keep: 0.0,
            p_flip: 0.0,
            output_edges: 0,
        };
        return Ok((UserGraph { n: g.n, edges: Vec::new() }, diag));
    }

    let eps1 = 0.1 * eps_g;
    let eps2 = 0.9 * eps_g;
    let m = g.n_edges() as u64;

    let noise = sample_laplace(rng, 1.0 / eps1);
    let m_hat = ((m as f64 + noise).round().max(0.0) as u64).min(big_n);

    let theta = solve_theta(m, big_n, m_hat, eps2);
    let p_keep = laplace_tail(theta - 1.0, eps2);
    let p_flip = laplace_tail(theta, eps2);

    let mut edges: Vec<(usize, usize)> =
        g.edges.iter().copied().filter(|_| rng.gen::<f64>() < p_keep).collect();

    // Geometric skipping visits exactly the cells whose independent
    // Bernoulli(p_flip) mark came up; hits on existing edges are discarded
    // (those cells were handled by the keep pass above).
    let hit = |pos: u64, edges: &mut Vec<(usize, usize)>| {
        let (i, j) = decode_pair(pos, n);
        if !g.has_edge(i, j) {
            edges.push((i, j));
        }
    };
    let q = 1.0 - p_flip;
    if q == 0.0 {
        // p_flip rounded up to 1: the filter passes every cell.
        for pos in 0..big_n {
            hit(pos, &mut edges);
        }
    } else if p_flip > 0.0 && q.ln() < 0.0 {
        // When p_flip is below ~1e-17, q rounds to 1 and ln(q) to 0; the
        // expected gap then exceeds any N and no cell is visited.
        let ln_q = q.ln();
        let mut pos: u64 = 0;
        while pos < big_n {
            let u = 1.0 - rng.gen::<f64>();
            let gap = (u.ln() / ln_q).floor();
            if !(gap < (big_n - pos) as f64) {
                break;
            }
            pos += gap as u64;
            hit(pos, &mut edges);
            pos += 1;
        }
    }

    edges.sort_unstable();
    let out = UserGraph { n: g.n, edges };
    let diag = TmfDiagnostics {
        n: g.n,
        input_edges: m as usize,
        noisy_count: m_hat,
        theta,
        p_keep,
        p_flip,
        output_edges: out.n_edges(),
    };
    Ok((out, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    fn random_graph(n: usize, m: usize, seed: u64) -> UserGraph {
        let mut rng = SeedTree::new(seed).stream("fixture", &[]);
        let mut edges = std::collections::BTreeSet::new();
        while edges.len() < m {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        UserGraph::new(n, edges.into_iter().collect()).unwrap()
    }

    #[test]
    fn decode_pair_is_inverse_of_linear_index() {
        for n in [2u64, 3, 5, 17, 101] {
            let mut k = 0u64;
            for i in 0..n as usize {
                for j in i + 1..n as usize {
                    assert_eq!(decode_pair(k, n), (i, j), "n={n} k={k}");
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn theta_matches_closed_form_in_upper_regime() {
        // With θ ≥ 1 both tails are pure exponentials, so
        // θ = ln(0.5 (m e^{ε₂} + N − m) / m̂) / ε₂ in closed form.
        let (m, big_n, m_hat, eps2) = (100u64, 780u64, 50u64, 0.9f64);
        let closed = (0.5 * (m as f64 * eps2.exp() + (big_n - m) as f64) / m_hat as f64).ln() / eps2;
        assert!(closed >= 1.0);
        let solved = solve_theta(m, big_n, m_hat, eps2);
        assert!((solved - closed).abs() < 1e-5, "solved {solved} closed {closed}");
    }

    #[test]
    fn solver_hits_target_within_tolerance() {
        for (m, big_n, m_hat, eps2) in
            [(100u64, 780u64, 300u64, 0.9), (0, 4950, 12, 9.0), (200, 4950, 200, 9.0)]
        {
            let theta = solve_theta(m, big_n, m_hat, eps2);
            let e = expected_count(theta, m, big_n, eps2);
            assert!((e - m_hat as f64).abs() <= 1e-6, "E {e} target {m_hat}");
        }
    }

    #[test]
    fn huge_budget_is_identity() {
        let g = random_graph(60, 150, 7);
        let mut rng = SeedTree::new(1).stream("tmf-id", &[]);
        let (out, diag) = perturb_edges(&g, 1e4, &mut rng).unwrap();
        assert_eq!(out.edges, g.edges);
        assert_eq!(diag.noisy_count, 150);
    }

    #[test]
    fn empty_graph_stays_empty_under_huge_budget() {
        let g = UserGraph::new(50, vec![]).unwrap();
        let mut rng = SeedTree::new(2).stream("tmf-empty", &[]);
        let (out, _) = perturb_edges(&g, 1e4, &mut rng).unwrap();
        assert!(out.edges.is_empty());
    }

    #[test]
    fn single_node_graph_is_fine() {
        let g = UserGraph::new(1, vec![]).unwrap();
        let mut rng = SeedTree::new(3).stream("tmf-one", &[]);
        let (out, _) = perturb_edges(&g, 1.0, &mut rng).unwrap();
        assert_eq!(out.n, 1);
    }

    #[test]
    fn mean_output_count_matches_input_count() {
        // Mean over trials of |E'| estimates m: m̂ is centered on m and the
        // filter is calibrated to m̂.
        let g = random_graph(100, 200, 11);
        let trials = 1000;
        let mut counts = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut rng = SeedTree::new(1234).stream("tmf-mc", &[t as u64]);
            let (out, _) = perturb_edges(&g, 10.0, &mut rng).unwrap();
            counts.push(out.n_edges() as f64);
        }
        let mean = counts.iter().sum::<f64>() / trials as f64;
        let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!(
            (mean - 200.0).abs() <= 3.0 * se,
            "mean {mean}, se {se}"
        );
    }

    #[test]
    fn output_is_always_simple_and_sorted() {
        let g = random_graph(40, 80, 5);
        for seed in 0..20u64 {
            let mut rng = SeedTree::new(seed).stream("tmf-simple", &[]);
            let (out, _) = perturb_edges(&g, 1.0, &mut rng).unwrap();
            // Re-validate through the checked constructor.
            let revalidated = UserGraph::new(out.n, out.edges.clone()).unwrap();
            assert_eq!(revalidated.edges, out.edges);
        }
    }

    #[test]
    fn same_stream_same_output() {
        let g = random_graph(50, 100, 9);
        let run = |seed: u64| {
            let mut rng = SeedTree::new(seed).stream("tmf-det", &[]);
            perturb_edges(&g, 2.0, &mut rng).unwrap().0
        };
        assert_eq!(run(4).edges, run(4).edges);
        assert!(run(4).edges != run(5).edges);
    }

    #[test]
    fn rejects_bad_budget() {
        let g = random_graph(10, 5, 1);
        let mut rng = SeedTree::new(0).stream("tmf-bad", &[]);
        assert!(perturb_edges(&g, 0.0, &mut rng).is_err());
        assert!(perturb_edges(&g, -3.0, &mut rng).is_err());
    }
}
