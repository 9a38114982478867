//! Local differential privacy mechanisms for graph sanitization.
//!
//! Three independent mechanisms cover the three data types: the Piecewise
//! Mechanism and randomized response for attribute slots, a count-calibrated
//! threshold filter for friendship edges, and distance-weighted word
//! replacement for post text. [`sanitize_graph`] composes them under one
//! seed; everything else about the graph (ids, authorship, label fields) is
//! preserved bit-identically.

pub mod pm;
pub mod text;
pub mod tmf;
pub mod tmr;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{extract_user_graph, HeteroGraph};
use crate::rng::SeedTree;

pub use pm::{perturb_attributes, pm_perturb, rr_perturb, rr_probabilities, PmParams};
pub use text::{sanitize_text, TextMechanism};
pub use tmf::{perturb_edges, solve_theta, TmfDiagnostics};
pub use tmr::{allocate_budgets, compute_tmr, TmrEntry, TmrReport};

/// Per-mechanism privacy budgets; all three strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub eps_a: f64,
    pub eps_g: f64,
    pub eps_t: f64,
}

impl PrivacyBudget {
    pub fn new(eps_a: f64, eps_g: f64, eps_t: f64) -> Result<Self> {
        let b = PrivacyBudget { eps_a, eps_g, eps_t };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps_a", self.eps_a), ("eps_g", self.eps_g), ("eps_t", self.eps_t)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} = {v} must be positive and finite")));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.eps_a + self.eps_g + self.eps_t
    }
}

/// What one sanitization run consumed and decided; serialized into the
/// provenance sidecar next to the sanitized graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SanitizeDiagnostics {
    pub eps_a: f64,
    pub eps_g: f64,
    pub eps_t: f64,
    pub per_slot_eps: f64,
    pub edges: TmfDiagnostics,
    pub vocab_size: usize,
    pub tokens: usize,
    pub oov_tokens: usize,
}

/// Applies all three mechanisms independently. Attribute vectors, the
/// friendship edge set, and every post's tokens are replaced; user ids,
/// post ids, authorship, and the label fields pass through untouched.
/// Numeric outputs lie in the mechanism range `[-C, C]`, not `[-1, 1]`;
/// reloading the saved graph (or calling `renormalize_numeric`) restores
/// the unit interval.
///
/// Each user, the edge set, and each token position draws its own
/// substream of `seed`, so output is reproducible and independent of
/// traversal order.
pub fn sanitize_graph(
    g: &HeteroGraph,
    b: &PrivacyBudget,
    emb: &EmbeddingTable,
    seed: u64,
) -> Result<(HeteroGraph, SanitizeDiagnostics)> {
    b.validate()?;
    let tree = SeedTree::new(seed);
    let mut out = g.clone();

    let mut attrs = Vec::with_capacity(g.n_users());
    for u in 0..g.n_users() {
        let mut rng = tree.stream("attrs", &[u as u64]);
        attrs.push(perturb_attributes(&g.attrs()[u], g.schema(), b.eps_a, &mut rng)?);
    }
    out.set_attrs(attrs);

    let mut edge_rng = tree.stream("edges", &[]);
    let (user_graph, edge_diag) = perturb_edges(&extract_user_graph(g), b.eps_g, &mut edge_rng)?;
    out.set_friendships(user_graph.edges);

    let total_tokens: usize = g.post_tokens().iter().map(Vec::len).sum();
    let mut oov = 0usize;
    if total_tokens > 0 {
        let mut mech = TextMechanism::new(emb, b.eps_t)?;
        let mut new_tokens = Vec::with_capacity(g.n_posts());
        for (p, tokens) in g.post_tokens().iter().enumerate() {
            let mut sanitized = Vec::with_capacity(tokens.len());
            for (i, tok) in tokens.iter().enumerate() {
                let mut rng = tree.stream("text", &[p as u64, i as u64]);
                let (w, was_oov) = mech.replace_token(tok, &mut rng);
                oov += was_oov as usize;
                sanitized.push(w);
            }
            new_tokens.push(sanitized);
        }
        out.post_tokens = new_tokens;
    }

    let per_slot_eps =
        if g.schema().is_empty() { b.eps_a } else { b.eps_a / g.schema().len() as f64 };
    let diag = SanitizeDiagnostics {
        eps_a: b.eps_a,
        eps_g: b.eps_g,
        eps_t: b.eps_t,
        per_slot_eps,
        edges: edge_diag,
        vocab_size: emb.len(),
        tokens: total_tokens,
        oov_tokens: oov,
    };
    Ok((out, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AttrLiteral, GraphBuilder, SlotValue, UserSpec};
    use ndarray::Array2;

    fn fixture() -> HeteroGraph {
        let mut b = GraphBuilder::new();
        for i in 0..12usize {
            let mut attrs = std::collections::BTreeMap::new();
            attrs.insert("score".to_string(), AttrLiteral::Num(i as f64));
            attrs.insert("group".to_string(), AttrLiteral::Cat { value: i % 3, cardinality: 3 });
            b.add_user(UserSpec {
                id: format!("u{i}"),
                attrs,
                gender: Some((i % 2) as u8),
                occupation: Some(i % 4),
                interests: Some(vec![i % 5]),
            });
        }
        for i in 0..12usize {
            b.add_post(
                format!("p{i}"),
                format!("u{i}"),
                vec!["alpha".into(), "beta".into(), "gamma".into()],
            );
        }
        for i in 0..11usize {
            b.add_friendship(format!("u{i}"), format!("u{}", i + 1));
        }
        b.finish().unwrap()
    }

    fn vocab() -> EmbeddingTable {
        let words = ["alpha", "beta", "gamma", "delta"];
        let flat = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        EmbeddingTable::new(
            words.iter().map(|w| w.to_string()).collect(),
            Array2::from_shape_vec((4, 2), flat).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_fields_survive_bit_identical() {
        let g = fixture();
        let b = PrivacyBudget::new(1.0, 1.0, 1.0).unwrap();
        let (s, _) = sanitize_graph(&g, &b, &vocab(), 42).unwrap();
        assert_eq!(s.user_ids(), g.user_ids());
        assert_eq!(s.post_ids(), g.post_ids());
        assert_eq!(s.post_author(), g.post_author());
        assert_eq!(s.interests(), g.interests());
        assert_eq!(s.gender(), g.gender());
        assert_eq!(s.occupation(), g.occupation());
        assert_eq!(s.schema(), g.schema());
    }

    #[test]
    fn same_seed_same_output_different_seed_differs() {
        let g = fixture();
        let b = PrivacyBudget::new(0.5, 0.5, 0.5).unwrap();
        let (s1, _) = sanitize_graph(&g, &b, &vocab(), 7).unwrap();
        let (s2, _) = sanitize_graph(&g, &b, &vocab(), 7).unwrap();
        assert!(s1.content_eq(&s2));
        let (s3, _) = sanitize_graph(&g, &b, &vocab(), 8).unwrap();
        assert!(!s1.content_eq(&s3));
    }

    #[test]
    fn huge_budgets_approach_identity() {
        let g = fixture();
        let b = PrivacyBudget::new(1e8, 1e8, 1e8).unwrap();
        let (s, diag) = sanitize_graph(&g, &b, &vocab(), 3).unwrap();
        assert_eq!(s.friendships(), g.friendships());
        assert_eq!(s.post_tokens(), g.post_tokens());
        for (a, b2) in g.attrs().iter().zip(s.attrs()) {
            for (x, y) in a.slots.iter().zip(&b2.slots) {
                match (x, y) {
                    (SlotValue::Numeric(p), SlotValue::Numeric(q)) => {
                        assert!((p - q).abs() < 1e-3, "{p} vs {q}")
                    }
                    (SlotValue::Categorical(p), SlotValue::Categorical(q)) => assert_eq!(p, q),
                    _ => panic!("kind changed"),
                }
            }
        }
        assert_eq!(diag.tokens, 36);
        assert_eq!(diag.oov_tokens, 0);
    }

    #[test]
    fn diagnostics_report_exact_budgets() {
        let g = fixture();
        let b = PrivacyBudget::new(5.0, 10.0, 7.5).unwrap();
        let (_, diag) = sanitize_graph(&g, &b, &vocab(), 1).unwrap();
        assert_eq!(diag.eps_a, 5.0);
        assert_eq!(diag.eps_g, 10.0);
        assert_eq!(diag.eps_t, 7.5);
        assert_eq!(diag.per_slot_eps, 2.5);
        assert_eq!(diag.vocab_size, 4);
    }

    #[test]
    fn invalid_budget_rejected() {
        assert!(PrivacyBudget::new(0.0, 1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, -1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn renormalize_restores_unit_interval() {
        let g = fixture();
        let b = PrivacyBudget::new(0.5, 1.0, 1.0).unwrap();
        let (mut s, _) = sanitize_graph(&g, &b, &vocab(), 11).unwrap();
        s.renormalize_numeric();
        for a in s.attrs() {
            for v in &a.slots {
                if let SlotValue::Numeric(x) = v {
                    assert!((-1.0..=1.0).contains(x));
                }
            }
        }
    }
}
