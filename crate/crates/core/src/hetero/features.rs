//! Initial node features for the relational encoder.
//!
//! Users get their attribute vector (numeric slots as-is, categorical slots
//! one-hot); posts get the mean word vector of their tokens. The two kinds
//! occupy disjoint column ranges of one combined feature space, so a single
//! self-weight matrix per layer serves both.

use ndarray::Array2;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, SlotKind, SlotValue};
use crate::Real;

#[derive(Debug, Clone)]
pub struct NodeFeatures {
    /// n_users x user_dim.
    pub user: Array2<Real>,
    /// n_posts x post_dim.
    pub post: Array2<Real>,
}

impl NodeFeatures {
    pub fn user_dim(&self) -> usize {
        self.user.ncols()
    }

    pub fn post_dim(&self) -> usize {
        self.post.ncols()
    }

    /// Width of the combined layout: user columns then post columns.
    pub fn combined_dim(&self) -> usize {
        self.user_dim() + self.post_dim()
    }

    /// Builds features from a graph and the word vectors used for posts.
    /// Tokens missing from the table are skipped; a post with no known
    /// token keeps a zero vector.
    pub fn build(g: &HeteroGraph, word_vectors: &EmbeddingTable) -> Result<NodeFeatures> {
        let schema = g.schema();
        let user_dim: usize = schema
            .kinds
            .iter()
            .map(|k| match k {
                SlotKind::Numeric => 1,
                SlotKind::Categorical { cardinality } => *cardinality,
            })
            .sum();
        let mut user = Array2::zeros((g.n_users(), user_dim));
        for (u, av) in g.attrs().iter().enumerate() {
            let mut col = 0;
            for (slot, kind) in av.slots.iter().zip(&schema.kinds) {
                match (slot, kind) {
                    (SlotValue::Numeric(x), SlotKind::Numeric) => {
                        user[(u, col)] = *x;
                        col += 1;
                    }
                    (SlotValue::Categorical(v), SlotKind::Categorical { cardinality }) => {
                        user[(u, col + v)] = 1.0;
                        col += cardinality;
                    }
                    _ => {
                        return Err(Error::SchemaMismatch {
                            id: g.user_ids()[u].clone(),
                            msg: "attribute kind does not match schema".into(),
                        })
                    }
                }
            }
        }

        let post_dim = word_vectors.dim();
        let mut post = Array2::zeros((g.n_posts(), post_dim));
        for (p, tokens) in g.post_tokens().iter().enumerate() {
            let mut hits = 0usize;
            for tok in tokens {
                if let Some(row) = word_vectors.row_of(tok) {
                    let v = word_vectors.vectors().row(row);
                    for d in 0..post_dim {
                        post[(p, d)] += v[d];
                    }
                    hits += 1;
                }
            }
            if hits > 0 {
                for d in 0..post_dim {
                    post[(p, d)] /= hits as f64;
                }
            }
        }

        Ok(NodeFeatures { user, post })
    }

    /// Combined matrix over all nodes (users then posts), users carrying
    /// zeros in the post columns and vice versa.
    pub fn combined(&self) -> Array2<Real> {
        let (nu, du) = self.user.dim();
        let (np, dp) = self.post.dim();
        let mut h = Array2::zeros((nu + np, du + dp));
        for u in 0..nu {
            for d in 0..du {
                h[(u, d)] = self.user[(u, d)];
            }
        }
        for p in 0..np {
            for d in 0..dp {
                h[(nu + p, du + d)] = self.post[(p, d)];
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AttrLiteral, GraphBuilder, UserSpec};
    use ndarray::arr2;

    fn word_table() -> EmbeddingTable {
        EmbeddingTable::new(
            vec!["red".into(), "blue".into()],
            arr2(&[[1.0, 0.0, 2.0], [0.0, 1.0, 4.0]]),
        )
        .unwrap()
    }

    #[test]
    fn one_hot_and_numeric_layout() {
        let mut b = GraphBuilder::new();
        for (i, (x, cat)) in [(-1.0, 0usize), (1.0, 2)].into_iter().enumerate() {
            let mut attrs = std::collections::BTreeMap::new();
            attrs.insert("num".to_string(), AttrLiteral::Num(x));
            attrs.insert("cat".to_string(), AttrLiteral::Cat { value: cat, cardinality: 3 });
            b.add_user(UserSpec { id: format!("u{i}"), attrs, ..Default::default() });
        }
        let g = b.finish().unwrap();
        let f = NodeFeatures::build(&g, &word_table()).unwrap();
        // Schema order is alphabetical: cat (3 one-hot columns) then num.
        assert_eq!(f.user_dim(), 4);
        assert_eq!(f.user.row(0).to_vec(), vec![1.0, 0.0, 0.0, -1.0]);
        assert_eq!(f.user.row(1).to_vec(), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn post_features_average_known_tokens() {
        let mut b = GraphBuilder::new();
        b.add_user(UserSpec { id: "u".into(), ..Default::default() });
        b.add_post("p0", "u", vec!["red".into(), "blue".into(), "zzz".into()]);
        b.add_post("p1", "u", vec!["zzz".into()]);
        let g = b.finish().unwrap();
        let f = NodeFeatures::build(&g, &word_table()).unwrap();
        assert_eq!(f.post.row(0).to_vec(), vec![0.5, 0.5, 3.0]);
        assert_eq!(f.post.row(1).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn combined_layout_is_disjoint() {
        let mut b = GraphBuilder::new();
        let mut attrs = std::collections::BTreeMap::new();
        attrs.insert("x".to_string(), AttrLiteral::Num(0.0));
        b.add_user(UserSpec { id: "u".into(), attrs, ..Default::default() });
        b.add_post("p", "u", vec!["red".into()]);
        let g = b.finish().unwrap();
        let f = NodeFeatures::build(&g, &word_table()).unwrap();
        let h = f.combined();
        assert_eq!(h.dim(), (2, 4));
        assert_eq!(h.row(0).to_vec(), vec![0.0, 0.0, 0.0, 0.0]);
        assert_eq!(h.row(1).to_vec(), vec![0.0, 1.0, 0.0, 2.0]);
    }
}
