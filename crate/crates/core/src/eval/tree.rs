//! CART decision tree with Gini splits, grown greedily to a depth cap.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: 10, min_leaf: 2 }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_leaf == 0 {
            return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: Real, left: usize, right: usize },
}

/// Fitted classification tree. Deterministic: ties between splits resolve
/// to the lowest feature index and threshold, ties between leaf classes to
/// the lowest class index.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_classes: usize,
}

fn gini(counts: &[usize], total: usize) -> Real {
    if total == 0 {
        return 0.0;
    }
    let t = total as Real;
    1.0 - counts.iter().map(|&c| (c as Real / t).powi(2)).sum::<Real>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

struct Grower<'a> {
    x: &'a Array2<Real>,
    y: &'a [usize],
    n_classes: usize,
    cfg: &'a TreeConfig,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: Real,
    score: Real,
}

impl Grower<'_> {
    fn class_counts(&self, idx: &[usize]) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_classes];
        for &i in idx {
            counts[self.y[i]] += 1;
        }
        counts
    }

    /// Scans every feature, sweeping sorted sample values with running class
    /// counts; candidate thresholds are midpoints of adjacent distinct values.
    fn best_split(&self, idx: &[usize], parent_gini: Real) -> Option<BestSplit> {
        let n = idx.len();
        let mut best: Option<BestSplit> = None;
        for f in 0..self.x.ncols() {
            let mut order: Vec<usize> = idx.to_vec();
            order.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]));
            let mut left = vec![0usize; self.n_classes];
            let mut right = self.class_counts(idx);
            for pos in 1..n {
                let prev = order[pos - 1];
                left[self.y[prev]] += 1;
                right[self.y[prev]] -= 1;
                let (lo, hi) = (self.x[(prev, f)], self.x[(order[pos], f)]);
                if lo == hi {
                    continue;
                }
                if pos < self.cfg.min_leaf || n - pos < self.cfg.min_leaf {
                    continue;
                }
                let score = (pos as Real * gini(&left, pos)
                    + (n - pos) as Real * gini(&right, n - pos))
                    / n as Real;
                if score + 1e-12 < parent_gini
                    && best.as_ref().is_none_or(|b| score < b.score)
                {
                    best = Some(BestSplit { feature: f, threshold: (lo + hi) / 2.0, score });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.class_counts(&idx);
        let parent = gini(&counts, idx.len());
        let unsplittable = depth >= self.cfg.max_depth
            || parent == 0.0
            || idx.len() < 2 * self.cfg.min_leaf;
        let split = if unsplittable { None } else { self.best_split(&idx, parent) };
        match split {
            None => {
                self.nodes.push(Node::Leaf { class: majority(&counts) });
                self.nodes.len() - 1
            }
            Some(s) => {
                let (l_idx, r_idx): (Vec<usize>, Vec<usize>) =
                    idx.into_iter().partition(|&i| self.x[(i, s.feature)] <= s.threshold);
                let slot = self.nodes.len();
                self.nodes.push(Node::Leaf { class: 0 });
                let left = self.grow(l_idx, depth + 1);
                let right = self.grow(r_idx, depth + 1);
                self.nodes[slot] =
                    Node::Split { feature: s.feature, threshold: s.threshold, left, right };
                slot
            }
        }
    }
}

impl DecisionTree {
    pub fn fit(x: &Array2<Real>, y: &[usize], n_classes: usize, cfg: &TreeConfig) -> Result<Self> {
        cfg.validate()?;
        if x.nrows() != y.len() {
            return Err(Error::DimMismatch(format!(
                "{} feature rows for {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument("cannot fit a tree on no samples".into()));
        }
        if n_classes == 0 || y.iter().any(|&l| l >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "labels must lie below n_classes = {n_classes}"
            )));
        }
        let mut grower = Grower { x, y, n_classes, cfg, nodes: Vec::new() };
        let root = grower.grow((0..y.len()).collect(), 0);
        debug_assert_eq!(root, 0);
        Ok(DecisionTree { nodes: grower.nodes, n_classes })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn predict_one(&self, row: ArrayView1<'_, Real>) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: &Array2<Real>) -> Vec<usize> {
        x.rows().into_iter().map(|r| self.predict_one(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_hot_features_are_separated_by_depth_one() {
        let x = arr2(&[
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]);
        let y = vec![0, 1, 2, 0, 1, 2];
        let tree =
            DecisionTree::fit(&x, &y, 3, &TreeConfig { max_depth: 10, min_leaf: 1 }).unwrap();
        assert_eq!(tree.predict(&x), y);
    }

    #[test]
    fn unbounded_depth_memorizes_consistent_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 40;
        let mut x = Array2::zeros((n, 3));
        for v in x.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let cfg = TreeConfig { max_depth: usize::MAX, min_leaf: 1 };
        let tree = DecisionTree::fit(&x, &y, 4, &cfg).unwrap();
        assert_eq!(tree.predict(&x), y, "training set must be memorized");
    }

    #[test]
    fn zero_depth_predicts_the_majority_class() {
        let x = arr2(&[[0.0], [1.0], [2.0], [3.0]]);
        let y = vec![1, 1, 1, 0];
        let tree = DecisionTree::fit(&x, &y, 2, &TreeConfig { max_depth: 0, min_leaf: 1 }).unwrap();
        assert_eq!(tree.predict(&x), vec![1, 1, 1, 1]);
    }

    #[test]
    fn min_leaf_blocks_thin_splits() {
        let x = arr2(&[[0.0], [1.0], [2.0], [3.0]]);
        let y = vec![0, 0, 0, 1];
        // A split isolating the last sample needs a 1-sample leaf.
        let tree = DecisionTree::fit(&x, &y, 2, &TreeConfig { max_depth: 10, min_leaf: 2 }).unwrap();
        assert_eq!(tree.predict(&x), vec![0, 0, 0, 0]);
    }

    #[test]
    fn fitting_twice_grows_the_same_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = Array2::zeros((25, 4));
        for v in x.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let y: Vec<usize> = (0..25).map(|_| rng.gen_range(0..3)).collect();
        let cfg = TreeConfig::default();
        let a = DecisionTree::fit(&x, &y, 3, &cfg).unwrap();
        let b = DecisionTree::fit(&x, &y, 3, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let x = arr2(&[[0.0], [1.0]]);
        assert!(DecisionTree::fit(&x, &[0], 1, &TreeConfig::default()).is_err());
        assert!(DecisionTree::fit(&x, &[0, 3], 2, &TreeConfig::default()).is_err());
        let empty = Array2::zeros((0, 1));
        assert!(DecisionTree::fit(&empty, &[], 2, &TreeConfig::default()).is_err());
    }
}
