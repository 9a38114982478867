//! Sparse symmetric propagation operator and the anchor indicator mask.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::UserGraph;
use crate::scalar::{c, Scalar};
use crate::Matrix;

/// Degree-normalized adjacency D^{-1/2} A D^{-1/2} of a simple user graph,
/// stored row-sparse. No self-loops are added; rows of isolated users are
/// zero.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl NormalizedAdjacency {
    pub fn from_user_graph(g: &UserGraph) -> Self {
        let deg = g.degrees();
        let mut rows = vec![Vec::new(); g.n];
        for &(a, b) in &g.edges {
            let w = 1.0 / ((deg[a] * deg[b]) as f64).sqrt();
            rows[a].push((b, w));
            rows[b].push((a, w));
        }
        for r in rows.iter_mut() {
            r.sort_unstable_by_key(|&(j, _)| j);
        }
        NormalizedAdjacency { n: g.n, rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Row i of the product Â·X.
    pub fn matvec<T: Scalar>(&self, x: &Array2<T>) -> Result<Array2<T>> {
        if x.nrows() != self.n {
            return Err(Error::DimMismatch(format!(
                "propagation expects {} rows, got {}",
                self.n,
                x.nrows()
            )));
        }
        let mut out = Array2::zeros((self.n, x.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out.row_mut(i).scaled_add(c::<T>(w), &x.row(j));
            }
        }
        Ok(out)
    }

    /// Dense form, for small-instance oracles.
    pub fn dense(&self) -> Matrix {
        let mut out = Array2::zeros((self.n, self.n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out[(i, j)] = w;
            }
        }
        out
    }
}

/// Diagonal 0/1 anchor indicator over one network's users.
#[derive(Debug, Clone)]
pub struct AnchorMask {
    flags: Vec<bool>,
}

impl AnchorMask {
    pub fn new(n: usize, anchor_indices: &[usize]) -> Result<Self> {
        let mut flags = vec![false; n];
        for &i in anchor_indices {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "anchor index {i} out of range 0..{n}"
                )));
            }
            flags[i] = true;
        }
        Ok(AnchorMask { flags })
    }

    pub fn n(&self) -> usize {
        self.flags.len()
    }

    pub fn is_anchor(&self, i: usize) -> bool {
        self.flags[i]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// D_anchor·X: anchor rows kept, the rest zeroed.
    pub fn keep_rows<T: Scalar>(&self, x: &Array2<T>) -> Result<Array2<T>> {
        if x.nrows() != self.flags.len() {
            return Err(Error::DimMismatch(format!(
                "mask covers {} rows, got {}",
                self.flags.len(),
                x.nrows()
            )));
        }
        let mut out = x.clone();
        for (i, &keep) in self.flags.iter().enumerate() {
            if !keep {
                out.row_mut(i).fill(T::zero());
            }
        }
        Ok(out)
    }
}
