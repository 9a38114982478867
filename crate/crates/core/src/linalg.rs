//! Dense symmetric eigendecomposition (cyclic Jacobi). Dimensions here are
//! embedding-sized (d ≤ a few hundred), where Jacobi is plenty fast and has
//! no external dependencies.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::Matrix;

/// Eigenvalues (ascending) and matching eigenvector columns of a symmetric
/// matrix. The input is checked for symmetry up to a small tolerance.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::DimMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            d,
            a.ncols()
        )));
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..d {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let mut m = a.clone();
    let mut v: Matrix = Array2::eye(d);
    // Cyclic sweeps; each rotation zeroes one off-diagonal pair.
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..d {
            for j in (i + 1)..d {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-12 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let values: Vec<f64> = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors: Matrix = Array2::zeros((d, d));
    for (col, &src) in order.iter().enumerate() {
        for r in 0..d {
            vectors[(r, col)] = v[(r, src)];
        }
    }
    Ok((values, vectors))
}
