//! Cross-domain similarity local scaling.
//!
//! CSLS(s, t) = 2 cos(s, t) - r_T(s) - r_S(t), where r_T(s) is the mean
//! cosine of s to its K nearest target rows and r_S(t) the symmetric hub
//! penalty on the target side. Zero vectors get cosine 0 to everything.

use ndarray::Array2;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::{Matrix, Real};

/// Dense cosine matrix between two tables, zero rows contributing zeros.
pub fn cosine_matrix(s: &EmbeddingTable, t: &EmbeddingTable) -> Result<Matrix> {
    if s.dim() != t.dim() {
        return Err(Error::DimMismatch(format!(
            "cosine between {}-d and {}-d tables",
            s.dim(),
            t.dim()
        )));
    }
    let sn = s.length_normalized();
    let tn = t.length_normalized();
    Ok(sn.vectors().dot(&tn.vectors().t()))
}

fn mean_top_k(row: &[Real], k: usize) -> Real {
    let mut v = row.to_vec();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    v[..k].iter().sum::<Real>() / k as Real
}

/// Full CSLS matrix, source rows by target rows.
pub fn csls(s: &EmbeddingTable, t: &EmbeddingTable, k: usize) -> Result<Matrix> {
    if s.is_empty() || t.is_empty() {
        return Err(Error::InvalidArgument("csls needs non-empty tables".into()));
    }
    if k == 0 || k > t.len() || k > s.len() {
        return Err(Error::InvalidArgument(format!(
            "csls neighborhood k={k} must satisfy 1 <= k <= min({}, {})",
            s.len(),
            t.len()
        )));
    }
    let cos = cosine_matrix(s, t)?;
    let r_t: Vec<Real> = cos
        .rows()
        .into_iter()
        .map(|row| mean_top_k(&row.to_vec(), k))
        .collect();
    let r_s: Vec<Real> = (0..t.len())
        .map(|j| mean_top_k(&cos.column(j).to_vec(), k))
        .collect();
    let mut out = Array2::zeros(cos.dim());
    for i in 0..s.len() {
        for j in 0..t.len() {
            out[(i, j)] = 2.0 * cos[(i, j)] - r_t[i] - r_s[j];
        }
    }
    Ok(out)
}

/// Row argmax with first-wins tie breaking.
pub(crate) fn argmax(row: &[Real]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn table(ids: &[&str], rows: Array2<Real>) -> EmbeddingTable {
        EmbeddingTable::new(ids.iter().map(|s| s.to_string()).collect(), rows).unwrap()
    }

    #[test]
    fn orthonormal_pair_hand_values() {
        let s = table(&["a", "b"], arr2(&[[1.0, 0.0], [0.0, 1.0]]));
        let m = csls(&s, &s, 1).unwrap();
        assert!((m[(0, 0)] - 0.0).abs() < 1e-12);
        assert!((m[(1, 1)] - 0.0).abs() < 1e-12);
        assert!((m[(0, 1)] - -2.0).abs() < 1e-12);
        assert!((m[(1, 0)] - -2.0).abs() < 1e-12);
        assert_eq!(argmax(&m.row(0).to_vec()), 0);
        assert_eq!(argmax(&m.row(1).to_vec()), 1);
    }

    #[test]
    fn row_argmax_ignores_source_side_penalty() {
        // r_T(s) is constant within a row, so the argmax must agree with
        // the argmax of 2 cos - r_S alone.
        let mut rng = crate::rng::SeedTree::new(31).stream("csls-prop", &[]);
        let mut rand_table = |n: usize, tag: &str| {
            let mut m = Array2::zeros((n, 4));
            for v in m.iter_mut() {
                *v = rand::Rng::gen_range(&mut rng, -1.0..1.0);
            }
            EmbeddingTable::new((0..n).map(|i| format!("{tag}{i}")).collect(), m).unwrap()
        };
        let s = rand_table(7, "s");
        let t = rand_table(9, "t");
        let k = 3;
        let m = csls(&s, &t, k).unwrap();
        let cos = cosine_matrix(&s, &t).unwrap();
        let r_s: Vec<Real> = (0..t.len())
            .map(|j| mean_top_k(&cos.column(j).to_vec(), k))
            .collect();
        for i in 0..s.len() {
            let shifted: Vec<Real> =
                (0..t.len()).map(|j| 2.0 * cos[(i, j)] - r_s[j]).collect();
            assert_eq!(
                argmax(&m.row(i).to_vec()),
                argmax(&shifted),
                "row {i}"
            );
        }
    }

    #[test]
    fn identical_targets_collapse_each_row() {
        // With every target row the same direction, cosines within a source
        // row are all equal, so CSLS entries per row collapse to one value
        // and the target-side penalty is shared.
        let s = table(&["a", "b", "c"], arr2(&[[1.0, 0.5], [-0.5, 1.0], [0.25, -1.0]]));
        let t = table(
            &["x", "y", "z"],
            arr2(&[[2.0, 2.0], [1.0, 1.0], [0.5, 0.5]]),
        );
        let m = csls(&s, &t, t.len()).unwrap();
        for i in 0..3 {
            for j in 1..3 {
                assert!((m[(i, j)] - m[(i, 0)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_vectors_score_zero_cosine() {
        let s = table(&["z", "a"], arr2(&[[0.0, 0.0], [1.0, 0.0]]));
        let cos = cosine_matrix(&s, &s).unwrap();
        assert_eq!(cos[(0, 0)], 0.0);
        assert_eq!(cos[(0, 1)], 0.0);
        assert_eq!(cos[(1, 1)], 1.0);
    }

    #[test]
    fn k_bounds_are_enforced() {
        let s = table(&["a"], arr2(&[[1.0]]));
        assert!(csls(&s, &s, 0).is_err());
        assert!(csls(&s, &s, 2).is_err());
        assert!(csls(&s, &s, 1).is_ok());
    }
}
