//! Edge-reconstruction loss over user embeddings.
//!
//! For a positive pair (u, v) and negatives n_1..n_Q drawn by the sampler,
//! the pair's cost is -log s(z_u . z_v) - sum_i log s(-z_u . z_{n_i});
//! the loss is the mean over positive pairs. Negatives are fixed into a
//! plan before any evaluation so the loss and its gradient stay pure
//! functions of the embeddings.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{c, sigmoid, softplus_neg, Scalar};

/// Draws user indices with probability proportional to degree^exponent.
/// Zero-degree users are never drawn.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    cdf: Vec<f64>,
}

impl NegativeSampler {
    pub fn from_degrees(degrees: &[usize], exponent: f64) -> Result<NegativeSampler> {
        if !(exponent >= 0.0) || !exponent.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "negative-sampling exponent must be finite and nonnegative, got {exponent}"
            )));
        }
        let mut cdf = Vec::with_capacity(degrees.len());
        let mut acc = 0.0;
        for &d in degrees {
            acc += (d as f64).powf(exponent);
            cdf.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::InvalidArgument(
                "negative sampling needs at least one node with positive degree".into(),
            ));
        }
        Ok(NegativeSampler { cdf })
    }

    pub fn draw(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cdf.last().expect("non-empty cdf");
        let x = rng.gen_range(0.0..total);
        self.cdf.partition_point(|&v| v <= x)
    }

    /// One row of `q` negatives per positive pair.
    pub fn plan(&self, pairs: usize, q: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
        (0..pairs)
            .map(|_| (0..q).map(|_| self.draw(rng)).collect())
            .collect()
    }
}

fn check_shapes<T: Scalar>(
    z: &Array2<T>,
    pairs: &[(usize, usize)],
    negatives: &[Vec<usize>],
) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairs);
    }
    if negatives.len() != pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} negative rows for {} pairs",
            negatives.len(),
            pairs.len()
        )));
    }
    let n = z.nrows();
    let in_range = pairs
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .chain(negatives.iter().flatten().copied())
        .all(|i| i < n);
    if !in_range {
        return Err(Error::InvalidArgument(format!(
            "pair or negative index out of range for {n} embeddings"
        )));
    }
    Ok(())
}

fn dot<T: Scalar>(z: &Array2<T>, a: usize, b: usize) -> T {
    z.row(a).dot(&z.row(b))
}

/// Mean reconstruction loss under a fixed negative plan.
pub fn loss_graph<T: Scalar>(
    z: &Array2<T>,
    pairs: &[(usize, usize)],
    negatives: &[Vec<usize>],
) -> Result<T> {
    check_shapes(z, pairs, negatives)?;
    let mut total = c::<T>(0.0);
    for (&(u, v), negs) in pairs.iter().zip(negatives) {
        total += softplus_neg(dot(z, u, v));
        for &n in negs {
            total += softplus_neg(-dot(z, u, n));
        }
    }
    Ok(total / c::<T>(pairs.len() as f64))
}

/// Loss plus its gradient with respect to every embedding row.
pub fn loss_grad<T: Scalar>(
    z: &Array2<T>,
    pairs: &[(usize, usize)],
    negatives: &[Vec<usize>],
) -> Result<(T, Array2<T>)> {
    check_shapes(z, pairs, negatives)?;
    let scale = c::<T>(1.0 / pairs.len() as f64);
    let mut total = c::<T>(0.0);
    let mut grad = Array2::zeros(z.dim());
    let add = |g: &mut Array2<T>, row: usize, coeff: T, src: usize, z: &Array2<T>| {
        let mut target = g.row_mut(row);
        let source = z.row(src);
        for d in 0..source.len() {
            target[d] += coeff * source[d];
        }
    };
    for (&(u, v), negs) in pairs.iter().zip(negatives) {
        let s = dot(z, u, v);
        total += softplus_neg(s);
        let coeff = (sigmoid(s) - c::<T>(1.0)) * scale;
        add(&mut grad, u, coeff, v, z);
        add(&mut grad, v, coeff, u, z);
        for &n in negs {
            let s = dot(z, u, n);
            total += softplus_neg(-s);
            let coeff = sigmoid(s) * scale;
            add(&mut grad, u, coeff, n, z);
            add(&mut grad, n, coeff, u, z);
        }
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use ndarray::arr2;

    #[test]
    fn zero_embeddings_cost_log_two() {
        let z: Array2<f64> = Array2::zeros((2, 3));
        let l = loss_graph(&z, &[(0, 1)], &[vec![]]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn strong_positive_pair_costs_little() {
        // z_u . z_v = 10, no negatives: -ln s(10) = ln(1 + e^-10).
        let z = arr2(&[[10.0_f64.sqrt()], [10.0_f64.sqrt()]]);
        let l = loss_graph(&z, &[(0, 1)], &[vec![]]).unwrap();
        assert!((l - (1.0 + (-10.0_f64).exp()).ln()).abs() < 1e-12);
        assert!((l - 4.5398899e-5).abs() < 1e-10);
    }

    #[test]
    fn single_negative_matches_direct_formula() {
        let z = arr2(&[[1.0, -0.5], [0.25, 2.0], [-1.5, 0.5]]);
        let l = loss_graph(&z, &[(0, 1)], &[vec![2]]).unwrap();
        let s_pos = 1.0 * 0.25 + (-0.5) * 2.0;
        let s_neg = 1.0 * (-1.5) + (-0.5) * 0.5;
        let direct = (1.0 + (-s_pos as f64).exp()).ln() + (1.0 + (s_neg as f64).exp()).ln();
        assert!((l - direct).abs() < 1e-12);
    }

    #[test]
    fn grad_matches_finite_differences() {
        let mut rng = SeedTree::new(7).stream("loss-fd", &[]);
        let mut z: Array2<f64> = Array2::zeros((4, 3));
        for v in z.iter_mut() {
            *v = rand::Rng::gen_range(&mut rng, -1.0..1.0);
        }
        let pairs = [(0, 1), (1, 2)];
        let negs = vec![vec![3, 3], vec![0]];
        let (l0, g) = loss_grad(&z, &pairs, &negs).unwrap();
        assert!((l0 - loss_graph(&z, &pairs, &negs).unwrap()).abs() < 1e-14);
        let h = 1e-6;
        for i in 0..4 {
            for d in 0..3 {
                let mut zp = z.clone();
                zp[(i, d)] += h;
                let mut zm = z.clone();
                zm[(i, d)] -= h;
                let fd = (loss_graph(&zp, &pairs, &negs).unwrap()
                    - loss_graph(&zm, &pairs, &negs).unwrap())
                    / (2.0 * h);
                assert!(
                    (fd - g[(i, d)]).abs() < 1e-7,
                    "row {i} dim {d}: fd {fd} vs analytic {}",
                    g[(i, d)]
                );
            }
        }
    }

    #[test]
    fn sampler_skips_zero_degree_and_tracks_weights() {
        let s = NegativeSampler::from_degrees(&[16, 0, 1], 0.75).unwrap();
        let mut rng = SeedTree::new(3).stream("sampler", &[]);
        let mut counts = [0usize; 3];
        let n = 40_000;
        for _ in 0..n {
            counts[s.draw(&mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        // weights 16^0.75 = 8 and 1: expect 8/9 vs 1/9.
        let p0 = counts[0] as f64 / n as f64;
        assert!((p0 - 8.0 / 9.0).abs() < 0.01, "p0 {p0}");
    }

    #[test]
    fn sampler_rejects_all_isolated() {
        assert!(NegativeSampler::from_degrees(&[0, 0], 0.75).is_err());
    }

    #[test]
    fn empty_pairs_is_an_error() {
        let z: Array2<f64> = Array2::zeros((2, 2));
        assert!(matches!(loss_graph(&z, &[], &[]), Err(Error::EmptyPairs)));
    }
}
