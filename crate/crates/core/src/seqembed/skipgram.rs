//! Negative-sampling skip-gram: model state, loss, and SGD updates.

use ndarray::Array2;
use rand::Rng;

use crate::scalar::{c, sigmoid, softplus_neg, Scalar};

/// Input and output embedding matrices, vocab x dim each. The input matrix
/// holds the vectors that leave the trainer.
#[derive(Debug, Clone)]
pub struct SgnsModel<T: Scalar> {
    pub w_in: Array2<T>,
    pub w_out: Array2<T>,
}

impl<T: Scalar> SgnsModel<T> {
    /// Uniform init in [-0.5/d, 0.5/d] for both matrices.
    pub fn init<R: Rng>(vocab: usize, dim: usize, rng: &mut R) -> Self {
        let mut draw = || {
            let u: f64 = rng.gen::<f64>() - 0.5;
            c::<T>(u / dim as f64)
        };
        let w_in = Array2::from_shape_simple_fn((vocab, dim), &mut draw);
        let w_out = Array2::from_shape_simple_fn((vocab, dim), &mut draw);
        SgnsModel { w_in, w_out }
    }

    pub fn vocab(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w_in.ncols()
    }

    fn score(&self, center: usize, word: usize) -> T {
        self.w_in
            .row(center)
            .iter()
            .zip(self.w_out.row(word).iter())
            .map(|(a, b)| *a * *b)
            .sum()
    }

    /// -log sigma(v_c . u_o) - sum_i log sigma(-v_c . u_{n_i}).
    pub fn pair_loss(&self, center: usize, context: usize, negatives: &[usize]) -> T {
        let mut loss = softplus_neg(self.score(center, context));
        for &n in negatives {
            loss += softplus_neg(-self.score(center, n));
        }
        loss
    }

    /// One SGD step on a (center, context, negatives) sample. All gradients
    /// are taken at the pre-update parameters. Returns the pre-update loss.
    pub fn train_pair(&mut self, center: usize, context: usize, negatives: &[usize], lr: T) -> T {
        let dim = self.dim();
        let loss = self.pair_loss(center, context, negatives);

        // d loss / d score is sigma(s) - 1 for the positive pair and
        // sigma(s) for each negative.
        let mut coeffs = Vec::with_capacity(1 + negatives.len());
        coeffs.push((context, sigmoid(self.score(center, context)) - T::one()));
        for &n in negatives {
            coeffs.push((n, sigmoid(self.score(center, n))));
        }

        let mut grad_center = vec![T::zero(); dim];
        for &(word, coeff) in &coeffs {
            for d in 0..dim {
                grad_center[d] += coeff * self.w_out[(word, d)];
            }
        }
        for &(word, coeff) in &coeffs {
            for d in 0..dim {
                let g = coeff * self.w_in[(center, d)];
                self.w_out[(word, d)] -= lr * g;
            }
        }
        for d in 0..dim {
            self.w_in[(center, d)] -= lr * grad_center[d];
        }
        loss
    }
}
