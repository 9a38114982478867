//! Binary logistic regression trained by full-batch gradient descent.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus_neg};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 strength on the weights; the intercept is not penalized.
    pub l2: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig { learning_rate: 0.1, epochs: 200, l2: 1e-4 }
    }
}

impl LogRegConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "l2 strength must be finite and non-negative, got {}",
                self.l2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LogisticRegression {
    w: Array1<Real>,
    b: Real,
}

/// Mean log loss plus `l2/2·‖w‖²`, with gradients on weights and intercept.
pub(crate) fn loss_grad(
    w: &Array1<Real>,
    b: Real,
    x: &Array2<Real>,
    y: &[u8],
    l2: Real,
) -> (Real, Array1<Real>, Real) {
    let n = y.len() as Real;
    let logits = x.dot(w) + b;
    let mut loss = 0.0;
    let mut d_logits = Array1::zeros(y.len());
    for (i, &label) in y.iter().enumerate() {
        let z = logits[i];
        let t = label as Real;
        loss += softplus_neg(-z) - t * z;
        d_logits[i] = sigmoid(z) - t;
    }
    loss = loss / n + 0.5 * l2 * w.dot(w);
    let mut d_w = x.t().dot(&d_logits) / n;
    d_w.scaled_add(l2, w);
    let d_b = d_logits.sum() / n;
    (loss, d_w, d_b)
}

impl LogisticRegression {
    /// Zero-initialized full-batch training; deterministic for fixed inputs.
    pub fn fit(x: &Array2<Real>, y: &[u8], cfg: &LogRegConfig) -> Result<Self> {
        cfg.validate()?;
        if x.nrows() != y.len() {
            return Err(Error::DimMismatch(format!(
                "{} feature rows for {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument("cannot fit a classifier on no samples".into()));
        }
        if y.iter().any(|&l| l > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        let mut w = Array1::zeros(x.ncols());
        let mut b = 0.0;
        for epoch in 0..cfg.epochs {
            let (loss, d_w, d_b) = loss_grad(&w, b, x, y, cfg.l2);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            w.scaled_add(-cfg.learning_rate, &d_w);
            b -= cfg.learning_rate * d_b;
        }
        if !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
            return Err(Error::NonFinite("logistic regression weights".into()));
        }
        Ok(LogisticRegression { w, b })
    }

    pub fn predict(&self, x: &Array2<Real>) -> Vec<u8> {
        let logits = x.dot(&self.w) + self.b;
        logits.iter().map(|&z| u8::from(z > 0.0)).collect()
    }
}
