//! Adversarial training of the linear map between embedding spaces.
//!
//! A generator matrix W maps length-normalized source rows toward the
//! target cloud; a one-hidden-layer discriminator learns to tell mapped
//! rows from real target rows. After every generator step W is pulled
//! back toward the orthogonal manifold with
//! W <- (1 + beta) W - beta (W W^T) W.

use serde::{Deserialize, Serialize};
use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::SeedTree;
use crate::scalar::{sigmoid, softplus_neg};
use crate::{Matrix, Real};

use super::csls::csls;
use super::{mutual_pairs, AlignmentModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    /// Discriminator hidden width.
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    /// Orthogonalization strength, in [0, 0.01].
    pub beta: f64,
    /// Independent trainings; the map whose mutual-NN matches score the
    /// highest mean CSLS wins.
    pub restarts: usize,
    /// CSLS neighborhood used by the restart selection criterion.
    pub csls_k: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            hidden: 512,
            epochs: 120,
            batch_size: 32,
            lr_generator: 0.1,
            lr_discriminator: 0.1,
            beta: 0.01,
            restarts: 3,
            csls_k: 10,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.restarts == 0 || self.csls_k == 0 {
            return Err(Error::InvalidArgument(
                "gan sizes (hidden, batch, restarts, csls_k) must be positive".into(),
            ));
        }
        for (name, v) in [
            ("generator learning rate", self.lr_generator),
            ("discriminator learning rate", self.lr_discriminator),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(0.0..=0.01).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!(
                "beta must lie in [0, 0.01], got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// One pull toward the orthogonal manifold.
pub fn orthogonalize(w: &mut Matrix, beta: f64) {
    let wwt = w.dot(&w.t());
    let correction = wwt.dot(w);
    w.zip_mut_with(&correction, |a, &b| *a = (1.0 + beta) * *a - beta * b);
}

pub fn orthogonality_gap(w: &Matrix) -> f64 {
    let mut wtw = w.t().dot(w);
    for i in 0..wtw.nrows() {
        wtw[(i, i)] -= 1.0;
    }
    wtw.iter().map(|v| v * v).sum::<f64>().sqrt()
}

struct Discriminator {
    w1: Array2<Real>,
    b1: Array1<Real>,
    w2: Array1<Real>,
    b2: Real,
}

struct DiscCache {
    x: Array2<Real>,
    a1: Array2<Real>,
    h1: Array2<Real>,
    logits: Array1<Real>,
}

const LEAKY: Real = 0.2;

impl Discriminator {
    fn init(dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut w1 = Array2::zeros((dim, hidden));
        let bound1 = 1.0 / (dim as f64).sqrt();
        for v in w1.iter_mut() {
            *v = rng.gen_range(-bound1..=bound1);
        }
        let mut w2 = Array1::zeros(hidden);
        let bound2 = 1.0 / (hidden as f64).sqrt();
        for v in w2.iter_mut() {
            *v = rng.gen_range(-bound2..=bound2);
        }
        Discriminator { w1, b1: Array1::zeros(hidden), w2, b2: 0.0 }
    }

    fn forward(&self, x: Array2<Real>) -> DiscCache {
        let mut a1 = x.dot(&self.w1);
        a1 += &self.b1;
        let h1 = a1.mapv(|v| if v > 0.0 { v } else { LEAKY * v });
        let logits = h1.dot(&self.w2) + self.b2;
        DiscCache { x, a1, h1, logits }
    }

    /// Mean BCE toward `label` plus the gradient on the logits.
    fn bce(&self, cache: &DiscCache, label: Real) -> (Real, Array1<Real>) {
        let n = cache.logits.len() as Real;
        let mut loss = 0.0;
        let mut d_logits = Array1::zeros(cache.logits.len());
        for (i, &logit) in cache.logits.iter().enumerate() {
            loss += if label > 0.5 {
                softplus_neg(logit)
            } else {
                softplus_neg(-logit)
            };
            d_logits[i] = (sigmoid(logit) - label) / n;
        }
        (loss / n, d_logits)
    }

    /// Backpropagates `d_logits`, updates own parameters by `lr`, and
    /// returns the gradient on the input batch.
    fn step(&mut self, cache: &DiscCache, d_logits: &Array1<Real>, lr: Real) -> Array2<Real> {
        let d_h1 = outer(d_logits, &self.w2);
        let d_a1 = ndarray::Zip::from(&d_h1)
            .and(&cache.a1)
            .map_collect(|&g, &a| if a > 0.0 { g } else { LEAKY * g });
        let d_w2 = cache.h1.t().dot(d_logits);
        let d_b2: Real = d_logits.sum();
        let d_w1 = cache.x.t().dot(&d_a1);
        let d_b1 = d_a1.sum_axis(Axis(0));
        let d_x = d_a1.dot(&self.w1.t());
        if lr != 0.0 {
            self.w2.scaled_add(-lr, &d_w2);
            self.b2 -= lr * d_b2;
            self.w1.scaled_add(-lr, &d_w1);
            self.b1.scaled_add(-lr, &d_b1);
        }
        d_x
    }
}

fn outer(col: &Array1<Real>, row: &Array1<Real>) -> Array2<Real> {
    let mut out = Array2::zeros((col.len(), row.len()));
    for i in 0..col.len() {
        for j in 0..row.len() {
            out[(i, j)] = col[i] * row[j];
        }
    }
    out
}

fn sample_rows(
    src: &Array2<Real>,
    batch: usize,
    rng: &mut impl Rng,
) -> Array2<Real> {
    let mut out = Array2::zeros((batch, src.ncols()));
    for b in 0..batch {
        let i = rng.gen_range(0..src.nrows());
        out.row_mut(b).assign(&src.row(i));
    }
    out
}

/// Unsupervised starting point for W: match the two clouds' covariance
/// eigenbases, then fix each axis's reflection sign with the mean. For
/// distributions that really are rotations of each other this recovers the
/// rotation up to sampling noise; adversarial training takes it from there.
/// Axes whose mean component is too small to vote keep a positive sign.
pub(crate) fn moment_init(z1: &Array2<Real>, z2: &Array2<Real>) -> Result<Matrix> {
    let d = z1.ncols();
    let mean = |z: &Array2<Real>| z.mean_axis(Axis(0)).expect("non-empty table");
    let cov = |z: &Array2<Real>, m: &Array1<Real>| {
        let mut c = z.t().dot(z);
        c /= z.nrows() as f64;
        c -= &outer(m, m);
        c
    };
    let (m1, m2) = (mean(z1), mean(z2));
    let (_, u) = crate::linalg::symmetric_eigen(&cov(z1, &m1))?;
    let (_, v) = crate::linalg::symmetric_eigen(&cov(z2, &m2))?;
    let p1 = m1.dot(&u);
    let p2 = m2.dot(&v);
    let mut us = u;
    for j in 0..d {
        if p1[j] * p2[j] < 0.0 {
            for r in 0..d {
                us[(r, j)] = -us[(r, j)];
            }
        }
    }
    Ok(us.dot(&v.t()))
}

fn train_once(
    z1: &Array2<Real>,
    z2: &Array2<Real>,
    cfg: &GanConfig,
    tree: &SeedTree,
    restart: u64,
) -> Result<Matrix> {
    let d = z1.ncols();
    // First restart starts from the moment-matched map; later restarts
    // explore other basins from random orthogonal points.
    let mut w = if restart == 0 {
        moment_init(z1, z2)?
    } else {
        crate::synth::random_orthogonal(d, &mut tree.stream("w-init", &[restart]))
    };
    let mut disc = Discriminator::init(
        d,
        cfg.hidden,
        &mut tree.stream("disc-init", &[restart]),
    );
    let steps = (z1.nrows().max(z2.nrows()) + cfg.batch_size - 1) / cfg.batch_size;
    for epoch in 0..cfg.epochs {
        // Linear step-size anneal: early epochs move W between basins, late
        // epochs shrink toward zero so the orthogonality pull wins and the
        // map settles.
        let lr_gen = cfg.lr_generator * (1.0 - epoch as f64 / cfg.epochs as f64);
        let mut rng = tree.stream("gan-epoch", &[restart, epoch as u64]);
        for _ in 0..steps {
            // Discriminator step: real targets toward 1, mapped sources toward 0.
            let real = disc.forward(sample_rows(z2, cfg.batch_size, &mut rng));
            let (loss_real, d_real) = disc.bce(&real, 1.0);
            disc.step(&real, &d_real, cfg.lr_discriminator);
            let mapped = disc.forward(sample_rows(z1, cfg.batch_size, &mut rng).dot(&w));
            let (loss_fake, d_fake) = disc.bce(&mapped, 0.0);
            disc.step(&mapped, &d_fake, cfg.lr_discriminator);
            if !loss_real.is_finite() || !loss_fake.is_finite() {
                return Err(Error::Diverged { epoch });
            }

            // Generator step: make mapped sources look real.
            let src = sample_rows(z1, cfg.batch_size, &mut rng);
            let cache = disc.forward(src.dot(&w));
            let (loss_gen, d_gen) = disc.bce(&cache, 1.0);
            if !loss_gen.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let d_mapped = disc.step(&cache, &d_gen, 0.0);
            let d_w = src.t().dot(&d_mapped);
            w.scaled_add(-lr_gen, &d_w);
            orthogonalize(&mut w, cfg.beta);
        }
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(w)
}

/// Quality criterion for restart selection: mean CSLS over mutual-NN
/// matches of the mapped source against the target.
fn match_score(
    z1: &EmbeddingTable,
    z2: &EmbeddingTable,
    w: &Matrix,
    k: usize,
) -> Result<f64> {
    let mapped = z1.with_vectors(z1.vectors().dot(w))?;
    let k = k.min(z1.len()).min(z2.len());
    let sim = csls(&mapped, z2, k)?;
    let pairs = mutual_pairs(&sim);
    if pairs.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(pairs.iter().map(|&(i, j)| sim[(i, j)]).sum::<f64>() / pairs.len() as f64)
}

/// Learns the source-to-target map adversarially. Inputs are
/// length-normalized internally; rows map as `z W`.
pub fn train_mapping(
    z1: &EmbeddingTable,
    z2: &EmbeddingTable,
    cfg: &GanConfig,
) -> Result<AlignmentModel> {
    cfg.validate()?;
    if z1.is_empty() || z2.is_empty() {
        return Err(Error::InvalidArgument("alignment needs non-empty tables".into()));
    }
    if z1.dim() != z2.dim() {
        return Err(Error::DimMismatch(format!(
            "source is {}-d, target is {}-d",
            z1.dim(),
            z2.dim()
        )));
    }
    let n1 = z1.length_normalized();
    let n2 = z2.length_normalized();
    let tree = SeedTree::new(cfg.seed);
    let mut best: Option<(f64, Matrix)> = None;
    for r in 0..cfg.restarts {
        let w = train_once(n1.vectors(), n2.vectors(), cfg, &tree, r as u64)?;
        let score = match_score(&n1, &n2, &w, cfg.csls_k)?;
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, w));
        }
    }
    let (_, w) = best.expect("at least one restart");
    Ok(AlignmentModel { w })
}
