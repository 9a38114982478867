//! Word replacement over an embedding vocabulary.
//!
//! An in-vocabulary token x is replaced by y drawn with probability
//! proportional to exp(-eps/2 * d(phi(x), phi(y))) over the whole
//! vocabulary, where d is the Euclidean distance between word vectors.
//! Out-of-vocabulary tokens become a uniform random vocabulary word.

use std::collections::HashMap;

use rand::Rng;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};

/// Sampler for the word mechanism; caches one cumulative table per distinct
/// source word.
pub struct TextMechanism<'a> {
    emb: &'a EmbeddingTable,
    eps: f64,
    cdf_cache: HashMap<usize, Vec<f64>>,
}

impl<'a> TextMechanism<'a> {
    pub fn new(emb: &'a EmbeddingTable, eps: f64) -> Result<Self> {
        if emb.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("text budget {eps} must be non-negative")));
        }
        Ok(TextMechanism { emb, eps, cdf_cache: HashMap::new() })
    }

    pub fn vocab_size(&self) -> usize {
        self.emb.len()
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        let va = self.emb.vectors().row(a);
        let vb = self.emb.vectors().row(b);
        va.iter().zip(vb.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    /// Exact replacement distribution for source word index `x`. Weights are
    /// shifted by the minimum distance before exponentiation, which leaves
    /// the distribution unchanged but keeps it away from underflow.
    pub fn distribution(&self, x: usize) -> Vec<f64> {
        let v = self.emb.len();
        let dists: Vec<f64> = (0..v).map(|y| self.distance(x, y)).collect();
        let dmin = dists.iter().copied().fold(f64::INFINITY, f64::min);
        let weights: Vec<f64> = dists.iter().map(|d| (-0.5 * self.eps * (d - dmin)).exp()).collect();
        let total: f64 = weights.iter().sum();
        weights.into_iter().map(|w| w / total).collect()
    }

    fn cdf(&mut self, x: usize) -> &[f64] {
        if !self.cdf_cache.contains_key(&x) {
            let dists: Vec<f64> = (0..self.emb.len()).map(|y| self.distance(x, y)).collect();
            let dmin = dists.iter().copied().fold(f64::INFINITY, f64::min);
            let mut acc = 0.0;
            let cdf = dists
                .iter()
                .map(|d| {
                    acc += (-0.5 * self.eps * (d - dmin)).exp();
                    acc
                })
                .collect();
            self.cdf_cache.insert(x, cdf);
        }
        &self.cdf_cache[&x]
    }

    /// Samples a replacement index for in-vocabulary source index `x`.
    pub fn sample<R: Rng>(&mut self, x: usize, rng: &mut R) -> usize {
        let cdf = self.cdf(x);
        let total = *cdf.last().expect("non-empty vocabulary");
        let u = rng.gen::<f64>() * total;
        cdf.partition_point(|&c| c <= u).min(self.emb.len() - 1)
    }

    /// Replaces one token: Eq-distribution sample when in vocabulary,
    /// uniform vocabulary word otherwise.
    pub fn replace_token<R: Rng>(&mut self, token: &str, rng: &mut R) -> (String, bool) {
        match self.emb.row_of(token) {
            Some(x) => {
                let y = self.sample(x, rng);
                (self.emb.id(y).to_string(), false)
            }
            None => {
                let y = rng.gen_range(0..self.emb.len());
                (self.emb.id(y).to_string(), true)
            }
        }
    }
}

/// Replaces every token of a sequence independently. Returns the sanitized
/// sequence and how many tokens were out of vocabulary.
pub fn sanitize_text<R: Rng>(
    tokens: &[String],
    eps_t: f64,
    emb: &EmbeddingTable,
    rng: &mut R,
) -> Result<(Vec<String>, usize)> {
    let mut mech = TextMechanism::new(emb, eps_t)?;
    let mut oov = 0;
    let out = tokens
        .iter()
        .map(|t| {
            let (w, was_oov) = mech.replace_token(t, rng);
            oov += was_oov as usize;
            w
        })
        .collect();
    Ok((out, oov))
}
