//! Skip-gram embeddings for token sequences and random walks.
//!
//! One trainer serves two callers: word embeddings over post text (feeding
//! the text sanitizer) and walk-based node embeddings over the friendship
//! graph. Training is single-threaded and bit-reproducible for a given
//! seed.

pub mod skipgram;
pub mod walks;

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::SeedTree;
use crate::scalar::c;
use crate::Real;

pub use skipgram::SgnsModel;
pub use walks::{random_walks, WalkConfig};

/// Skip-gram trainer parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Symmetric context window: positions within `window` of the center
    /// (fixed, not sampled).
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub min_count: usize,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 64,
            window: 5,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            min_count: 1,
            seed: 0,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.window == 0 || self.epochs == 0 || self.min_count == 0 {
            return Err(Error::InvalidArgument(
                "skip-gram dim, window, epochs, and min_count must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Cumulative sampler over unigram counts raised to 3/4.
struct NegativeTable {
    cdf: Vec<f64>,
}

impl NegativeTable {
    fn new(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cdf = counts
            .iter()
            .map(|&n| {
                acc += (n as f64).powf(0.75);
                acc
            })
            .collect();
        NegativeTable { cdf }
    }

    fn sample<R: rand::Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cdf.last().expect("non-empty vocabulary");
        let u = rng.gen::<f64>() * total;
        self.cdf.partition_point(|&x| x <= u).min(self.cdf.len() - 1)
    }
}

/// Trains negative-sampling skip-gram over token sequences and returns one
/// vector per vocabulary word (tokens meeting `min_count`), ordered by
/// descending count then token.
pub fn train_skipgram(sequences: &[Vec<String>], cfg: &SkipGramConfig) -> Result<EmbeddingTable> {
    cfg.validate()?;
    if sequences.is_empty() || sequences.iter().all(Vec::is_empty) {
        return Err(Error::EmptyCorpus);
    }

    let mut counts: HashMap<&str, usize> = HashMap::new();
    for seq in sequences {
        for tok in seq {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut vocab: Vec<(&str, usize)> =
        counts.into_iter().filter(|&(_, n)| n >= cfg.min_count).collect();
    vocab.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    let index: HashMap<&str, usize> =
        vocab.iter().enumerate().map(|(i, &(w, _))| (w, i)).collect();
    let vocab_counts: Vec<usize> = vocab.iter().map(|&(_, n)| n).collect();

    let encoded: Vec<Vec<usize>> = sequences
        .iter()
        .map(|seq| seq.iter().filter_map(|t| index.get(t.as_str()).copied()).collect())
        .collect();

    let tree = SeedTree::new(cfg.seed);
    let mut model =
        SgnsModel::<Real>::init(vocab.len(), cfg.dim, &mut tree.stream("init", &[]));
    let negatives = NegativeTable::new(&vocab_counts);
    let lr = c::<Real>(cfg.learning_rate);

    let mut neg_buf = Vec::with_capacity(cfg.negatives);
    for epoch in 0..cfg.epochs {
        let mut rng = tree.stream("epoch", &[epoch as u64]);
        for seq in &encoded {
            for (i, &center) in seq.iter().enumerate() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(seq.len().saturating_sub(1));
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let context = seq[j];
                    neg_buf.clear();
                    for _ in 0..cfg.negatives {
                        let n = negatives.sample(&mut rng);
                        // A negative equal to the positive target would
                        // cancel it; drop that draw.
                        if n != context {
                            neg_buf.push(n);
                        }
                    }
                    model.train_pair(center, context, &neg_buf, lr);
                }
            }
        }
    }

    let table = EmbeddingTable::new(
        vocab.iter().map(|&(w, _)| w.to_string()).collect(),
        model.w_in.mapv(|x| x),
    )?;
    if !table.is_finite() {
        return Err(Error::NonFinite("skip-gram produced a non-finite vector".into()));
    }
    Ok(table)
}

/// Cosine similarity between two table rows; helper shared by tests and
/// alignment code.
pub fn cosine(t: &EmbeddingTable, a: usize, b: usize) -> f64 {
    let va = t.vectors().row(a);
    let vb = t.vectors().row(b);
    let dot: f64 = va.iter().zip(vb.iter()).map(|(x, y)| x * y).sum();
    let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
