//! Unsupervised alignment of two user-embedding spaces: an adversarially
//! trained linear map, CSLS similarity, and mutual-nearest-neighbor anchor
//! extraction.

mod csls;
mod gan;

pub use csls::{cosine_matrix, csls};
pub use gan::{orthogonality_gap, orthogonalize, train_mapping, GanConfig};

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::checkpoint::Checkpoint;
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::{Matrix, Real};

/// Linear map from the source embedding space into the target space,
/// applied to row vectors as `z W`.
#[derive(Debug, Clone)]
pub struct AlignmentModel {
    pub w: Matrix,
}

impl AlignmentModel {
    /// Maps a table's rows into the target space.
    pub fn apply(&self, z: &EmbeddingTable) -> Result<EmbeddingTable> {
        if z.dim() != self.w.nrows() {
            return Err(Error::DimMismatch(format!(
                "{}-d table through a {}x{} map",
                z.dim(),
                self.w.nrows(),
                self.w.ncols()
            )));
        }
        z.with_vectors(z.vectors().dot(&self.w))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ck = Checkpoint::new();
        ck.insert("w", &self.w);
        ck.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        Ok(AlignmentModel { w: ck.get("w")? })
    }
}

/// One-to-one cross-network user matches with their CSLS scores.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnchorSet {
    pairs: Vec<(String, String, Real)>,
}

impl AnchorSet {
    pub fn new(pairs: Vec<(String, String, Real)>) -> Result<Self> {
        let mut src = std::collections::HashSet::new();
        let mut tgt = std::collections::HashSet::new();
        for (s, t, _) in &pairs {
            if !src.insert(s.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "source {s:?} appears in more than one anchor pair"
                )));
            }
            if !tgt.insert(t.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "target {t:?} appears in more than one anchor pair"
                )));
            }
        }
        Ok(AnchorSet { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String, Real)] {
        &self.pairs
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        for (s, t, score) in &self.pairs {
            writeln!(w, "{s} {t} {score}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(std::fs::File::open(path)?);
        let mut pairs = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse_err = |msg: &str| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: msg.into(),
            };
            let s = it.next().ok_or_else(|| parse_err("missing source id"))?;
            let t = it.next().ok_or_else(|| parse_err("missing target id"))?;
            let score: Real = it
                .next()
                .ok_or_else(|| parse_err("missing score"))?
                .parse()
                .map_err(|_| parse_err("score is not a number"))?;
            if it.next().is_some() {
                return Err(parse_err("trailing fields"));
            }
            pairs.push((s.to_string(), t.to_string(), score));
        }
        AnchorSet::new(pairs)
    }
}

/// Index pairs (i, j) that are each other's row/column argmax in `sim`.
pub(crate) fn mutual_pairs(sim: &Matrix) -> Vec<(usize, usize)> {
    let best_t: Vec<usize> = sim
        .rows()
        .into_iter()
        .map(|r| csls::argmax(&r.to_vec()))
        .collect();
    let best_s: Vec<usize> = (0..sim.ncols())
        .map(|j| csls::argmax(&sim.column(j).to_vec()))
        .collect();
    best_t
        .iter()
        .enumerate()
        .filter(|&(i, &j)| best_s[j] == i)
        .map(|(i, &j)| (i, j))
        .collect()
}

/// Mutual-nearest-neighbor pairs under CSLS whose score exceeds `margin`.
/// Both tables are length-normalized before mapping and comparison.
pub fn predict_anchors(
    z1: &EmbeddingTable,
    z2: &EmbeddingTable,
    model: &AlignmentModel,
    k: usize,
    margin: Real,
) -> Result<AnchorSet> {
    let mapped = model.apply(&z1.length_normalized())?;
    let sim = csls(&mapped, &z2.length_normalized(), k)?;
    let mut pairs = Vec::new();
    for (i, j) in mutual_pairs(&sim) {
        let score = sim[(i, j)];
        if score > margin {
            pairs.push((z1.id(i).to_string(), z2.id(j).to_string(), score));
        }
    }
    AnchorSet::new(pairs)
}
