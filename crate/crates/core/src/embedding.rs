//! Embedding tables: id → fixed-dimension vector.
//!
//! One type serves words, users, and fused outputs. The on-disk format is
//! text: a `"n d"` header line, then one line per entry with the id followed
//! by `d` space-separated decimal floats (shortest round-trip formatting).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Real;

#[derive(Debug, Clone)]
pub struct EmbeddingTable<T: Scalar = Real> {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Array2<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Builds a table from parallel ids and row vectors.
    pub fn new(ids: Vec<String>, vectors: Array2<T>) -> Result<Self> {
        if ids.len() != vectors.nrows() {
            return Err(Error::DimMismatch(format!(
                "{} ids vs {} vector rows",
                ids.len(),
                vectors.nrows()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate id {id:?}")));
            }
        }
        Ok(EmbeddingTable {
            ids,
            index,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<ArrayView1<'_, T>> {
        self.row_of(id).map(|i| self.vectors.row(i))
    }

    pub fn vectors(&self) -> &Array2<T> {
        &self.vectors
    }

    pub fn vectors_mut(&mut self) -> &mut Array2<T> {
        &mut self.vectors
    }

    /// Replaces the vectors, keeping ids; dimensions may change, row count not.
    pub fn with_vectors(&self, vectors: Array2<T>) -> Result<Self> {
        Self::new(self.ids.clone(), vectors)
    }

    /// All vector entries finite.
    pub fn is_finite(&self) -> bool {
        self.vectors.iter().all(|v| v.is_finite())
    }

    /// Rows scaled to unit length; zero rows are left as zero.
    pub fn length_normalized(&self) -> Self {
        let mut vectors = self.vectors.clone();
        for mut row in vectors.rows_mut() {
            let norm = row.iter().map(|v| *v * *v).sum::<T>().sqrt();
            if norm > T::zero() {
                row.mapv_inplace(|v| v / norm);
            }
        }
        EmbeddingTable {
            ids: self.ids.clone(),
            index: self.index.clone(),
            vectors,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{} {}", self.len(), self.dim())?;
        for (id, row) in self.ids.iter().zip(self.vectors.rows()) {
            write!(w, "{id}")?;
            for v in row {
                write!(w, " {}", v.to_f64_lossy())?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let pathname = path.display().to_string();
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: pathname.clone(),
            line,
            msg,
        };
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty file".into()))??;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(1, format!("bad header {header:?}")))?;
        let d: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(1, format!("bad header {header:?}")))?;
        let mut ids = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * d);
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let id = parts
                .next()
                .ok_or_else(|| parse_err(lineno + 2, "missing id".into()))?;
            ids.push(id.to_string());
            let mut count = 0;
            for tok in parts {
                let v: f64 = tok
                    .parse()
                    .map_err(|e| parse_err(lineno + 2, format!("bad float {tok:?}: {e}")))?;
                data.push(T::from_f64_lossy(v));
                count += 1;
            }
            if count != d {
                return Err(parse_err(
                    lineno + 2,
                    format!("expected {d} values, found {count}"),
                ));
            }
        }
        if ids.len() != n {
            return Err(parse_err(
                ids.len() + 1,
                format!("header declared {n} entries, found {}", ids.len()),
            ));
        }
        let vectors = Array2::from_shape_vec((n, d), data).expect("shape checked");
        Self::new(ids, vectors)
    }
}
