//! Versioned binary container for parameter checkpoints.
//!
//! Layout (all integers little-endian):
//! magic `XNTC`, u32 version, u32 tensor count, then per tensor:
//! u32 name length, name bytes, u32 ndim, u64 dims, f32 data row-major.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"XNTC";
const VERSION: u32 = 1;

/// Named 2-d tensors, ordered by name.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    tensors: BTreeMap<String, Array2<f32>>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert<T: Scalar>(&mut self, name: &str, tensor: &Array2<T>) {
        self.tensors.insert(
            name.to_string(),
            tensor.mapv(|v| v.to_f64_lossy() as f32),
        );
    }

    pub fn get<T: Scalar>(&self, name: &str) -> Result<Array2<T>> {
        let t = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::BadCheckpoint(format!("missing tensor {name:?}")))?;
        Ok(t.mapv(|v| T::from_f64_lossy(v as f64)))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, tensor) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&2u32.to_le_bytes())?;
            w.write_all(&(tensor.nrows() as u64).to_le_bytes())?;
            w.write_all(&(tensor.ncols() as u64).to_le_bytes())?;
            for v in tensor.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::BadCheckpoint("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::BadCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let count = read_u32(&mut r)? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::BadCheckpoint("tensor name is not UTF-8".into()))?;
            let ndim = read_u32(&mut r)?;
            if ndim != 2 {
                return Err(Error::BadCheckpoint(format!(
                    "tensor {name:?} has ndim {ndim}, expected 2"
                )));
            }
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let mut data = vec![0f32; rows * cols];
            for v in data.iter_mut() {
                let mut b = [0u8; 4];
                r.read_exact(&mut b)?;
                *v = f32::from_le_bytes(b);
            }
            let tensor = Array2::from_shape_vec((rows, cols), data)
                .map_err(|e| Error::BadCheckpoint(e.to_string()))?;
            tensors.insert(name, tensor);
        }
        Ok(Checkpoint { tensors })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.xntc");
        let mut ck = Checkpoint::new();
        ck.insert::<f64>("w", &array![[1.5, -2.25], [0.0, 4.0]]);
        ck.insert::<f64>("b", &array![[0.5]]);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        let w: Array2<f64> = back.get("w").unwrap();
        assert_eq!(w, array![[1.5, -2.25], [0.0, 4.0]]);
        assert_eq!(back.names().collect::<Vec<_>>(), vec!["b", "w"]);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
