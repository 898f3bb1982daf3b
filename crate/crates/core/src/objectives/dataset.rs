//! Per-client synthetic datasets and their columnar binary file format.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic   8 bytes  b"PFLDSET1"
//! d       u64      feature count
//! n       u64      sample count
//! x       n*d f64  row-major features
//! y       n   i8   labels, stored as bytes
//! ```

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PFLDSET1";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, features: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dataset("zero feature dimension".into()));
        }
        if targets.is_empty() {
            return Err(Error::Dataset("no samples".into()));
        }
        if features.len() != dim * targets.len() {
            return Err(Error::Dataset(format!(
                "{} features for {} samples of dimension {dim}",
                features.len(),
                targets.len()
            )));
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite entry".into()));
        }
        Ok(Self {
            dim,
            features,
            targets,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.dim as u64).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        for v in &self.features {
            out.write_all(&v.to_le_bytes())?;
        }
        for &y in &self.targets {
            if y.fract() != 0.0 || !(-128.0..=127.0).contains(&y) {
                return Err(Error::Dataset(format!("label {y} does not fit in 8 bits")));
            }
            out.write_all(&[(y as i8) as u8])?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Dataset("bad magic".into()));
        }
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let dim = u64::from_le_bytes(word) as usize;
        input.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let mut features = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            input.read_exact(&mut word)?;
            features.push(f64::from_le_bytes(word));
        }
        let mut labels = vec![0u8; n];
        input.read_exact(&mut labels)?;
        let targets = labels.into_iter().map(|b| f64::from(b as i8)).collect();
        Self::new(dim, features, targets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let ds = Dataset::new(2, vec![1.0, -2.5, 0.0, 3.25], vec![1.0, -1.0]).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 16 + 32 + 2);
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(buf[buf.len() - 1], 0xff);
        assert_eq!(Dataset::read_from(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Dataset::new(2, vec![1.0], vec![1.0]).is_err());
        assert!(Dataset::new(2, vec![], vec![]).is_err());
        let fractional = Dataset::new(1, vec![1.0], vec![0.5]).unwrap();
        assert!(fractional.write_to(Vec::new()).is_err());
        assert!(Dataset::read_from(&b"NOTMAGIC"[..]).is_err());
    }
}
