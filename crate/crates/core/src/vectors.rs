//! Flat parameter vectors, layer partitions and keyed random streams.
//!
//! Every vector quantity in the simulator (model weights, gradients, descent
//! directions, compression residuals) is a [`ParamVector`]. Values are `f64`
//! internally; the wire format narrows them to 32 bits (see
//! [`crate::accounting`]).

use std::ops::Range;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contiguous, sorted, disjoint index ranges covering `[0, dim)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPartition {
    ranges: Vec<Range<usize>>,
}

impl LayerPartition {
    pub fn new(ranges: Vec<Range<usize>>, dim: usize) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::InvalidPartition("no layers".into()));
        }
        let mut next = 0;
        for r in &ranges {
            if r.start != next || r.end <= r.start {
                return Err(Error::InvalidPartition(format!(
                    "range {r:?} does not continue at {next}"
                )));
            }
            next = r.end;
        }
        if next != dim {
            return Err(Error::InvalidPartition(format!(
                "layers cover [0, {next}) but dimension is {dim}"
            )));
        }
        Ok(Self { ranges })
    }

    /// Builds a partition from consecutive layer sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut ranges = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            ranges.push(start..start + s);
            start += s;
        }
        Self::new(ranges, start)
    }

    /// The whole vector as one layer.
    pub fn single(dim: usize) -> Self {
        Self {
            ranges: vec![0..dim],
        }
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn dim(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }
}

/// Real-valued parameter vector with an optional layer partition.
///
/// All entries are finite after every public operation; operations that would
/// produce a NaN or infinity return [`Error::NonFinite`] instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layers: Option<LayerPartition>,
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}] = {}", values[i]))),
        None => Ok(()),
    }
}

fn ensure_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure_finite(&values, "vector")?;
        Ok(Self {
            values,
            layers: None,
        })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
            layers: None,
        }
    }

    pub fn with_layers(mut self, layers: LayerPartition) -> Result<Self> {
        ensure_same_dim(self.len(), layers.dim())?;
        self.layers = Some(layers);
        Ok(self)
    }

    pub fn set_layers(&mut self, layers: Option<LayerPartition>) {
        self.layers = layers;
    }

    pub fn layers(&self) -> Option<&LayerPartition> {
        self.layers.as_ref()
    }

    /// The explicit partition, or the whole vector as one layer.
    pub fn partition(&self) -> LayerPartition {
        self.layers
            .clone()
            .unwrap_or_else(|| LayerPartition::single(self.len()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::NonFinite(format!("scale {c}")));
        }
        let values: Vec<f64> = self.values.iter().map(|v| c * v).collect();
        ensure_finite(&values, "scaled")?;
        Ok(Self {
            values,
            layers: self.layers.clone(),
        })
    }

    /// `self - other`
    pub fn sub(&self, other: &Self) -> Result<Self> {
        axpy(-1.0, other, self)
    }

    /// `self + other`
    pub fn add(&self, other: &Self) -> Result<Self> {
        axpy(1.0, other, self)
    }

    /// In-place `self += alpha * x`; the accumulator is single-owner.
    pub fn add_scaled(&mut self, alpha: f64, x: &Self) -> Result<()> {
        ensure_same_dim(self.len(), x.len())?;
        if !alpha.is_finite() {
            return Err(Error::NonFinite(format!("alpha {alpha}")));
        }
        for (y, xi) in self.values.iter_mut().zip(&x.values) {
            *y += alpha * xi;
        }
        ensure_finite(&self.values, "accumulator")
    }

    pub fn distance_sq(&self, other: &Self) -> Result<f64> {
        ensure_same_dim(self.len(), other.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// Inner product `Σ aᵢbᵢ`.
pub fn dot(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    ensure_same_dim(a.len(), b.len())?;
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum())
}

/// `alpha * x + y`, keeping `y`'s layer partition.
pub fn axpy(alpha: f64, x: &ParamVector, y: &ParamVector) -> Result<ParamVector> {
    let mut out = y.clone();
    out.add_scaled(alpha, x)?;
    Ok(out)
}

/// Mean of equally sized vectors, summed in the given order.
pub fn mean(vectors: &[&ParamVector]) -> Result<ParamVector> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InvalidPartition("mean of zero vectors".into()))?;
    let mut acc = ParamVector::zeros(first.len());
    acc.layers = first.layers.clone();
    for v in vectors {
        acc.add_scaled(1.0, v)?;
    }
    let n = vectors.len() as f64;
    for x in acc.values.iter_mut() {
        *x /= n;
    }
    Ok(acc)
}

/// What a random stream is used for. Part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamPurpose {
    GradientNoise,
    Compressor,
    DataShuffle,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::GradientNoise => 0x6e6f_6973_6500_0001,
            StreamPurpose::Compressor => 0x636f_6d70_7200_0002,
            StreamPurpose::DataShuffle => 0x7368_7566_6600_0003,
        }
    }
}

/// Key identifying one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub client_id: u64,
    pub round: u64,
    pub purpose: StreamPurpose,
}

/// Deterministic random stream keyed by `(master_seed, client_id, round, purpose)`.
///
/// Streams are derived by hashing the key, never by advancing a shared
/// generator, so the order in which clients are evaluated cannot change any
/// draw.
#[derive(Debug, Clone)]
pub struct RngStream {
    key: StreamKey,
    rng: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_stream(
    master_seed: u64,
    client_id: u64,
    round: u64,
    purpose: StreamPurpose,
) -> RngStream {
    let key = StreamKey {
        master_seed,
        client_id,
        round,
        purpose,
    };
    let mut state = master_seed;
    let mut mix = 0u64;
    for word in [client_id, round, purpose.tag()] {
        mix = splitmix64(&mut state) ^ word.wrapping_mul(0xd6e8_feb8_6659_fd93);
        state ^= mix.rotate_left(17);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).wrapping_add(mix).to_le_bytes());
    }
    RngStream {
        key,
        rng: ChaCha8Rng::from_seed(seed),
    }
}

impl RngStream {
    pub fn key(&self) -> StreamKey {
        self.key
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(dot(&pv(&[2.0, 3.0]), &pv(&[2.0, 3.0])).unwrap(), 13.0);
        assert!(dot(&pv(&[1.0]), &pv(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn axpy_examples() {
        let x = pv(&[1.5, -2.0, 3.0]);
        let y = pv(&[0.25, 4.0, -1.0]);
        assert_eq!(axpy(0.0, &x, &y).unwrap(), y);
        assert_eq!(axpy(1.0, &x, &ParamVector::zeros(3)).unwrap(), x);
        assert!(axpy(-1.0, &x, &x).unwrap().is_zero());
        assert!(axpy(f64::NAN, &x, &y).is_err());
        assert!(axpy(f64::INFINITY, &x, &y).is_err());
        assert!(axpy(1.0, &x, &pv(&[1.0])).is_err());
    }

    #[test]
    fn overflow_is_rejected() {
        let big = pv(&[f64::MAX]);
        assert!(big.add(&big).is_err());
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn partitions() {
        let p = LayerPartition::from_sizes(&[2, 3, 1]).unwrap();
        assert_eq!(p.ranges(), &[0..2, 2..5, 5..6]);
        assert_eq!(p.dim(), 6);
        assert!(LayerPartition::new(vec![0..2, 3..4], 4).is_err());
        assert!(LayerPartition::new(vec![0..2, 2..4], 5).is_err());
        assert!(LayerPartition::new(vec![0..2, 2..2, 2..4], 4).is_err());
        assert!(pv(&[1.0, 2.0]).with_layers(p).is_err());
    }

    #[test]
    fn same_key_same_draws() {
        let mut a = derive_stream(42, 3, 7, StreamPurpose::Compressor);
        let mut b = derive_stream(42, 3, 7, StreamPurpose::Compressor);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn key_components_all_matter() {
        let first = |s: &mut RngStream| s.random::<u64>();
        let base = first(&mut derive_stream(1, 2, 3, StreamPurpose::GradientNoise));
        assert_ne!(base, first(&mut derive_stream(2, 2, 3, StreamPurpose::GradientNoise)));
        assert_ne!(base, first(&mut derive_stream(1, 3, 3, StreamPurpose::GradientNoise)));
        assert_ne!(base, first(&mut derive_stream(1, 2, 4, StreamPurpose::GradientNoise)));
        assert_ne!(base, first(&mut derive_stream(1, 2, 3, StreamPurpose::Compressor)));
    }
}
