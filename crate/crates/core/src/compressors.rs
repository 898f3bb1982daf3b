//! Compression operators `C: ℝᵈ → ℝᵈ` and their message forms.
//!
//! Three families are provided besides the identity:
//!
//! * **Rand-k** keeps a uniformly random `k`-subset of each layer and rescales
//!   it by `d/k`, which makes it unbiased with second-moment factor
//!   `β = d/k`.
//! * **Top-k** keeps the `k` largest-magnitude entries of each layer. It is
//!   biased but contractive: `‖C(g) − g‖² ≤ (1 − k/d)‖g‖²` for every `g`.
//!   Ties are broken towards the lower index.
//! * **QSGD** stochastically rounds `|gⱼ|/‖g‖` onto the grid `{0, 1/s, …, 1}`
//!   and sends the norm, the signs and the integer levels.
//!
//! # Certificates
//!
//! [`estimate_beta`] returns the unbiased second-moment factor. For QSGD the
//! per-coordinate variance is `(‖g‖/s)² p(1 − p)` where `p` is the fractional
//! part of `s|gⱼ|/‖g‖`. Using `p(1 − p) ≤ 1/4` and `Σp ≤ s‖g‖₁/‖g‖ ≤ s√d`
//! gives `β = 1 + min(d/(4s²), √d/s)` per layer.
//!
//! [`estimate_delta`] returns the contraction factor. For an unbiased
//! compressor with factor `β` the rescaled operator `C/β` satisfies
//! `E‖C(g)/β − g‖² = (E‖C(g)‖²/β² − 2/β + 1)‖g‖² ≤ (1 − 1/β)‖g‖²`, so
//! `δ = 1/β` is reported for Rand-k and QSGD; it certifies `C/β`, not `C`.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::{LayerPartition, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressorKind {
    Identity,
    RandK,
    TopK,
    Qsgd,
}

impl CompressorKind {
    pub fn is_unbiased(self) -> bool {
        !matches!(self, CompressorKind::TopK)
    }

    pub fn is_random(self) -> bool {
        matches!(self, CompressorKind::RandK | CompressorKind::Qsgd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorSpec {
    pub kind: CompressorKind,
    /// Fraction of each layer retained by Rand-k and Top-k.
    #[serde(default = "default_k_fraction")]
    pub k_fraction: f64,
    /// Number of QSGD quantization levels.
    #[serde(default = "default_levels")]
    pub s_levels: u32,
    /// Compress each layer of the vector's partition separately.
    #[serde(default)]
    pub layerwise: bool,
}

fn default_k_fraction() -> f64 {
    1.0
}

fn default_levels() -> u32 {
    1
}

impl CompressorSpec {
    pub fn identity() -> Self {
        Self {
            kind: CompressorKind::Identity,
            k_fraction: 1.0,
            s_levels: 1,
            layerwise: false,
        }
    }

    pub fn rand_k(k_fraction: f64) -> Self {
        Self {
            kind: CompressorKind::RandK,
            k_fraction,
            ..Self::identity()
        }
    }

    pub fn top_k(k_fraction: f64) -> Self {
        Self {
            kind: CompressorKind::TopK,
            k_fraction,
            ..Self::identity()
        }
    }

    pub fn qsgd(s_levels: u32) -> Self {
        Self {
            kind: CompressorKind::Qsgd,
            s_levels,
            ..Self::identity()
        }
    }

    pub fn layerwise(mut self, on: bool) -> Self {
        self.layerwise = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            return Err(Error::InvalidCompressor(format!(
                "k_fraction must lie in (0, 1], got {}",
                self.k_fraction
            )));
        }
        if self.s_levels == 0 {
            return Err(Error::InvalidCompressor("s_levels must be >= 1".into()));
        }
        Ok(())
    }

    /// Coordinates kept in a layer of `layer_dim` entries.
    pub fn k_eff(&self, layer_dim: usize) -> usize {
        let k = (self.k_fraction * layer_dim as f64).round() as usize;
        k.clamp(1, layer_dim.max(1))
    }

    /// Partition the compressor works on for a vector with `layers`.
    pub fn effective_partition(&self, v: &ParamVector) -> LayerPartition {
        if self.layerwise {
            v.partition()
        } else {
            LayerPartition::single(v.len())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Dense(Vec<f64>),
    /// Strictly increasing indices with one value each.
    Sparse { indices: Vec<u32>, values: Vec<f64> },
    /// One norm per block; a sign bit and a level in `[0, s]` per coordinate.
    Quantized {
        s: u32,
        blocks: Vec<Range<usize>>,
        norms: Vec<f64>,
        signs: Vec<bool>,
        levels: Vec<u32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMessage {
    pub payload: Payload,
    pub dim: usize,
}

impl CompressedMessage {
    pub fn dense(values: Vec<f64>) -> Self {
        let dim = values.len();
        Self {
            payload: Payload::Dense(values),
            dim,
        }
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            payload: Payload::Sparse {
                indices: Vec::new(),
                values: Vec::new(),
            },
            dim,
        }
    }

    /// Checks the structural invariants of the payload.
    pub fn validate(&self) -> Result<()> {
        match &self.payload {
            Payload::Dense(values) => {
                if values.len() != self.dim {
                    return Err(Error::MalformedMessage(format!(
                        "dense payload has {} values for dim {}",
                        values.len(),
                        self.dim
                    )));
                }
                finite(values)
            }
            Payload::Sparse { indices, values } => {
                if indices.len() != values.len() {
                    return Err(Error::MalformedMessage(
                        "sparse index/value length mismatch".into(),
                    ));
                }
                for w in indices.windows(2) {
                    if w[0] >= w[1] {
                        return Err(Error::MalformedMessage(
                            "sparse indices not strictly increasing".into(),
                        ));
                    }
                }
                if let Some(&last) = indices.last() {
                    if last as usize >= self.dim {
                        return Err(Error::MalformedMessage(format!(
                            "index {last} out of range for dim {}",
                            self.dim
                        )));
                    }
                }
                finite(values)
            }
            Payload::Quantized {
                s,
                blocks,
                norms,
                signs,
                levels,
            } => {
                if signs.len() != self.dim || levels.len() != self.dim {
                    return Err(Error::MalformedMessage(
                        "quantized sign/level length mismatch".into(),
                    ));
                }
                if blocks.len() != norms.len() {
                    return Err(Error::MalformedMessage("one norm per block required".into()));
                }
                LayerPartition::new(blocks.clone(), self.dim)
                    .map_err(|e| Error::MalformedMessage(e.to_string()))?;
                if let Some(n) = norms.iter().find(|n| !(n.is_finite() && **n >= 0.0)) {
                    return Err(Error::MalformedMessage(format!("invalid norm {n}")));
                }
                if *s == 0 {
                    return Err(Error::MalformedMessage("zero quantization levels".into()));
                }
                if let Some(l) = levels.iter().find(|&&l| l > *s) {
                    return Err(Error::MalformedMessage(format!("level {l} exceeds s = {s}")));
                }
                Ok(())
            }
        }
    }

    /// Number of coordinates carried explicitly (for sparse payloads).
    pub fn nnz(&self) -> usize {
        match &self.payload {
            Payload::Dense(v) => v.len(),
            Payload::Sparse { indices, .. } => indices.len(),
            Payload::Quantized { levels, .. } => levels.iter().filter(|&&l| l > 0).count(),
        }
    }
}

fn finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::MalformedMessage("non-finite value".into()))
    }
}

/// Reconstructs the dense vector carried by `msg`.
pub fn decode(msg: &CompressedMessage) -> Result<ParamVector> {
    msg.validate()?;
    let mut out = vec![0.0; msg.dim];
    match &msg.payload {
        Payload::Dense(values) => out.copy_from_slice(values),
        Payload::Sparse { indices, values } => {
            for (&i, &v) in indices.iter().zip(values) {
                out[i as usize] = v;
            }
        }
        Payload::Quantized {
            s,
            blocks,
            norms,
            signs,
            levels,
        } => {
            let s = f64::from(*s);
            for (block, &norm) in blocks.iter().zip(norms) {
                for j in block.clone() {
                    let mag = norm * f64::from(levels[j]) / s;
                    out[j] = if signs[j] { -mag } else { mag };
                }
            }
        }
    }
    ParamVector::new(out)
}

/// Applies the compressor. `rng` is only consumed by Rand-k and QSGD.
pub fn compress<R: Rng + ?Sized>(
    spec: &CompressorSpec,
    g: &ParamVector,
    rng: &mut R,
) -> Result<CompressedMessage> {
    spec.validate()?;
    let partition = spec.effective_partition(g);
    let x = g.as_slice();
    match spec.kind {
        CompressorKind::Identity => Ok(CompressedMessage::dense(x.to_vec())),
        CompressorKind::RandK => {
            let subsets = partition
                .ranges()
                .iter()
                .map(|r| {
                    let k = spec.k_eff(r.len());
                    let mut picked: Vec<usize> = rand::seq::index::sample(rng, r.len(), k)
                        .into_iter()
                        .map(|i| r.start + i)
                        .collect();
                    picked.sort_unstable();
                    picked
                })
                .collect::<Vec<_>>();
            rand_k_with_subsets(g, &partition, &subsets)
        }
        CompressorKind::TopK => {
            let mut indices = Vec::new();
            for r in partition.ranges() {
                indices.extend(top_k_indices(&x[r.clone()], spec.k_eff(r.len())).map(|i| i + r.start));
            }
            indices.sort_unstable();
            let values = indices.iter().map(|&i| x[i]).collect();
            Ok(CompressedMessage {
                payload: Payload::Sparse {
                    indices: indices.into_iter().map(|i| i as u32).collect(),
                    values,
                },
                dim: g.len(),
            })
        }
        CompressorKind::Qsgd => {
            if g.is_zero() {
                return Ok(CompressedMessage::zero(g.len()));
            }
            let s = spec.s_levels;
            let mut norms = Vec::with_capacity(partition.len());
            let mut signs = vec![false; g.len()];
            let mut levels = vec![0u32; g.len()];
            for r in partition.ranges() {
                let norm = x[r.clone()].iter().map(|v| v * v).sum::<f64>().sqrt();
                norms.push(norm);
                if norm == 0.0 {
                    continue;
                }
                for j in r.clone() {
                    signs[j] = x[j] < 0.0;
                    let ratio = (f64::from(s) * x[j].abs() / norm).clamp(0.0, f64::from(s));
                    let (lower, p_lower) = qsgd_lower_level(ratio, s);
                    levels[j] = if rng.random::<f64>() < p_lower {
                        lower
                    } else {
                        lower + 1
                    };
                }
            }
            Ok(CompressedMessage {
                payload: Payload::Quantized {
                    s,
                    blocks: partition.ranges().to_vec(),
                    norms,
                    signs,
                    levels,
                },
                dim: g.len(),
            })
        }
    }
}

/// Indices (relative to `x`) of the `k` largest magnitudes; ties go to the
/// lower index. Returned in selection order, not sorted.
fn top_k_indices(x: &[f64], k: usize) -> impl Iterator<Item = usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    let by_magnitude = |a: &usize, b: &usize| {
        x[*b].abs()
            .total_cmp(&x[*a].abs())
            .then_with(|| a.cmp(b))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k, by_magnitude);
        order.truncate(k);
    }
    order.into_iter()
}

/// For a scaled magnitude `ratio = s|gⱼ|/‖g‖ ∈ [0, s]`, the lower grid level
/// `ℓ ≤ s − 1` and the probability `1 + ℓ − ratio` of rounding down to it.
pub fn qsgd_lower_level(ratio: f64, s: u32) -> (u32, f64) {
    let lower = (ratio.floor() as u32).min(s - 1);
    let p_lower = (1.0 + f64::from(lower) - ratio).clamp(0.0, 1.0);
    (lower, p_lower)
}

/// Rand-k message for explicit per-layer subsets (global indices, sorted).
pub fn rand_k_with_subsets(
    g: &ParamVector,
    partition: &LayerPartition,
    subsets: &[Vec<usize>],
) -> Result<CompressedMessage> {
    if subsets.len() != partition.len() {
        return Err(Error::InvalidCompressor("one subset per layer required".into()));
    }
    let x = g.as_slice();
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for (r, subset) in partition.ranges().iter().zip(subsets) {
        if subset.is_empty() || subset.iter().any(|i| !r.contains(i)) {
            return Err(Error::InvalidCompressor(format!(
                "subset {subset:?} is not inside layer {r:?}"
            )));
        }
        let scale = r.len() as f64 / subset.len() as f64;
        for &i in subset {
            indices.push(i as u32);
            values.push(scale * x[i]);
        }
    }
    let msg = CompressedMessage {
        payload: Payload::Sparse { indices, values },
        dim: g.len(),
    };
    msg.validate()?;
    Ok(msg)
}

/// Unbiased second-moment factor `β` with `E‖C(g)‖² ≤ β‖g‖²`.
pub fn estimate_beta(spec: &CompressorSpec, partition: &LayerPartition) -> Result<f64> {
    spec.validate()?;
    let layers = layer_dims(spec, partition);
    match spec.kind {
        CompressorKind::Identity => Ok(1.0),
        CompressorKind::RandK => Ok(layers
            .map(|d| d as f64 / spec.k_eff(d) as f64)
            .fold(1.0, f64::max)),
        CompressorKind::Qsgd => {
            let s = f64::from(spec.s_levels);
            Ok(layers
                .map(|d| {
                    let d = d as f64;
                    1.0 + (d / (4.0 * s * s)).min(d.sqrt() / s)
                })
                .fold(1.0, f64::max))
        }
        CompressorKind::TopK => Err(Error::InvalidCompressor(
            "top-k is biased; it has a contraction factor, not a second-moment factor".into(),
        )),
    }
}

/// Contraction factor `δ` with `E‖C(g) − g‖² ≤ (1 − δ)‖g‖²`.
///
/// For Rand-k and QSGD this is `1/β`, the factor of the rescaled `C/β`.
pub fn estimate_delta(spec: &CompressorSpec, partition: &LayerPartition) -> Result<f64> {
    spec.validate()?;
    match spec.kind {
        CompressorKind::Identity => Ok(1.0),
        CompressorKind::TopK => Ok(layer_dims(spec, partition)
            .map(|d| spec.k_eff(d) as f64 / d as f64)
            .fold(1.0, f64::min)),
        CompressorKind::RandK | CompressorKind::Qsgd => Ok(1.0 / estimate_beta(spec, partition)?),
    }
}

fn layer_dims<'a>(
    spec: &CompressorSpec,
    partition: &'a LayerPartition,
) -> Box<dyn Iterator<Item = usize> + 'a> {
    if spec.layerwise {
        Box::new(partition.ranges().iter().map(|r| r.len()))
    } else {
        Box::new(std::iter::once(partition.dim()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectors::{derive_stream, StreamPurpose};

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn rng() -> crate::vectors::RngStream {
        derive_stream(7, 0, 0, StreamPurpose::Compressor)
    }

    #[test]
    fn top_k_keeps_largest_magnitudes() {
        let msg = compress(&CompressorSpec::top_k(0.5), &pv(&[3.0, -1.0, 0.5, -4.0]), &mut rng())
            .unwrap();
        assert_eq!(
            msg.payload,
            Payload::Sparse {
                indices: vec![0, 3],
                values: vec![3.0, -4.0]
            }
        );
    }

    #[test]
    fn top_k_ties_prefer_lower_index() {
        let g = pv(&[1.0, -1.0, 1.0, 1.0, 0.5]);
        let spec = CompressorSpec::top_k(0.4);
        let a = compress(&spec, &g, &mut rng()).unwrap();
        let b = compress(&spec, &g, &mut rng()).unwrap();
        assert_eq!(a, b);
        match a.payload {
            Payload::Sparse { indices, .. } => assert_eq!(indices, vec![0, 1]),
            _ => panic!("expected sparse"),
        }
    }

    #[test]
    fn top_k_layerwise_keeps_one_per_layer() {
        let g = pv(&[5.0, 4.0, 0.1, 0.2, -0.3])
            .with_layers(LayerPartition::from_sizes(&[2, 3]).unwrap())
            .unwrap();
        let flat = compress(&CompressorSpec::top_k(0.3), &g, &mut rng()).unwrap();
        let layered = compress(&CompressorSpec::top_k(0.3).layerwise(true), &g, &mut rng()).unwrap();
        match (flat.payload, layered.payload) {
            (Payload::Sparse { indices: a, .. }, Payload::Sparse { indices: b, .. }) => {
                assert_eq!(a, vec![0, 1]);
                // k_eff = max(1, round(0.3 * 2)) = 1 and round(0.3 * 3) = 1
                assert_eq!(b, vec![0, 4]);
            }
            _ => panic!("expected sparse"),
        }
    }

    #[test]
    fn k_eff_rounding() {
        let spec = CompressorSpec::top_k(0.01);
        assert_eq!(spec.k_eff(10), 1);
        assert_eq!(spec.k_eff(200), 2);
        assert_eq!(spec.k_eff(149), 1);
        assert_eq!(CompressorSpec::top_k(1.0).k_eff(7), 7);
    }

    #[test]
    fn decode_examples() {
        let sparse = CompressedMessage {
            payload: Payload::Sparse {
                indices: vec![1],
                values: vec![7.5],
            },
            dim: 3,
        };
        assert_eq!(decode(&sparse).unwrap(), pv(&[0.0, 7.5, 0.0]));
        let dense = CompressedMessage::dense(vec![1.0, -2.0]);
        assert_eq!(decode(&dense).unwrap(), pv(&[1.0, -2.0]));

        // QSGD s = 1, g = (3, 4): level 1 on the first coordinate decodes to ‖g‖ = 5.
        let quantized = CompressedMessage {
            payload: Payload::Quantized {
                s: 1,
                blocks: vec![0..2],
                norms: vec![5.0],
                signs: vec![false, false],
                levels: vec![1, 0],
            },
            dim: 2,
        };
        assert_eq!(decode(&quantized).unwrap(), pv(&[5.0, 0.0]));
    }

    #[test]
    fn decode_rejects_malformed() {
        let out_of_range = CompressedMessage {
            payload: Payload::Sparse {
                indices: vec![3],
                values: vec![1.0],
            },
            dim: 3,
        };
        assert!(decode(&out_of_range).is_err());
        let unsorted = CompressedMessage {
            payload: Payload::Sparse {
                indices: vec![1, 1],
                values: vec![1.0, 2.0],
            },
            dim: 3,
        };
        assert!(decode(&unsorted).is_err());
        let level_too_high = CompressedMessage {
            payload: Payload::Quantized {
                s: 2,
                blocks: vec![0..1],
                norms: vec![1.0],
                signs: vec![false],
                levels: vec![3],
            },
            dim: 1,
        };
        assert!(decode(&level_too_high).is_err());
    }

    #[test]
    fn identity_round_trip_is_exact() {
        let g = pv(&[0.1, -3.25, 1e-300, 7.0]);
        let msg = compress(&CompressorSpec::identity(), &g, &mut rng()).unwrap();
        assert_eq!(decode(&msg).unwrap(), g);
    }

    #[test]
    fn qsgd_zero_vector_is_exact_zero_message() {
        let msg = compress(&CompressorSpec::qsgd(4), &ParamVector::zeros(5), &mut rng()).unwrap();
        assert_eq!(msg, CompressedMessage::zero(5));
        assert!(decode(&msg).unwrap().is_zero());
    }

    #[test]
    fn qsgd_outcomes_for_three_four() {
        // s = 1, g = (3, 4): ratio for the first coordinate is 0.6, so level 1
        // (value 5) has probability 0.6 and level 0 has probability 0.4.
        let (lower, p) = qsgd_lower_level(0.6, 1);
        assert_eq!(lower, 0);
        assert!((p - 0.4).abs() < 1e-15);
        assert!((0.4 * 0.0 + 0.6 * 5.0 - 3.0f64).abs() < 1e-12);

        let g = pv(&[3.0, 4.0]);
        let mut stream = rng();
        for _ in 0..50 {
            let v = decode(&compress(&CompressorSpec::qsgd(1), &g, &mut stream).unwrap()).unwrap();
            assert!(v[0] == 0.0 || v[0] == 5.0);
        }
    }

    #[test]
    fn qsgd_unit_coordinate_goes_to_top_level() {
        let (lower, p) = qsgd_lower_level(2.0, 2);
        assert_eq!((lower, p), (1, 0.0));
    }

    #[test]
    fn certificates() {
        let p10 = LayerPartition::single(10);
        assert_eq!(estimate_beta(&CompressorSpec::identity(), &p10).unwrap(), 1.0);
        assert_eq!(estimate_beta(&CompressorSpec::rand_k(0.1), &p10).unwrap(), 10.0);
        assert!(estimate_beta(&CompressorSpec::top_k(0.5), &p10).is_err());
        let p4 = LayerPartition::single(4);
        assert_eq!(estimate_delta(&CompressorSpec::top_k(0.5), &p4).unwrap(), 0.5);
        assert_eq!(estimate_delta(&CompressorSpec::identity(), &p4).unwrap(), 1.0);
        assert_eq!(estimate_delta(&CompressorSpec::rand_k(0.5), &p4).unwrap(), 0.5);
        assert_eq!(estimate_beta(&CompressorSpec::qsgd(1), &p4).unwrap(), 2.0);
    }

    #[test]
    fn layerwise_certificates_use_worst_layer() {
        let p = LayerPartition::from_sizes(&[4, 10]).unwrap();
        let spec = CompressorSpec::rand_k(0.25).layerwise(true);
        // k_eff = 1 on the first layer, round(2.5) = 3 on the second.
        assert_eq!(estimate_beta(&spec, &p).unwrap(), 4.0);
        let spec = CompressorSpec::top_k(0.25).layerwise(true);
        assert_eq!(estimate_delta(&spec, &p).unwrap(), 0.25);
    }

    #[test]
    fn invalid_specs() {
        assert!(CompressorSpec::top_k(0.0).validate().is_err());
        assert!(CompressorSpec::top_k(1.5).validate().is_err());
        assert!(CompressorSpec::qsgd(0).validate().is_err());
    }
}
