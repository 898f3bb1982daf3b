//! Bit-cost model for uplink messages and downlink broadcasts.
//!
//! A sparse message costs `n · (value_bits + index_bits)`; a dense one
//! `d · value_bits`; a quantized one a norm per block, one sign bit and
//! `⌈log₂(s + 1)⌉` level bits per coordinate. Downlink broadcasts are delta
//! encoded: only coordinates whose 32-bit broadcast value changed are sent,
//! as value/index pairs.
//!
//! [`serialize`] produces the canonical bit-packed byte form whose length is
//! exactly `⌈message_bits / 8⌉` (header bits are written as zeros).

use serde::{Deserialize, Serialize};

use crate::compressors::{CompressedMessage, Payload};
use crate::error::{Error, Result};
use crate::vectors::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexBitsMode {
    Fixed32,
    CeilLog2Dim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostModel {
    #[serde(default = "default_32")]
    pub value_bits: u32,
    #[serde(default = "default_index_mode")]
    pub index_bits_mode: IndexBitsMode,
    #[serde(default = "default_32")]
    pub scalar_bits: u32,
    #[serde(default)]
    pub header_bits: u32,
}

fn default_32() -> u32 {
    32
}

fn default_index_mode() -> IndexBitsMode {
    IndexBitsMode::Fixed32
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            value_bits: 32,
            index_bits_mode: IndexBitsMode::Fixed32,
            scalar_bits: 32,
            header_bits: 0,
        }
    }
}

impl CostModel {
    pub fn ceil_log2() -> Self {
        Self {
            index_bits_mode: IndexBitsMode::CeilLog2Dim,
            ..Self::default()
        }
    }

    pub fn index_bits(&self, dim: usize) -> u64 {
        match self.index_bits_mode {
            IndexBitsMode::Fixed32 => 32,
            IndexBitsMode::CeilLog2Dim => ceil_log2(dim as u64),
        }
    }
}

fn ceil_log2(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        u64::from(64 - (n - 1).leading_zeros())
    }
}

/// Bits needed to store one QSGD level in `[0, s]`.
pub fn level_bits(s: u32) -> u64 {
    ceil_log2(u64::from(s) + 1)
}

/// Cost of `msg` plus `extra_scalars` side scalars (e.g. the projection
/// coefficient).
pub fn message_bits(model: &CostModel, msg: &CompressedMessage, extra_scalars: usize) -> u64 {
    let value = u64::from(model.value_bits);
    let d = msg.dim as u64;
    let body = match &msg.payload {
        Payload::Dense(_) => d * value,
        Payload::Sparse { indices, .. } => {
            indices.len() as u64 * (value + model.index_bits(msg.dim)) + u64::from(model.header_bits)
        }
        Payload::Quantized { s, norms, .. } => {
            norms.len() as u64 * value + d + d * level_bits(*s) + u64::from(model.header_bits)
        }
    };
    body + extra_scalars as u64 * u64::from(model.scalar_bits)
}

/// Coordinates whose 32-bit broadcast value differs between `prev` and `next`.
pub fn changed_coordinates(prev: &ParamVector, next: &ParamVector) -> Result<usize> {
    if prev.len() != next.len() {
        return Err(Error::DimensionMismatch {
            expected: prev.len(),
            actual: next.len(),
        });
    }
    Ok(prev
        .as_slice()
        .iter()
        .zip(next.as_slice())
        .filter(|(a, b)| (**a as f32).to_bits() != (**b as f32).to_bits())
        .count())
}

/// Delta-encoded broadcast cost for one receiving client.
pub fn downlink_bits(model: &CostModel, prev: &ParamVector, next: &ParamVector) -> Result<u64> {
    let changed = changed_coordinates(prev, next)? as u64;
    Ok(changed * (u64::from(model.value_bits) + model.index_bits(prev.len())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTraffic {
    pub uplink_per_client: Vec<u64>,
    pub uplink_total: u64,
    pub downlink_total: u64,
    pub cumulative: u64,
}

/// Per-round and cumulative traffic. Appended to by the sequential server phase.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficLedger {
    rounds: Vec<RoundTraffic>,
}

impl TrafficLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, uplink_per_client: Vec<u64>, downlink_total: u64) -> &RoundTraffic {
        let uplink_total = uplink_per_client.iter().sum();
        let cumulative = self.cumulative() + uplink_total + downlink_total;
        self.rounds.push(RoundTraffic {
            uplink_per_client,
            uplink_total,
            downlink_total,
            cumulative,
        });
        self.rounds.last().expect("just pushed")
    }

    pub fn cumulative(&self) -> u64 {
        self.rounds.last().map_or(0, |r| r.cumulative)
    }

    pub fn rounds(&self) -> &[RoundTraffic] {
        &self.rounds
    }
}

/// Shape information shared by sender and receiver, not carried on the wire.
#[derive(Debug, Clone, PartialEq)]
pub enum WireLayout {
    Dense { dim: usize },
    Sparse { dim: usize, nnz: usize },
    Quantized { dim: usize, s: u32, blocks: Vec<std::ops::Range<usize>> },
}

impl WireLayout {
    pub fn of(msg: &CompressedMessage) -> Self {
        match &msg.payload {
            Payload::Dense(_) => WireLayout::Dense { dim: msg.dim },
            Payload::Sparse { indices, .. } => WireLayout::Sparse {
                dim: msg.dim,
                nnz: indices.len(),
            },
            Payload::Quantized { s, blocks, .. } => WireLayout::Quantized {
                dim: msg.dim,
                s: *s,
                blocks: blocks.clone(),
            },
        }
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    used: u64,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            used: 0,
        }
    }

    fn put(&mut self, value: u64, width: u64) {
        for bit in (0..width).rev() {
            if self.used.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if (value >> bit) & 1 == 1 {
                let last = self.bytes.last_mut().expect("byte pushed");
                *last |= 0x80 >> (self.used % 8);
            }
            self.used += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl BitReader<'_> {
    fn take(&mut self, width: u64) -> Result<u64> {
        let mut out = 0u64;
        for _ in 0..width {
            let byte = self
                .bytes
                .get((self.pos / 8) as usize)
                .ok_or_else(|| Error::MalformedMessage("truncated message".into()))?;
            let bit = (byte >> (7 - self.pos % 8)) & 1;
            out = (out << 1) | u64::from(bit);
            self.pos += 1;
        }
        Ok(out)
    }
}

fn put_value(w: &mut BitWriter, v: f64, bits: u32) -> Result<()> {
    match bits {
        32 => w.put(u64::from((v as f32).to_bits()), 32),
        64 => w.put(v.to_bits(), 64),
        other => {
            return Err(Error::MalformedMessage(format!(
                "value width {other} is not serializable"
            )))
        }
    }
    Ok(())
}

fn take_value(r: &mut BitReader<'_>, bits: u32) -> Result<f64> {
    match bits {
        32 => Ok(f64::from(f32::from_bits(r.take(32)? as u32))),
        64 => Ok(f64::from_bits(r.take(64)?)),
        other => Err(Error::MalformedMessage(format!(
            "value width {other} is not serializable"
        ))),
    }
}

/// Canonical MSB-first bit packing of `msg` under `model`.
pub fn serialize(model: &CostModel, msg: &CompressedMessage) -> Result<Vec<u8>> {
    msg.validate()?;
    let mut w = BitWriter::new();
    match &msg.payload {
        Payload::Dense(values) => {
            for &v in values {
                put_value(&mut w, v, model.value_bits)?;
            }
        }
        Payload::Sparse { indices, values } => {
            w.put(0, u64::from(model.header_bits));
            let ib = model.index_bits(msg.dim);
            for (&i, &v) in indices.iter().zip(values) {
                w.put(u64::from(i), ib);
                put_value(&mut w, v, model.value_bits)?;
            }
        }
        Payload::Quantized {
            s,
            norms,
            signs,
            levels,
            ..
        } => {
            w.put(0, u64::from(model.header_bits));
            for &n in norms {
                put_value(&mut w, n, model.value_bits)?;
            }
            for &neg in signs {
                w.put(u64::from(neg), 1);
            }
            let lb = level_bits(*s);
            for &l in levels {
                w.put(u64::from(l), lb);
            }
        }
    }
    Ok(w.bytes)
}

/// Inverse of [`serialize`]; values come back rounded to the wire width.
pub fn deserialize(model: &CostModel, layout: &WireLayout, bytes: &[u8]) -> Result<CompressedMessage> {
    let mut r = BitReader { bytes, pos: 0 };
    let msg = match layout {
        WireLayout::Dense { dim } => {
            let values = (0..*dim)
                .map(|_| take_value(&mut r, model.value_bits))
                .collect::<Result<Vec<_>>>()?;
            CompressedMessage::dense(values)
        }
        WireLayout::Sparse { dim, nnz } => {
            r.take(u64::from(model.header_bits))?;
            let ib = model.index_bits(*dim);
            let mut indices = Vec::with_capacity(*nnz);
            let mut values = Vec::with_capacity(*nnz);
            for _ in 0..*nnz {
                indices.push(r.take(ib)? as u32);
                values.push(take_value(&mut r, model.value_bits)?);
            }
            CompressedMessage {
                payload: Payload::Sparse { indices, values },
                dim: *dim,
            }
        }
        WireLayout::Quantized { dim, s, blocks } => {
            r.take(u64::from(model.header_bits))?;
            let norms = blocks
                .iter()
                .map(|_| take_value(&mut r, model.value_bits))
                .collect::<Result<Vec<_>>>()?;
            let signs = (0..*dim)
                .map(|_| r.take(1).map(|b| b == 1))
                .collect::<Result<Vec<_>>>()?;
            let lb = level_bits(*s);
            let levels = (0..*dim)
                .map(|_| r.take(lb).map(|l| l as u32))
                .collect::<Result<Vec<_>>>()?;
            CompressedMessage {
                payload: Payload::Quantized {
                    s: *s,
                    blocks: blocks.clone(),
                    norms,
                    signs,
                    levels,
                },
                dim: *dim,
            }
        }
    };
    if r.pos.div_ceil(8) as usize != bytes.len() {
        return Err(Error::MalformedMessage("trailing bytes".into()));
    }
    msg.validate()?;
    Ok(msg)
}
