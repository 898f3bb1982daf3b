//! Versioned binary snapshot of a run's complete algorithm state.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic     8 bytes   b"PFLSNAP\0"
//! version   u32
//! kind      u8
//! clients   u64
//! dim       u64
//! layers    u64 count, then count × u64 sizes (0 = no partition)
//! server    round u64, w, mirrors, memory, momentum
//! clients   round u64, history, error, direction, memory   (per client)
//! ```
//!
//! A vector is `dim` f64 values; a history is a u64 length followed by that
//! many vectors. RNG state is not stored: streams are keyed by round.

use std::collections::VecDeque;
use std::io::{Read, Write};

use super::{AlgorithmKind, ClientState, Mirror, ServerState};
use crate::error::{Error, Result};
use crate::vectors::{LayerPartition, ParamVector};

pub const SNAPSHOT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"PFLSNAP\0";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub kind: AlgorithmKind,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
}

struct Writer<W> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn u64(&mut self, v: u64) -> Result<()> {
        Ok(self.out.write_all(&v.to_le_bytes())?)
    }

    fn vector(&mut self, v: &ParamVector) -> Result<()> {
        for x in v.as_slice() {
            self.out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    fn history(&mut self, h: &VecDeque<ParamVector>) -> Result<()> {
        self.u64(h.len() as u64)?;
        h.iter().try_for_each(|v| self.vector(v))
    }
}

struct Reader<R> {
    input: R,
    dim: usize,
    layers: Option<LayerPartition>,
}

impl<R: Read> Reader<R> {
    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.input
            .read_exact(&mut b)
            .map_err(|e| Error::Snapshot(format!("truncated snapshot: {e}")))?;
        Ok(u64::from_le_bytes(b))
    }

    fn vector(&mut self) -> Result<ParamVector> {
        let values = (0..self.dim)
            .map(|_| self.u64().map(f64::from_bits))
            .collect::<Result<Vec<_>>>()?;
        let mut v = ParamVector::new(values).map_err(|e| Error::Snapshot(e.to_string()))?;
        v.set_layers(self.layers.clone());
        Ok(v)
    }

    fn history(&mut self) -> Result<VecDeque<ParamVector>> {
        let n = self.u64()?;
        if n > 1 << 20 {
            return Err(Error::Snapshot(format!("implausible history length {n}")));
        }
        (0..n).map(|_| self.vector()).collect()
    }
}

pub fn write_snapshot<W: Write>(snap: &Snapshot, out: W) -> Result<()> {
    let mut w = Writer { out };
    w.out.write_all(MAGIC)?;
    w.out.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.out.write_all(&[snap.kind.tag()])?;
    w.u64(snap.clients.len() as u64)?;
    w.u64(snap.server.w.len() as u64)?;
    match snap.server.w.layers() {
        Some(layers) => {
            w.u64(layers.len() as u64)?;
            for r in layers.ranges() {
                w.u64(r.len() as u64)?;
            }
        }
        None => w.u64(0)?,
    }
    let s = &snap.server;
    w.u64(s.round)?;
    w.vector(&s.w)?;
    w.u64(s.mirrors.len() as u64)?;
    for m in &s.mirrors {
        w.history(&m.history)?;
        w.vector(&m.direction)?;
    }
    w.vector(&s.memory)?;
    w.vector(&s.momentum)?;
    for c in &snap.clients {
        w.u64(c.round)?;
        w.history(&c.history)?;
        w.vector(&c.error)?;
        w.vector(&c.direction)?;
        w.vector(&c.memory)?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<Snapshot> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| Error::Snapshot("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let mut word = [0u8; 4];
    input
        .read_exact(&mut word)
        .map_err(|_| Error::Snapshot("truncated header".into()))?;
    let version = u32::from_le_bytes(word);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported snapshot version {version} (expected {SNAPSHOT_VERSION})"
        )));
    }
    let mut tag = [0u8; 1];
    input
        .read_exact(&mut tag)
        .map_err(|_| Error::Snapshot("truncated header".into()))?;
    let kind = AlgorithmKind::from_tag(tag[0])
        .ok_or_else(|| Error::Snapshot(format!("unknown algorithm tag {}", tag[0])))?;
    let mut r = Reader {
        input,
        dim: 0,
        layers: None,
    };
    let n_clients = r.u64()? as usize;
    r.dim = r.u64()? as usize;
    let n_layers = r.u64()?;
    if n_layers > 0 {
        let sizes = (0..n_layers)
            .map(|_| r.u64().map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let layers = LayerPartition::from_sizes(&sizes).map_err(|e| Error::Snapshot(e.to_string()))?;
        if layers.dim() != r.dim {
            return Err(Error::Snapshot("layer sizes do not cover the model".into()));
        }
        r.layers = Some(layers);
    }
    let round = r.u64()?;
    let w = r.vector()?;
    let n_mirrors = r.u64()? as usize;
    if n_mirrors != n_clients {
        return Err(Error::Snapshot(format!(
            "{n_mirrors} mirrors for {n_clients} clients"
        )));
    }
    let mirrors = (0..n_mirrors)
        .map(|_| {
            Ok(Mirror {
                history: r.history()?,
                direction: r.vector()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let server = ServerState {
        round,
        w,
        mirrors,
        memory: r.vector()?,
        momentum: r.vector()?,
    };
    let clients = (0..n_clients)
        .map(|_| {
            Ok(ClientState {
                round: r.u64()?,
                history: r.history()?,
                error: r.vector()?,
                direction: r.vector()?,
                memory: r.vector()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rest = Vec::new();
    r.input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Snapshot(format!("{} trailing bytes", rest.len())));
    }
    Ok(Snapshot {
        kind,
        server,
        clients,
    })
}
