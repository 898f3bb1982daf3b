//! Client and server state machines for the eight compressed-update methods.
//!
//! Every client owns its state; the server keeps a mirror of whatever
//! per-client direction state the method needs and rebuilds it from the
//! received message with the same arithmetic the client used, so the two
//! copies stay bit-identical. [`check_mirrors`] asserts that after a round.

mod snapshot;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accounting::{message_bits, CostModel};
use crate::compressors::{compress, decode, CompressedMessage, CompressorSpec};
use crate::error::{Error, Result};
use crate::vectors::{axpy, dot, mean, ParamVector};

pub use snapshot::{read_snapshot, write_snapshot, Snapshot, SNAPSHOT_VERSION};

/// `‖D̄‖²` at or below this is treated as a zero direction.
pub const DEGENERATE_NORM_SQ: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgorithmKind {
    #[serde(rename = "projfl")]
    ProjFl,
    #[serde(rename = "projfl-ef")]
    ProjFlEf,
    #[serde(rename = "fedavg-c")]
    FedAvgC,
    #[serde(rename = "ef")]
    Ef,
    #[serde(rename = "ef21")]
    Ef21,
    #[serde(rename = "ef21-gamma")]
    Ef21Gamma,
    #[serde(rename = "diana")]
    Diana,
    #[serde(rename = "diana-gamma")]
    DianaGamma,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 8] = [
        Self::ProjFl,
        Self::ProjFlEf,
        Self::FedAvgC,
        Self::Ef,
        Self::Ef21,
        Self::Ef21Gamma,
        Self::Diana,
        Self::DianaGamma,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ProjFl => "projfl",
            Self::ProjFlEf => "projfl-ef",
            Self::FedAvgC => "fedavg-c",
            Self::Ef => "ef",
            Self::Ef21 => "ef21",
            Self::Ef21Gamma => "ef21-gamma",
            Self::Diana => "diana",
            Self::DianaGamma => "diana-gamma",
        }
    }

    pub fn is_projection(self) -> bool {
        matches!(self, Self::ProjFl | Self::ProjFlEf)
    }

    pub fn carries_error(self) -> bool {
        matches!(self, Self::ProjFlEf | Self::Ef)
    }

    fn is_ef21(self) -> bool {
        matches!(self, Self::Ef21 | Self::Ef21Gamma)
    }

    fn tag(self) -> u8 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u8
    }

    fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidAlgorithm(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub kind: AlgorithmKind,
    pub eta: f64,
    /// History window `K` of the projection methods.
    #[serde(default = "default_k")]
    pub k_history: usize,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    /// Forgetting factor of the `-gamma` variants; ignored elsewhere.
    #[serde(default = "default_one")]
    pub gamma: f64,
    #[serde(default = "default_diana_alpha")]
    pub diana_alpha: f64,
    #[serde(default = "default_diana_beta")]
    pub diana_beta: f64,
    #[serde(default = "CompressorSpec::identity")]
    pub compressor: CompressorSpec,
    /// Project each layer on its own slice of `D̄` (one `α` per layer).
    #[serde(default)]
    pub layerwise_projection: bool,
}

fn default_k() -> usize {
    3
}

fn default_zeta() -> f64 {
    0.75
}

fn default_one() -> f64 {
    1.0
}

fn default_diana_alpha() -> f64 {
    0.9
}

fn default_diana_beta() -> f64 {
    0.1
}

impl AlgorithmConfig {
    pub fn new(kind: AlgorithmKind, eta: f64, compressor: CompressorSpec) -> Self {
        Self {
            kind,
            eta,
            k_history: default_k(),
            zeta: default_zeta(),
            gamma: default_one(),
            diana_alpha: default_diana_alpha(),
            diana_beta: default_diana_beta(),
            compressor,
            layerwise_projection: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidAlgorithm(msg));
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if self.k_history == 0 {
            return bad("k_history must be >= 1".into());
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return bad(format!("zeta must lie in (0, 1], got {}", self.zeta));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.diana_alpha > 0.0 && self.diana_alpha <= 1.0) {
            return bad(format!("diana_alpha must lie in (0, 1], got {}", self.diana_alpha));
        }
        if !(self.diana_beta >= 0.0 && self.diana_beta < 1.0) {
            return bad(format!("diana_beta must lie in [0, 1), got {}", self.diana_beta));
        }
        self.compressor.validate()
    }

    /// The forgetting factor actually applied: 1 for the plain variants.
    pub fn effective_gamma(&self) -> f64 {
        match self.kind {
            AlgorithmKind::Ef21Gamma | AlgorithmKind::DianaGamma => self.gamma,
            _ => 1.0,
        }
    }
}

/// Per-client state. Fields a method does not use stay at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub round: u64,
    /// Last `min(t+1, K)` descent directions, oldest first.
    pub history: VecDeque<ParamVector>,
    pub error: ParamVector,
    pub direction: ParamVector,
    pub memory: ParamVector,
}

impl ClientState {
    pub fn new(cfg: &AlgorithmConfig, zero: &ParamVector) -> Self {
        let mut history = VecDeque::with_capacity(cfg.k_history + 1);
        if cfg.kind.is_projection() {
            history.push_back(zero.clone());
        }
        Self {
            round: 0,
            history,
            error: zero.clone(),
            direction: zero.clone(),
            memory: zero.clone(),
        }
    }
}

/// What the server keeps for one client.
#[derive(Debug, Clone, PartialEq)]
pub struct Mirror {
    pub history: VecDeque<ParamVector>,
    pub direction: ParamVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub round: u64,
    pub w: ParamVector,
    pub mirrors: Vec<Mirror>,
    /// Aggregate memory `h` and momentum direction `D` of the DIANA family.
    pub memory: ParamVector,
    pub momentum: ParamVector,
}

impl ServerState {
    pub fn new(cfg: &AlgorithmConfig, w0: ParamVector, num_clients: usize) -> Self {
        let mut zero = ParamVector::zeros(w0.len());
        zero.set_layers(w0.layers().cloned());
        let init = ClientState::new(cfg, &zero);
        let mirror = Mirror {
            history: init.history,
            direction: zero.clone(),
        };
        Self {
            round: 0,
            w: w0,
            mirrors: vec![mirror; num_clients],
            memory: zero.clone(),
            momentum: zero,
        }
    }

    pub fn num_clients(&self) -> usize {
        self.mirrors.len()
    }

    /// A zero vector with the model's layer layout.
    pub fn zero(&self) -> ParamVector {
        let mut z = ParamVector::zeros(self.w.len());
        z.set_layers(self.w.layers().cloned());
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpload {
    /// Projection coefficients: empty, one, or one per layer.
    pub alphas: Vec<f64>,
    pub msg: CompressedMessage,
}

impl ClientUpload {
    pub fn bits(&self, model: &CostModel) -> u64 {
        message_bits(model, &self.msg, self.alphas.len())
    }
}

/// Splits `g = α·d̄ + g⊥` with `d̄·g⊥ = 0`; a (near-)zero `d̄` gives `α = 0`.
pub fn project_decompose(g: &ParamVector, d_bar: &ParamVector) -> Result<(f64, ParamVector)> {
    let nn = dot(d_bar, d_bar)?;
    if nn <= DEGENERATE_NORM_SQ {
        if g.len() != d_bar.len() {
            return Err(Error::DimensionMismatch {
                expected: d_bar.len(),
                actual: g.len(),
            });
        }
        return Ok((0.0, g.clone()));
    }
    let alpha = dot(g, d_bar)? / nn;
    Ok((alpha, axpy(-alpha, d_bar, g)?))
}

/// Mean of the stored directions, i.e. of the last `min(t+1, K)` of them.
pub fn history_average(history: &VecDeque<ParamVector>) -> Result<ParamVector> {
    mean(&history.iter().collect::<Vec<_>>())
}

fn push_history(history: &mut VecDeque<ParamVector>, d: ParamVector, k: usize) {
    history.push_back(d);
    while history.len() > k {
        history.pop_front();
    }
}

/// `g⊥` and the coefficients, on the flat vector or layer by layer.
fn decompose(
    g: &ParamVector,
    d_bar: &ParamVector,
    layerwise: bool,
) -> Result<(Vec<f64>, ParamVector)> {
    match g.layers() {
        Some(layers) if layerwise => {
            let mut perp = g.as_slice().to_vec();
            let mut alphas = Vec::with_capacity(layers.len());
            for r in layers.ranges() {
                let gl = ParamVector::new(g.as_slice()[r.clone()].to_vec())?;
                let dl = ParamVector::new(d_bar.as_slice()[r.clone()].to_vec())?;
                let (a, p) = project_decompose(&gl, &dl)?;
                perp[r.clone()].copy_from_slice(p.as_slice());
                alphas.push(a);
            }
            let mut perp = ParamVector::new(perp)?;
            perp.set_layers(g.layers().cloned());
            Ok((alphas, perp))
        }
        _ => {
            let (a, p) = project_decompose(g, d_bar)?;
            Ok((vec![a], p))
        }
    }
}

/// `Σ αₗ·d̄ₗ + M`, the direction rebuilt from a projection upload. Client and
/// server both call this so the result is bit-identical.
fn reconstruct(alphas: &[f64], d_bar: &ParamVector, m: &ParamVector) -> Result<ParamVector> {
    let mut out = m.clone();
    out.set_layers(d_bar.layers().cloned());
    match alphas {
        [a] => out.add_scaled(*a, d_bar)?,
        _ => {
            let layers = d_bar
                .layers()
                .ok_or_else(|| Error::MalformedMessage("per-layer alphas without layers".into()))?;
            if layers.len() != alphas.len() {
                return Err(Error::MalformedMessage(format!(
                    "{} alphas for {} layers",
                    alphas.len(),
                    layers.len()
                )));
            }
            let mut v = out.into_vec();
            for (r, a) in layers.ranges().iter().zip(alphas) {
                for j in r.clone() {
                    v[j] += a * d_bar[j];
                }
            }
            out = ParamVector::new(v)?;
            out.set_layers(d_bar.layers().cloned());
        }
    }
    Ok(out)
}

fn decoded(msg: &CompressedMessage, like: &ParamVector) -> Result<ParamVector> {
    if msg.dim != like.len() {
        return Err(Error::DimensionMismatch {
            expected: like.len(),
            actual: msg.dim,
        });
    }
    let mut m = decode(msg)?;
    m.set_layers(like.layers().cloned());
    Ok(m)
}

/// One client step at the broadcast model, given its stochastic gradient.
pub fn client_round<R: Rng + ?Sized>(
    cfg: &AlgorithmConfig,
    state: &mut ClientState,
    g: &ParamVector,
    rng: &mut R,
) -> Result<ClientUpload> {
    if g.len() != state.direction.len() {
        return Err(Error::DimensionMismatch {
            expected: state.direction.len(),
            actual: g.len(),
        });
    }
    if g.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    let mut g = g.clone();
    g.set_layers(state.direction.layers().cloned());
    let eta = cfg.eta;
    let gamma = cfg.effective_gamma();
    let spec = &cfg.compressor;

    let upload = match cfg.kind {
        AlgorithmKind::ProjFl => {
            let d_bar = history_average(&state.history)?;
            let (alphas, perp) = decompose(&g, &d_bar, cfg.layerwise_projection)?;
            let msg = compress(spec, &perp, rng)?;
            let d = reconstruct(&alphas, &d_bar, &decoded(&msg, &g)?)?;
            push_history(&mut state.history, d, cfg.k_history);
            ClientUpload { alphas, msg }
        }
        AlgorithmKind::ProjFlEf => {
            let d_bar = history_average(&state.history)?;
            let (alphas, perp) = decompose(&g, &d_bar, cfg.layerwise_projection)?;
            let target = axpy(eta, &perp, &state.error)?;
            let msg = compress(spec, &target, rng)?;
            let m = decoded(&msg, &g)?;
            let alphas: Vec<f64> = alphas.into_iter().map(|a| eta * a).collect();
            let d = reconstruct(&alphas, &d_bar, &m)?;
            state.error = target.sub(&m)?;
            push_history(&mut state.history, d, cfg.k_history);
            ClientUpload { alphas, msg }
        }
        AlgorithmKind::FedAvgC => ClientUpload {
            alphas: Vec::new(),
            msg: compress(spec, &g, rng)?,
        },
        AlgorithmKind::Ef => {
            let g_tilde = axpy(cfg.zeta, &state.error, &g)?;
            let msg = compress(spec, &g_tilde, rng)?;
            state.error = g_tilde.sub(&decoded(&msg, &g)?)?;
            ClientUpload {
                alphas: Vec::new(),
                msg,
            }
        }
        AlgorithmKind::Ef21 | AlgorithmKind::Ef21Gamma => {
            let target = axpy(-gamma, &state.direction, &g)?;
            let msg = compress(spec, &target, rng)?;
            state.direction = ef21_direction(gamma, &state.direction, &decoded(&msg, &g)?)?;
            ClientUpload {
                alphas: Vec::new(),
                msg,
            }
        }
        AlgorithmKind::Diana | AlgorithmKind::DianaGamma => {
            let target = axpy(-gamma, &state.memory, &g)?;
            let msg = compress(spec, &target, rng)?;
            state.memory = memory_update(gamma, cfg.diana_alpha, &state.memory, &decoded(&msg, &g)?)?;
            ClientUpload {
                alphas: Vec::new(),
                msg,
            }
        }
    };
    state.round += 1;
    Ok(upload)
}

fn ef21_direction(gamma: f64, d: &ParamVector, m: &ParamVector) -> Result<ParamVector> {
    axpy(gamma, d, m)
}

fn memory_update(gamma: f64, alpha: f64, h: &ParamVector, m: &ParamVector) -> Result<ParamVector> {
    let mut out = h.scaled(gamma)?;
    out.add_scaled(alpha, m)?;
    Ok(out)
}

/// Aggregates one upload per client (in client order) and moves `w`.
pub fn server_round(
    cfg: &AlgorithmConfig,
    server: &mut ServerState,
    uploads: &[ClientUpload],
) -> Result<()> {
    if uploads.len() != server.num_clients() {
        return Err(Error::UploadCount {
            expected: server.num_clients(),
            actual: uploads.len(),
        });
    }
    let eta = cfg.eta;
    let gamma = cfg.effective_gamma();
    let m_count = uploads.len() as f64;
    let zero = server.zero();
    let mut sum = zero.clone();

    match cfg.kind {
        AlgorithmKind::ProjFl | AlgorithmKind::ProjFlEf => {
            for (mirror, up) in server.mirrors.iter_mut().zip(uploads) {
                let d_bar = history_average(&mirror.history)?;
                let d = reconstruct(&up.alphas, &d_bar, &decoded(&up.msg, &zero)?)?;
                sum.add_scaled(1.0, &d)?;
                push_history(&mut mirror.history, d, cfg.k_history);
            }
            let step = if cfg.kind == AlgorithmKind::ProjFl {
                eta / m_count
            } else {
                1.0 / m_count
            };
            server.w.add_scaled(-step, &sum)?;
        }
        AlgorithmKind::FedAvgC | AlgorithmKind::Ef => {
            for up in uploads {
                sum.add_scaled(1.0, &decoded(&up.msg, &zero)?)?;
            }
            server.w.add_scaled(-eta / m_count, &sum)?;
        }
        AlgorithmKind::Ef21 | AlgorithmKind::Ef21Gamma => {
            for (mirror, up) in server.mirrors.iter_mut().zip(uploads) {
                mirror.direction =
                    ef21_direction(gamma, &mirror.direction, &decoded(&up.msg, &zero)?)?;
                sum.add_scaled(1.0, &mirror.direction)?;
            }
            server.w.add_scaled(-eta / m_count, &sum)?;
        }
        AlgorithmKind::Diana | AlgorithmKind::DianaGamma => {
            let ms = uploads
                .iter()
                .map(|up| decoded(&up.msg, &zero))
                .collect::<Result<Vec<_>>>()?;
            let m_bar = mean(&ms.iter().collect::<Vec<_>>())?;
            let mut d = server.momentum.scaled(cfg.diana_beta)?;
            d.add_scaled(gamma, &server.memory)?;
            d.add_scaled(1.0, &m_bar)?;
            server.memory = memory_update(gamma, cfg.diana_alpha, &server.memory, &m_bar)?;
            server.w.add_scaled(-eta, &d)?;
            server.momentum = d;
        }
    }
    server.round += 1;
    Ok(())
}

fn bits_equal(a: &ParamVector, b: &ParamVector) -> bool {
    a.len() == b.len()
        && a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Fails unless every server mirror equals its client's state bit for bit.
pub fn check_mirrors(
    cfg: &AlgorithmConfig,
    server: &ServerState,
    clients: &[ClientState],
) -> Result<()> {
    for (i, (mirror, client)) in server.mirrors.iter().zip(clients).enumerate() {
        let ok = if cfg.kind.is_projection() {
            mirror.history.len() == client.history.len()
                && mirror
                    .history
                    .iter()
                    .zip(&client.history)
                    .all(|(a, b)| bits_equal(a, b))
        } else if cfg.kind.is_ef21() {
            bits_equal(&mirror.direction, &client.direction)
        } else {
            true
        };
        if !ok {
            return Err(Error::MirrorDesync {
                client: i,
                round: server.round as usize,
            });
        }
    }
    Ok(())
}

/// The auxiliary sequence `w̃ = w − ē` for the error-carrying methods.
///
/// ProjFL+EF stores errors in model units, so `w̃ = w − ē`. EF stores them in
/// gradient units, so `w̃ = w − η·ē`. Diagnostic only.
pub fn diagnostic_tilde_w(
    cfg: &AlgorithmConfig,
    w: &ParamVector,
    clients: &[ClientState],
) -> Result<ParamVector> {
    let scale = match cfg.kind {
        AlgorithmKind::ProjFlEf => 1.0,
        AlgorithmKind::Ef => cfg.eta,
        other => {
            return Err(Error::InvalidAlgorithm(format!(
                "{other} carries no compression error"
            )))
        }
    };
    let e_bar = mean(&clients.iter().map(|c| &c.error).collect::<Vec<_>>())?;
    axpy(-scale, &e_bar, w)
}
