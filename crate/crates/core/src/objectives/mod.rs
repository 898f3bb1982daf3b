//! Federated objectives `f = (1/M) Σᵢ fᵢ` with gradient oracles and the
//! constants the convergence bounds are stated in.

mod dataset;
mod logistic;
mod mlp;
mod quadratic;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use dataset::Dataset;
pub use logistic::{logistic_from_datasets, make_logistic};
pub use mlp::{make_tiny_mlp, mlp_from_datasets};
pub use quadratic::make_quadratic;

use crate::error::{Error, Result};
use crate::vectors::{LayerPartition, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    QuadraticShifted,
    LogisticSynthetic,
    TinyMlp,
}

/// How a constant was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Closed form, holds everywhere.
    Analytic,
    /// Estimated from samples or probes; not a proof.
    Empirical,
    /// Located by running an optimizer.
    Numerical,
}

/// Strong convexity, smoothness, gradient dissimilarity and optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// 0 when the objective is not strongly convex.
    pub mu: f64,
    pub l: f64,
    pub l_provenance: Provenance,
    /// Gradient dissimilarity: `(1/M) Σ ‖∇fᵢ(w)‖² ≤ a + b ‖∇f(w)‖²`.
    pub a: f64,
    pub b: f64,
    pub ab_provenance: Provenance,
    #[serde(skip)]
    pub w_star: Option<ParamVector>,
    pub f_star: Option<f64>,
    pub optimum_provenance: Option<Provenance>,
}

impl Constants {
    pub fn l_certified(&self) -> bool {
        self.l_provenance == Provenance::Analytic
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Model {
    Quadratic { centers: Vec<ParamVector> },
    Logistic { clients: Vec<Dataset>, ridge: f64 },
    Mlp { clients: Vec<Dataset>, d_in: usize, hidden: usize },
}

#[derive(Debug, Clone)]
pub struct FederatedObjective {
    kind: ObjectiveKind,
    model: Model,
    dim: usize,
    constants: Constants,
    layers: Option<LayerPartition>,
    init: ParamVector,
}

impl FederatedObjective {
    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn num_clients(&self) -> usize {
        match &self.model {
            Model::Quadratic { centers } => centers.len(),
            Model::Logistic { clients, .. } | Model::Mlp { clients, .. } => clients.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn constants_mut(&mut self) -> &mut Constants {
        &mut self.constants
    }

    /// Layer structure of the parameter vector, if any.
    pub fn layers(&self) -> Option<&LayerPartition> {
        self.layers.as_ref()
    }

    /// Default starting point: zeros, or a small seeded init for the network.
    pub fn initial_point(&self) -> ParamVector {
        self.init.clone()
    }

    /// Client datasets (empty for the quadratic suite).
    pub fn datasets(&self) -> &[Dataset] {
        match &self.model {
            Model::Quadratic { .. } => &[],
            Model::Logistic { clients, .. } | Model::Mlp { clients, .. } => clients,
        }
    }

    pub fn centers(&self) -> Option<&[ParamVector]> {
        match &self.model {
            Model::Quadratic { centers } => Some(centers),
            _ => None,
        }
    }

    fn check(&self, client: usize, w: &ParamVector) -> Result<()> {
        if client >= self.num_clients() {
            return Err(Error::InvalidObjective(format!(
                "client {client} out of range for {} clients",
                self.num_clients()
            )));
        }
        if w.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: w.len(),
            });
        }
        Ok(())
    }

    pub fn client_loss(&self, client: usize, w: &ParamVector) -> Result<f64> {
        self.check(client, w)?;
        let x = w.as_slice();
        Ok(match &self.model {
            Model::Quadratic { centers } => quadratic::loss(&centers[client], x),
            Model::Logistic { clients, ridge } => logistic::loss(&clients[client], *ridge, x),
            Model::Mlp {
                clients,
                d_in,
                hidden,
            } => mlp::loss(&clients[client], *d_in, *hidden, x),
        })
    }

    pub fn client_grad(&self, client: usize, w: &ParamVector) -> Result<ParamVector> {
        self.check(client, w)?;
        let x = w.as_slice();
        let g = match &self.model {
            Model::Quadratic { centers } => quadratic::grad(&centers[client], x),
            Model::Logistic { clients, ridge } => logistic::grad(&clients[client], *ridge, x),
            Model::Mlp {
                clients,
                d_in,
                hidden,
            } => mlp::grad(&clients[client], *d_in, *hidden, x),
        };
        let mut g = ParamVector::new(g)?;
        g.set_layers(self.layers.clone());
        Ok(g)
    }

    pub fn loss(&self, w: &ParamVector) -> Result<f64> {
        let m = self.num_clients();
        let mut total = 0.0;
        for i in 0..m {
            total += self.client_loss(i, w)?;
        }
        Ok(total / m as f64)
    }

    pub fn grad(&self, w: &ParamVector) -> Result<ParamVector> {
        let grads = (0..self.num_clients())
            .map(|i| self.client_grad(i, w))
            .collect::<Result<Vec<_>>>()?;
        crate::vectors::mean(&grads.iter().collect::<Vec<_>>())
    }

    /// `(1/M) Σ ‖∇fᵢ(w)‖²` and `‖∇f(w)‖²`.
    pub fn dissimilarity_terms(&self, w: &ParamVector) -> Result<(f64, f64)> {
        let grads = (0..self.num_clients())
            .map(|i| self.client_grad(i, w))
            .collect::<Result<Vec<_>>>()?;
        let lhs = grads.iter().map(ParamVector::norm_sq).sum::<f64>() / grads.len() as f64;
        let global = crate::vectors::mean(&grads.iter().collect::<Vec<_>>())?;
        Ok((lhs, global.norm_sq()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseDistribution {
    GaussianIso,
    UniformBall,
}

/// Additive gradient noise with `E[ξ] = 0` and `E‖ξ‖² = σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_distribution")]
    pub distribution: NoiseDistribution,
}

fn default_distribution() -> NoiseDistribution {
    NoiseDistribution::GaussianIso
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            sigma: 0.0,
            distribution: NoiseDistribution::GaussianIso,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self {
            sigma,
            distribution: NoiseDistribution::GaussianIso,
        }
    }

    pub fn uniform_ball(sigma: f64) -> Self {
        Self {
            sigma,
            distribution: NoiseDistribution::UniformBall,
        }
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&self, dim: usize, rng: &mut R) -> Vec<f64> {
        if self.sigma == 0.0 || dim == 0 {
            return vec![0.0; dim];
        }
        let d = dim as f64;
        match self.distribution {
            // per-coordinate variance σ²/d
            NoiseDistribution::GaussianIso => {
                let sd = self.sigma / d.sqrt();
                (0..dim)
                    .map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect()
            }
            // radius R with E‖ξ‖² = R² d/(d+2) = σ²
            NoiseDistribution::UniformBall => {
                let radius = self.sigma * ((d + 2.0) / d).sqrt();
                let mut dir: Vec<f64> = (0..dim)
                    .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                let r = radius * rng.random::<f64>().powf(1.0 / d);
                dir.iter_mut().for_each(|v| *v *= r / norm);
                dir
            }
        }
    }
}

/// `∇fᵢ(w) + ξ` with `ξ` drawn from `noise`.
pub fn stochastic_gradient<R: Rng + ?Sized>(
    obj: &FederatedObjective,
    client: usize,
    w: &ParamVector,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<ParamVector> {
    if w.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("iterate".into()));
    }
    let mut g = obj.client_grad(client, w)?;
    if noise.sigma > 0.0 {
        let xi = ParamVector::new(noise.sample(w.len(), rng))?;
        g.add_scaled(1.0, &xi)?;
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H2Report {
    /// `max (LHS − (a + b·‖∇f‖²))` over the probes.
    pub max_violation: f64,
    pub probes: usize,
}

/// Checks the gradient-dissimilarity inequality at every probe point.
pub fn verify_h2(obj: &FederatedObjective, probes: &[ParamVector]) -> Result<H2Report> {
    let c = obj.constants();
    let mut worst = f64::NEG_INFINITY;
    for w in probes {
        let (lhs, global) = obj.dissimilarity_terms(w)?;
        worst = worst.max(lhs - (c.a + c.b * global));
    }
    Ok(H2Report {
        max_violation: worst,
        probes: probes.len(),
    })
}

/// Seeded probe points: the origin plus random directions at several radii.
pub fn probe_grid(dim: usize, seed: u64, per_radius: usize, radii: &[f64]) -> Vec<ParamVector> {
    let mut rng = crate::vectors::derive_stream(seed, u64::MAX, 0, crate::vectors::StreamPurpose::DataShuffle);
    let mut out = vec![ParamVector::zeros(dim)];
    for &r in radii {
        for _ in 0..per_radius {
            let dir: Vec<f64> = (0..dim)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            out.push(ParamVector::new(dir.into_iter().map(|v| r * v / norm).collect()).expect("finite"));
        }
    }
    out
}

/// Gradient descent with step `1/L` until `‖∇f‖² ≤ tol` or `max_iters`.
/// Returns the final point and its value.
pub fn minimize_numerically(
    obj: &FederatedObjective,
    start: &ParamVector,
    tol: f64,
    max_iters: usize,
) -> Result<(ParamVector, f64)> {
    let step = 1.0 / obj.constants().l;
    let mut w = start.clone();
    for _ in 0..max_iters {
        let g = obj.grad(&w)?;
        if g.norm_sq() <= tol {
            break;
        }
        w.add_scaled(-step, &g)?;
    }
    let f = obj.loss(&w)?;
    Ok((w, f))
}
