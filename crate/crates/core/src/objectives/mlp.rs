//! One-hidden-layer tanh network with squared loss and hand-written backprop.
//!
//! Parameters are laid out as `[W₁ (hidden × d_in, row-major), b₁, w₂, b₂]`
//! and carry the matching four-layer partition. The prediction is
//! `ŷ = w₂·tanh(W₁x + b₁) + b₂` and `fᵢ = (1/2nᵢ) Σ (ŷ − y)²`, so `fᵢ ≥ 0`.
//! The smoothness constant is a sampled Lipschitz estimate and is flagged as
//! empirical.

use rand_distr::{Distribution, StandardNormal};

use super::{Constants, Dataset, FederatedObjective, Model, ObjectiveKind, Provenance};
use crate::error::{Error, Result};
use crate::vectors::{derive_stream, LayerPartition, ParamVector, StreamPurpose};

const LIPSCHITZ_PAIRS: usize = 200;

pub fn param_dim(d_in: usize, hidden: usize) -> usize {
    hidden * d_in + 2 * hidden + 1
}

struct Params<'a> {
    w1: &'a [f64],
    b1: &'a [f64],
    w2: &'a [f64],
    b2: f64,
}

fn split(w: &[f64], d_in: usize, hidden: usize) -> Params<'_> {
    let (w1, rest) = w.split_at(hidden * d_in);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, rest) = rest.split_at(hidden);
    Params {
        w1,
        b1,
        w2,
        b2: rest[0],
    }
}

fn hidden_activations(p: &Params<'_>, x: &[f64], out: &mut [f64]) {
    let d_in = x.len();
    for (h, a) in out.iter_mut().enumerate() {
        let row = &p.w1[h * d_in..(h + 1) * d_in];
        let z: f64 = row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + p.b1[h];
        *a = z.tanh();
    }
}

pub(super) fn loss(data: &Dataset, d_in: usize, hidden: usize, w: &[f64]) -> f64 {
    let p = split(w, d_in, hidden);
    let mut act = vec![0.0; hidden];
    let mut total = 0.0;
    for i in 0..data.len() {
        hidden_activations(&p, data.row(i), &mut act);
        let y_hat: f64 = act.iter().zip(p.w2).map(|(a, w)| a * w).sum::<f64>() + p.b2;
        let r = y_hat - data.target(i);
        total += 0.5 * r * r;
    }
    total / data.len() as f64
}

pub(super) fn grad(data: &Dataset, d_in: usize, hidden: usize, w: &[f64]) -> Vec<f64> {
    let p = split(w, d_in, hidden);
    let n = data.len() as f64;
    let mut g = vec![0.0; w.len()];
    let (g_w1, rest) = g.split_at_mut(hidden * d_in);
    let (g_b1, rest) = rest.split_at_mut(hidden);
    let (g_w2, g_b2) = rest.split_at_mut(hidden);
    let mut act = vec![0.0; hidden];
    for i in 0..data.len() {
        let x = data.row(i);
        hidden_activations(&p, x, &mut act);
        let y_hat: f64 = act.iter().zip(p.w2).map(|(a, w)| a * w).sum::<f64>() + p.b2;
        let r = (y_hat - data.target(i)) / n;
        g_b2[0] += r;
        for h in 0..hidden {
            g_w2[h] += r * act[h];
            let dz = r * p.w2[h] * (1.0 - act[h] * act[h]);
            g_b1[h] += dz;
            for (gw, xj) in g_w1[h * d_in..(h + 1) * d_in].iter_mut().zip(x) {
                *gw += dz * xj;
            }
        }
    }
    g
}

fn seeded_init(d_in: usize, hidden: usize, seed: u64) -> Vec<f64> {
    let mut rng = derive_stream(seed, u64::MAX - 1, 0, StreamPurpose::DataShuffle);
    let mut w = vec![0.0; param_dim(d_in, hidden)];
    let s1 = 1.0 / (d_in as f64).sqrt();
    let s2 = 1.0 / (hidden as f64).sqrt();
    for v in &mut w[..hidden * d_in] {
        *v = s1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    }
    let w2_start = hidden * d_in + hidden;
    for v in &mut w[w2_start..w2_start + hidden] {
        *v = s2 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    }
    w
}

/// Builds the network objective over explicit client datasets.
pub fn mlp_from_datasets(
    clients: Vec<Dataset>,
    hidden: usize,
    seed: u64,
) -> Result<FederatedObjective> {
    if hidden == 0 {
        return Err(Error::InvalidObjective("hidden must be >= 1".into()));
    }
    let d_in = clients
        .first()
        .ok_or_else(|| Error::InvalidObjective("no clients".into()))?
        .dim();
    if clients.iter().any(|c| c.dim() != d_in) {
        return Err(Error::InvalidObjective("clients disagree on dimension".into()));
    }
    let dim = param_dim(d_in, hidden);
    let layers = LayerPartition::from_sizes(&[hidden * d_in, hidden, hidden, 1])?;
    let init = ParamVector::new(seeded_init(d_in, hidden, seed))?.with_layers(layers.clone())?;
    let mut obj = FederatedObjective {
        kind: ObjectiveKind::TinyMlp,
        model: Model::Mlp {
            clients,
            d_in,
            hidden,
        },
        dim,
        constants: Constants {
            mu: 0.0,
            l: 1.0,
            l_provenance: Provenance::Empirical,
            a: 0.0,
            b: 2.0,
            ab_provenance: Provenance::Empirical,
            w_star: None,
            f_star: None,
            optimum_provenance: None,
        },
        layers: Some(layers),
        init,
    };
    obj.constants.l = empirical_lipschitz(&obj, seed)?;
    let mut a: f64 = 0.0;
    for w in super::probe_grid(dim, seed ^ 0x3a3a, 16, &[0.5, 1.0, 2.0]) {
        let (lhs, global) = obj.dissimilarity_terms(&w)?;
        a = a.max(lhs - obj.constants.b * global);
    }
    obj.constants.a = a;
    Ok(obj)
}

fn empirical_lipschitz(obj: &FederatedObjective, seed: u64) -> Result<f64> {
    let mut rng = derive_stream(seed, u64::MAX - 2, 0, StreamPurpose::DataShuffle);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let base = obj.initial_point();
    let mut best = f64::MIN_POSITIVE;
    for k in 0..LIPSCHITZ_PAIRS {
        let spread = [1e-3, 0.1, 1.0][k % 3];
        let x: Vec<f64> = base.as_slice().iter().map(|v| v + normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| v + spread * normal()).collect();
        let x = ParamVector::new(x)?;
        let y = ParamVector::new(y)?;
        let gx = obj.grad(&x)?;
        let gy = obj.grad(&y)?;
        let ratio = (gx.distance_sq(&gy)? / x.distance_sq(&y)?).sqrt();
        if ratio.is_finite() {
            best = best.max(ratio);
        }
    }
    Ok(best)
}

pub fn make_tiny_mlp(
    clients: usize,
    d_in: usize,
    hidden: usize,
    seed: u64,
    samples_per_client: usize,
) -> Result<FederatedObjective> {
    if clients == 0 || d_in == 0 || samples_per_client == 0 {
        return Err(Error::InvalidObjective(
            "need at least one client, input and sample".into(),
        ));
    }
    if hidden == 0 {
        return Err(Error::InvalidObjective("hidden must be >= 1".into()));
    }
    let teacher = seeded_init(d_in, hidden, seed ^ 0x7eac4e5);
    let datasets = (0..clients)
        .map(|c| {
            let mut rng = derive_stream(seed, c as u64, 0, StreamPurpose::DataShuffle);
            let shift = 0.3 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
            let mut features = Vec::with_capacity(samples_per_client * d_in);
            let mut targets = Vec::with_capacity(samples_per_client);
            let p = split(&teacher, d_in, hidden);
            let mut act = vec![0.0; hidden];
            for _ in 0..samples_per_client {
                let x: Vec<f64> = (0..d_in)
                    .map(|_| shift + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect();
                hidden_activations(&p, &x, &mut act);
                let out: f64 = act.iter().zip(p.w2).map(|(a, w)| a * w).sum::<f64>() + p.b2;
                targets.push(if out >= 0.0 { 1.0 } else { -1.0 });
                features.extend(x);
            }
            Dataset::new(d_in, features, targets)
        })
        .collect::<Result<Vec<_>>>()?;
    mlp_from_datasets(datasets, hidden, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_everything_is_stationary() {
        let ds = Dataset::new(3, vec![0.0; 12], vec![0.0; 4]).unwrap();
        let obj = mlp_from_datasets(vec![ds], 2, 1).unwrap();
        let w = ParamVector::zeros(obj.dim());
        assert_eq!(obj.loss(&w).unwrap(), 0.0);
        assert!(obj.grad(&w).unwrap().is_zero());
    }

    #[test]
    fn layout_and_flags() {
        let obj = make_tiny_mlp(2, 3, 4, 9, 10).unwrap();
        assert_eq!(obj.dim(), 4 * 3 + 4 + 4 + 1);
        assert_eq!(obj.layers().unwrap().len(), 4);
        assert_eq!(obj.constants().mu, 0.0);
        assert_eq!(obj.constants().l_provenance, Provenance::Empirical);
        assert!(obj.constants().l > 0.0);
        let g = obj.client_grad(0, &obj.initial_point()).unwrap();
        assert_eq!(g.layers(), obj.layers());
    }

    #[test]
    fn loss_non_negative() {
        let obj = make_tiny_mlp(2, 3, 4, 9, 10).unwrap();
        for s in 0..10 {
            let w = super::super::probe_grid(obj.dim(), s, 1, &[3.0]).pop().unwrap();
            assert!(obj.loss(&w).unwrap() >= 0.0);
        }
    }

    #[test]
    fn invalid_shapes() {
        assert!(make_tiny_mlp(2, 3, 0, 1, 5).is_err());
        assert!(make_tiny_mlp(2, 3, 2, 1, 0).is_err());
    }
}
