//! Ridge-regularized logistic regression on per-client Gaussian blobs.
//!
//! Labels are `±1`. Each client has its own feature shift so the clients are
//! heterogeneous. `L = ridge + maxᵢ ¼ λmax(XᵢᵀXᵢ)/nᵢ` is an upper bound on the
//! Hessian of every `fᵢ`; `(a, b)` are estimated with `b = 2` fixed by taking
//! the largest implied `a` over a probe grid.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::{probe_grid, Constants, Dataset, FederatedObjective, Model, ObjectiveKind, Provenance};
use crate::error::{Error, Result};
use crate::vectors::{derive_stream, ParamVector, StreamPurpose};

pub const EMPIRICAL_B: f64 = 2.0;
const PROBE_RADII: [f64; 6] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0];
const PROBES_PER_RADIUS: usize = 32;

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn margin(row: &[f64], w: &[f64]) -> f64 {
    row.iter().zip(w).map(|(x, w)| x * w).sum()
}

pub(super) fn loss(data: &Dataset, ridge: f64, w: &[f64]) -> f64 {
    let n = data.len() as f64;
    let data_term: f64 = (0..data.len())
        .map(|i| softplus(-data.target(i) * margin(data.row(i), w)))
        .sum::<f64>()
        / n;
    data_term + 0.5 * ridge * w.iter().map(|v| v * v).sum::<f64>()
}

pub(super) fn grad(data: &Dataset, ridge: f64, w: &[f64]) -> Vec<f64> {
    let n = data.len() as f64;
    let mut g: Vec<f64> = w.iter().map(|v| ridge * v).collect();
    for i in 0..data.len() {
        let y = data.target(i);
        let coeff = -y * sigmoid(-y * margin(data.row(i), w)) / n;
        for (gj, xj) in g.iter_mut().zip(data.row(i)) {
            *gj += coeff * xj;
        }
    }
    g
}

/// `¼ λmax(XᵀX)/n` for one client.
fn smoothness_bound(data: &Dataset) -> f64 {
    let x = DMatrix::from_row_slice(data.len(), data.dim(), data.features());
    let gram = x.transpose() * &x;
    let lambda_max = gram
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    0.25 * lambda_max / data.len() as f64
}

/// Builds the objective from explicit client datasets.
pub fn logistic_from_datasets(clients: Vec<Dataset>, ridge: f64) -> Result<FederatedObjective> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidObjective(format!("ridge must be >= 0, got {ridge}")));
    }
    let dim = clients
        .first()
        .ok_or_else(|| Error::InvalidObjective("no clients".into()))?
        .dim();
    if clients.iter().any(|c| c.dim() != dim) {
        return Err(Error::InvalidObjective("clients disagree on dimension".into()));
    }
    let l = ridge + clients.iter().map(smoothness_bound).fold(0.0, f64::max);
    let mut obj = FederatedObjective {
        kind: ObjectiveKind::LogisticSynthetic,
        model: Model::Logistic { clients, ridge },
        dim,
        constants: Constants {
            mu: ridge,
            l: l.max(f64::MIN_POSITIVE),
            l_provenance: Provenance::Analytic,
            a: 0.0,
            b: EMPIRICAL_B,
            ab_provenance: Provenance::Empirical,
            w_star: None,
            f_star: None,
            optimum_provenance: None,
        },
        layers: None,
        init: ParamVector::zeros(dim),
    };
    let mut a: f64 = 0.0;
    for w in probe_grid(dim, 0x109_157, PROBES_PER_RADIUS, &PROBE_RADII) {
        let (lhs, global) = obj.dissimilarity_terms(&w)?;
        a = a.max(lhs - EMPIRICAL_B * global);
    }
    obj.constants.a = a;
    Ok(obj)
}

pub fn make_logistic(
    clients: usize,
    dim: usize,
    seed: u64,
    samples_per_client: usize,
    ridge: f64,
) -> Result<FederatedObjective> {
    if clients == 0 || dim == 0 {
        return Err(Error::InvalidObjective("need at least one client and one feature".into()));
    }
    if samples_per_client == 0 {
        return Err(Error::InvalidObjective("samples_per_client must be >= 1".into()));
    }
    let normal = |rng: &mut crate::vectors::RngStream| -> f64 { StandardNormal.sample(rng) };
    let mut global = derive_stream(seed, u64::MAX, 0, StreamPurpose::DataShuffle);
    let mut class_dir: Vec<f64> = (0..dim).map(|_| normal(&mut global)).collect();
    let norm = class_dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    class_dir.iter_mut().for_each(|v| *v *= 1.5 / norm);

    let datasets = (0..clients)
        .map(|c| {
            let mut rng = derive_stream(seed, c as u64, 0, StreamPurpose::DataShuffle);
            let shift: Vec<f64> = (0..dim).map(|_| 0.5 * normal(&mut rng)).collect();
            let mut features = Vec::with_capacity(samples_per_client * dim);
            let mut targets = Vec::with_capacity(samples_per_client);
            for i in 0..samples_per_client {
                let y = if i % 2 == 0 { 1.0 } else { -1.0 };
                for j in 0..dim {
                    features.push(y * class_dir[j] + shift[j] + normal(&mut rng));
                }
                targets.push(y);
            }
            Dataset::new(dim, features, targets)
        })
        .collect::<Result<Vec<_>>>()?;
    logistic_from_datasets(datasets, ridge)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_sets_strong_convexity() {
        let obj = make_logistic(3, 4, 11, 20, 0.1).unwrap();
        assert_eq!(obj.constants().mu, 0.1);
        assert!(obj.constants().l > 0.1);
        assert_eq!(obj.constants().l_provenance, Provenance::Analytic);
        assert_eq!(obj.constants().ab_provenance, Provenance::Empirical);
    }

    #[test]
    fn symmetric_labels_cancel_at_origin() {
        let ds = Dataset::new(2, vec![1.0, 2.0, 1.0, 2.0], vec![1.0, -1.0]).unwrap();
        let obj = logistic_from_datasets(vec![ds], 0.3).unwrap();
        let g = obj.grad(&ParamVector::zeros(2)).unwrap();
        assert!(g.norm() < 1e-15);
        assert!((obj.loss(&ParamVector::zeros(2)).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(make_logistic(2, 3, 0, 0, 0.1).is_err());
        assert!(make_logistic(2, 3, 0, 5, -1.0).is_err());
        let one_label = Dataset::new(1, vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert!(logistic_from_datasets(vec![one_label], 0.0).is_ok());
    }

    #[test]
    fn stable_for_large_margins() {
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn same_seed_same_data() {
        let a = make_logistic(2, 3, 5, 8, 0.0).unwrap();
        let b = make_logistic(2, 3, 5, 8, 0.0).unwrap();
        assert_eq!(a.datasets(), b.datasets());
        let c = make_logistic(2, 3, 6, 8, 0.0).unwrap();
        assert_ne!(a.datasets(), c.datasets());
    }
}
