//! `fᵢ(w) = ½‖w − cᵢ‖²`: μ = L = 1, `w* = c̄`, `a = (1/M) Σ ‖cᵢ − c̄‖²`, `b = 1`.

use super::{Constants, FederatedObjective, Model, ObjectiveKind, Provenance};
use crate::error::{Error, Result};
use crate::vectors::{mean, ParamVector};

pub(super) fn loss(center: &ParamVector, w: &[f64]) -> f64 {
    0.5 * w
        .iter()
        .zip(center.as_slice())
        .map(|(x, c)| (x - c) * (x - c))
        .sum::<f64>()
}

pub(super) fn grad(center: &ParamVector, w: &[f64]) -> Vec<f64> {
    w.iter().zip(center.as_slice()).map(|(x, c)| x - c).collect()
}

pub fn make_quadratic(centers: Vec<ParamVector>) -> Result<FederatedObjective> {
    let first = centers
        .first()
        .ok_or_else(|| Error::InvalidObjective("no client centers".into()))?;
    let dim = first.len();
    if let Some(bad) = centers.iter().find(|c| c.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    let w_star = mean(&centers.iter().collect::<Vec<_>>())?;
    let m = centers.len() as f64;
    let mut a = 0.0;
    for c in &centers {
        a += c.distance_sq(&w_star)?;
    }
    a /= m;
    let constants = Constants {
        mu: 1.0,
        l: 1.0,
        l_provenance: Provenance::Analytic,
        a,
        b: 1.0,
        ab_provenance: Provenance::Analytic,
        f_star: Some(a / 2.0),
        w_star: Some(w_star),
        optimum_provenance: Some(Provenance::Analytic),
    };
    Ok(FederatedObjective {
        kind: ObjectiveKind::QuadraticShifted,
        model: Model::Quadratic { centers },
        dim,
        constants,
        layers: None,
        init: ParamVector::zeros(dim),
    })
}
