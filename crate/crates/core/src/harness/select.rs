//! Choosing `w^out` from a trajectory `w₀ … w_T`.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vectors::ParamVector;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputRule {
    #[default]
    Last,
    UniformRandom,
    /// `P(t) ∝ (1 − ημ/2)^{−t}`
    GeometricWeighted,
}

/// Selection probabilities over `len` iterates.
pub fn output_weights(rule: OutputRule, len: usize, eta: f64, mu: f64) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::InvalidRun("empty trajectory".into()));
    }
    Ok(match rule {
        OutputRule::Last => {
            let mut w = vec![0.0; len];
            w[len - 1] = 1.0;
            w
        }
        OutputRule::UniformRandom => vec![1.0 / len as f64; len],
        OutputRule::GeometricWeighted => {
            if !(mu > 0.0) {
                return Err(Error::InvalidRun("geometric weighting needs mu > 0".into()));
            }
            let r = 1.0 - eta * mu / 2.0;
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidRun(format!("eta*mu/2 = {} outside (0, 1)", eta * mu / 2.0)));
            }
            // log θ_t − log θ_T = (T − t)·ln r ≤ 0
            let last = (len - 1) as f64;
            let raw: Vec<f64> = (0..len).map(|t| ((last - t as f64) * r.ln()).exp()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        }
    })
}

pub fn select_output<'a, R: Rng + ?Sized>(
    trajectory: &'a [ParamVector],
    rule: OutputRule,
    eta: f64,
    mu: f64,
    rng: &mut R,
) -> Result<(usize, &'a ParamVector)> {
    let weights = output_weights(rule, trajectory.len(), eta, mu)?;
    let idx = match rule {
        OutputRule::Last => trajectory.len() - 1,
        OutputRule::UniformRandom => rng.random_range(0..trajectory.len()),
        OutputRule::GeometricWeighted => WeightedIndex::new(&weights)
            .map_err(|e| Error::InvalidRun(e.to_string()))?
            .sample(rng),
    };
    Ok((idx, &trajectory[idx]))
}
