//! Compressor certificates with the evidence behind them.
//!
//! [`certify`] reports the constants from [`estimate_beta`] and
//! [`estimate_delta`] and then checks them against the operator itself:
//!
//! * Rand-k: `‖C(g)‖²` is linear in the `gⱼ²`, so the worst ratio is attained
//!   on a basis vector. Every basis vector is pushed through every `k`-subset
//!   when that is affordable, otherwise through seeded random subsets.
//! * Top-k: `‖C(g) − g‖²` is the sum of the `d − k` smallest squares, at most
//!   `(1 − k/d)‖g‖²`, with equality on the all-ones vector.
//! * QSGD: exact expectations on witness vectors. For small `d` every joint
//!   rounding outcome is enumerated.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::compressors::{
    compress, decode, estimate_beta, estimate_delta, qsgd_lower_level, rand_k_with_subsets,
    CompressorKind, CompressorSpec,
};
use crate::error::{Error, Result};
use crate::vectors::{derive_stream, LayerPartition, ParamVector, StreamPurpose};

/// Largest `d · C(d, k)` walked exhaustively for Rand-k.
pub const ENUMERATION_BUDGET: u128 = 2_000_000;
const QSGD_ENUMERATION_MAX_DIM: usize = 12;
const RANDOM_PROBES: usize = 256;
const MONTE_CARLO_DRAWS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Evidence {
    /// `C(g) = g`.
    Exact,
    /// Every outcome of the operator on every probe was evaluated.
    Enumeration {
        probes: usize,
        outcomes: u64,
        worst_ratio: f64,
    },
    /// Seeded random outcomes; `stderr` is that of the worst probe's mean.
    MonteCarlo {
        probes: usize,
        draws: usize,
        worst_ratio: f64,
        stderr: f64,
    },
    /// A vector attaining the bound, plus random probes that stay below it.
    Witness {
        vector: Vec<f64>,
        ratio: f64,
        random_probes: usize,
        worst_random_ratio: f64,
    },
    /// Closed-form expectations on witness vectors.
    ExactExpectation { probes: usize, worst_ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub compressor: CompressorSpec,
    pub dim: usize,
    /// `E‖C(g)‖² ≤ β‖g‖²`; absent for biased compressors.
    pub beta: Option<f64>,
    /// `E‖C(g) − g‖² ≤ (1 − δ)‖g‖²`; for unbiased kinds this is `1/β` and
    /// certifies `C/β`.
    pub delta: f64,
    pub evidence: Vec<Evidence>,
    /// The evidence never exceeded the certified constant.
    pub consistent: bool,
}

impl Certificate {
    pub fn summary(&self) -> Vec<String> {
        let mut lines = vec![format!("{:?} on d = {}", self.compressor.kind, self.dim)];
        if let Some(b) = self.beta {
            lines.push(format!("beta  = {b}"));
        }
        lines.push(format!("delta = {}", self.delta));
        if self.compressor.kind.is_unbiased() && self.compressor.kind != CompressorKind::Identity {
            lines.push("delta = 1/beta certifies the rescaled operator C/beta".into());
        }
        for ev in &self.evidence {
            lines.push(match ev {
                Evidence::Exact => "evidence: exact operator, C(g) = g".into(),
                Evidence::Enumeration {
                    probes,
                    outcomes,
                    worst_ratio,
                } => format!(
                    "evidence: exhaustive enumeration, {probes} probes x {outcomes} outcomes, worst ratio {worst_ratio}"
                ),
                Evidence::MonteCarlo {
                    probes,
                    draws,
                    worst_ratio,
                    stderr,
                } => format!(
                    "evidence: monte carlo, {probes} probes x {draws} draws, worst ratio {worst_ratio} (stderr {stderr:.2e})"
                ),
                Evidence::Witness {
                    vector,
                    ratio,
                    random_probes,
                    worst_random_ratio,
                } => format!(
                    "evidence: witness {} attains residual ratio {ratio}; {random_probes} random probes reach at most {worst_random_ratio}",
                    fmt_vector(vector)
                ),
                Evidence::ExactExpectation { probes, worst_ratio } => format!(
                    "evidence: closed-form expectation on {probes} probes, worst ratio {worst_ratio}"
                ),
            });
        }
        lines.push(format!("consistent: {}", self.consistent));
        lines
    }
}

fn fmt_vector(v: &[f64]) -> String {
    if v.len() <= 8 {
        let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
        format!("({})", parts.join(","))
    } else {
        format!("({}, ... {} entries)", v[0], v.len())
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Lexicographic successor of a sorted `k`-subset of `0..n`.
fn next_subset(s: &mut [usize], n: usize) -> bool {
    let k = s.len();
    for i in (0..k).rev() {
        if s[i] < n - k + i {
            s[i] += 1;
            for j in i + 1..k {
                s[j] = s[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn basis(dim: usize, j: usize) -> ParamVector {
    let mut v = vec![0.0; dim];
    v[j] = 1.0;
    ParamVector::new(v).expect("finite")
}

fn compressed_sq(spec: &CompressorSpec, g: &ParamVector, seed: u64, draw: u64) -> Result<f64> {
    let mut rng = derive_stream(seed, 0, draw, StreamPurpose::Compressor);
    Ok(decode(&compress(spec, g, &mut rng)?)?.norm_sq())
}

fn rand_k_evidence(spec: &CompressorSpec, dim: usize) -> Result<Evidence> {
    let k = spec.k_eff(dim);
    let subsets = binomial(dim, k);
    let partition = LayerPartition::single(dim);
    if subsets * dim as u128 <= ENUMERATION_BUDGET {
        let mut worst: f64 = 0.0;
        for j in 0..dim {
            let g = basis(dim, j);
            let mut subset: Vec<usize> = (0..k).collect();
            let mut total = 0.0;
            loop {
                let c = decode(&rand_k_with_subsets(&g, &partition, &[subset.clone()])?)?;
                total += c.norm_sq();
                if !next_subset(&mut subset, dim) {
                    break;
                }
            }
            worst = worst.max(total / subsets as f64);
        }
        return Ok(Evidence::Enumeration {
            probes: dim,
            outcomes: subsets as u64,
            worst_ratio: worst,
        });
    }
    let probes = dim.min(16);
    let mut worst = (0.0, 0.0);
    for j in 0..probes {
        let g = basis(dim, j);
        let samples = (0..MONTE_CARLO_DRAWS)
            .map(|t| compressed_sq(spec, &g, j as u64, t as u64))
            .collect::<Result<Vec<_>>>()?;
        let (m, se) = mean_stderr(&samples);
        if m > worst.0 {
            worst = (m, se);
        }
    }
    Ok(Evidence::MonteCarlo {
        probes,
        draws: MONTE_CARLO_DRAWS,
        worst_ratio: worst.0,
        stderr: worst.1,
    })
}

fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

fn gaussian_probe(dim: usize, probe: usize) -> ParamVector {
    let mut rng = derive_stream(probe as u64, 0, 0, StreamPurpose::DataShuffle);
    let v = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    ParamVector::new(v).expect("finite")
}

fn top_k_evidence(spec: &CompressorSpec, dim: usize) -> Result<Evidence> {
    let residual = |g: &ParamVector| -> Result<f64> {
        let mut rng = derive_stream(0, 0, 0, StreamPurpose::Compressor);
        let c = decode(&compress(spec, g, &mut rng)?)?;
        Ok(c.distance_sq(g)? / g.norm_sq())
    };
    let ones = ParamVector::new(vec![1.0; dim])?;
    let ratio = residual(&ones)?;
    let mut worst: f64 = 0.0;
    for p in 0..RANDOM_PROBES {
        worst = worst.max(residual(&gaussian_probe(dim, p))?);
    }
    Ok(Evidence::Witness {
        vector: ones.into_vec(),
        ratio,
        random_probes: RANDOM_PROBES,
        worst_random_ratio: worst,
    })
}

/// Per-coordinate rounding outcomes `(scaled level², probability)`.
fn qsgd_outcomes(g: &ParamVector, s: u32) -> Vec<[(f64, f64); 2]> {
    let norm = g.norm();
    let s_f = f64::from(s);
    g.as_slice()
        .iter()
        .map(|x| {
            let (lower, p) = qsgd_lower_level(s_f * x.abs() / norm, s);
            let lo = norm * f64::from(lower) / s_f;
            let hi = norm * f64::from(lower + 1) / s_f;
            [(lo * lo, p), (hi * hi, 1.0 - p)]
        })
        .collect()
}

fn qsgd_evidence(spec: &CompressorSpec, dim: usize) -> Result<Evidence> {
    let s = spec.s_levels;
    let mut probes = vec![ParamVector::new(vec![1.0; dim])?];
    probes.extend((0..RANDOM_PROBES).map(|p| gaussian_probe(dim, p)));
    if dim <= QSGD_ENUMERATION_MAX_DIM {
        let mut worst: f64 = 0.0;
        let outcomes = 1u64 << dim;
        for g in &probes {
            let table = qsgd_outcomes(g, s);
            let mut expect = 0.0;
            for mask in 0..outcomes {
                let (mut sq, mut prob) = (0.0, 1.0);
                for (j, pair) in table.iter().enumerate() {
                    let (v, p) = pair[((mask >> j) & 1) as usize];
                    sq += v;
                    prob *= p;
                }
                expect += prob * sq;
            }
            worst = worst.max(expect / g.norm_sq());
        }
        return Ok(Evidence::Enumeration {
            probes: probes.len(),
            outcomes,
            worst_ratio: worst,
        });
    }
    let mut worst: f64 = 0.0;
    for g in &probes {
        let expect: f64 = qsgd_outcomes(g, s)
            .iter()
            .map(|[(a, pa), (b, pb)]| a * pa + b * pb)
            .sum();
        worst = worst.max(expect / g.norm_sq());
    }
    Ok(Evidence::ExactExpectation {
        probes: probes.len(),
        worst_ratio: worst,
    })
}

/// Certificate for `spec` acting on a single layer of `dim` coordinates.
pub fn certify(spec: &CompressorSpec, dim: usize) -> Result<Certificate> {
    if dim == 0 {
        return Err(Error::InvalidCompressor("dimension must be >= 1".into()));
    }
    let partition = LayerPartition::single(dim);
    let beta = match spec.kind {
        CompressorKind::TopK => None,
        _ => Some(estimate_beta(spec, &partition)?),
    };
    let delta = estimate_delta(spec, &partition)?;
    let tol = 1e-12;
    let (evidence, consistent) = match spec.kind {
        CompressorKind::Identity => (Evidence::Exact, true),
        CompressorKind::RandK | CompressorKind::Qsgd => {
            let ev = if spec.kind == CompressorKind::RandK {
                rand_k_evidence(spec, dim)?
            } else {
                qsgd_evidence(spec, dim)?
            };
            let b = beta.expect("unbiased kinds have beta");
            let ok = match &ev {
                Evidence::Enumeration { worst_ratio, .. }
                | Evidence::ExactExpectation { worst_ratio, .. } => *worst_ratio <= b * (1.0 + tol),
                Evidence::MonteCarlo {
                    worst_ratio, stderr, ..
                } => *worst_ratio <= b * (1.0 + tol) + 5.0 * stderr,
                _ => false,
            };
            (ev, ok)
        }
        CompressorKind::TopK => {
            let ev = top_k_evidence(spec, dim)?;
            let ok = match &ev {
                Evidence::Witness {
                    worst_random_ratio, ..
                } => *worst_random_ratio <= (1.0 - delta) + tol,
                _ => false,
            };
            (ev, ok)
        }
    };
    Ok(Certificate {
        compressor: spec.clone(),
        dim,
        beta,
        delta,
        evidence: vec![evidence],
        consistent,
    })
}
