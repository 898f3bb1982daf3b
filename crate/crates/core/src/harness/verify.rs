//! Checks recorded runs against the convergence bounds and the error bound.
//!
//! Every verifier is a pure function of the per-seed metric series and a
//! [`VerifyContext`], so re-running it on a CSV read back from disk gives the
//! same report. Expectations are seed means at fixed rounds; the output-point
//! distributions are applied exactly as weights on those means rather than
//! sampled. A check passes when `LHS ≤ RHS + 5·stderr`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::RoundMetrics;
use super::RunConfig;
use crate::algorithms::AlgorithmKind;
use crate::compressors::{estimate_beta, estimate_delta, CompressorKind, CompressorSpec};
use crate::error::{Error, Result};
use crate::objectives::{Constants, FederatedObjective, Provenance};
use crate::vectors::{LayerPartition, ParamVector};

/// Monte-Carlo slack in standard errors.
pub const SLACK_SIGMAS: f64 = 5.0;
/// Relative allowance for floating-point rounding in the comparison.
const ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    StronglyConvex,
    Convex,
    NonConvex,
}

/// A bound to check. Parsed from and printed as `t1.1` … `t2.3`, `lemmaA1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Item {
    /// Projection method with an unbiased compressor.
    Unbiased(Regime),
    /// Projection method with error feedback and a contractive compressor.
    ErrorFeedback(Regime),
    /// Second moment of the averaged compression error.
    ErrorBound,
}

impl Item {
    pub const ALL: [Item; 7] = [
        Item::Unbiased(Regime::StronglyConvex),
        Item::Unbiased(Regime::Convex),
        Item::Unbiased(Regime::NonConvex),
        Item::ErrorFeedback(Regime::StronglyConvex),
        Item::ErrorFeedback(Regime::Convex),
        Item::ErrorFeedback(Regime::NonConvex),
        Item::ErrorBound,
    ];
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx = |r: &Regime| match r {
            Regime::StronglyConvex => 1,
            Regime::Convex => 2,
            Regime::NonConvex => 3,
        };
        match self {
            Item::Unbiased(r) => write!(f, "t1.{}", idx(r)),
            Item::ErrorFeedback(r) => write!(f, "t2.{}", idx(r)),
            Item::ErrorBound => f.write_str("lemmaA1"),
        }
    }
}

impl FromStr for Item {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Item::ALL
            .into_iter()
            .find(|i| i.to_string() == s)
            .ok_or_else(|| {
                Error::Precondition(format!(
                    "unknown item {s:?}; expected one of t1.1 t1.2 t1.3 t2.1 t2.2 t2.3 lemmaA1"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "SKIPPED")]
    Skipped,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIPPED",
        })
    }
}

/// Everything a verifier needs besides the metrics.
#[derive(Debug, Clone)]
pub struct VerifyContext {
    pub kind: AlgorithmKind,
    pub eta: f64,
    pub num_clients: usize,
    pub sigma_sq: f64,
    pub compressor: CompressorSpec,
    /// Layers the compressor acts on.
    pub partition: LayerPartition,
    pub constants: Constants,
    /// Accept empirical `(a, b)` or a numerically located optimum, with a caveat.
    pub allow_empirical: bool,
    /// Rounds in the plateau average of the strongly convex unbiased item.
    pub tail_rounds: Option<usize>,
}

impl VerifyContext {
    pub fn new(cfg: &RunConfig, obj: &FederatedObjective) -> Self {
        let mut probe = ParamVector::zeros(obj.dim());
        probe.set_layers(obj.layers().cloned());
        Self {
            kind: cfg.algorithm.kind,
            eta: cfg.algorithm.eta,
            num_clients: obj.num_clients(),
            sigma_sq: cfg.noise.sigma_sq(),
            compressor: cfg.algorithm.compressor.clone(),
            partition: cfg.algorithm.compressor.effective_partition(&probe),
            constants: obj.constants().clone(),
            allow_empirical: false,
            tail_rounds: None,
        }
    }

    pub fn allow_empirical(mut self, on: bool) -> Self {
        self.allow_empirical = on;
        self
    }

    fn contraction_certified(&self) -> bool {
        matches!(self.compressor.kind, CompressorKind::TopK | CompressorKind::Identity)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConstants {
    pub mu: f64,
    pub l: f64,
    pub a: f64,
    pub b: f64,
    pub sigma_sq: f64,
    pub beta: Option<f64>,
    pub delta: Option<f64>,
    pub num_clients: usize,
    pub l_provenance: Provenance,
    pub ab_provenance: Provenance,
    pub optimum_provenance: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundCheck {
    pub t: usize,
    pub lhs: f64,
    pub stderr: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub item: String,
    pub algorithm: String,
    pub eta: f64,
    pub eta_cap: Option<f64>,
    pub seeds: usize,
    pub constants: ReportConstants,
    /// One entry per round (or per horizon for the averaged items).
    pub rounds: Vec<RoundCheck>,
    /// Named side quantities, e.g. the plateau average.
    pub extra: BTreeMap<String, f64>,
    pub status: Status,
    pub reason: String,
    pub caveats: Vec<String>,
}

impl VerifyReport {
    /// Largest `lhs − rhs − 5·stderr` over the checked rounds.
    pub fn worst_margin(&self) -> Option<f64> {
        self.rounds
            .iter()
            .map(|r| r.lhs - r.rhs - SLACK_SIGMAS * r.stderr)
            .reduce(f64::max)
    }

    fn new(item: Item, ctx: &VerifyContext, seeds: usize) -> Self {
        let c = &ctx.constants;
        Self {
            item: item.to_string(),
            algorithm: ctx.kind.to_string(),
            eta: ctx.eta,
            eta_cap: None,
            seeds,
            constants: ReportConstants {
                mu: c.mu,
                l: c.l,
                a: c.a,
                b: c.b,
                sigma_sq: ctx.sigma_sq,
                beta: None,
                delta: None,
                num_clients: ctx.num_clients,
                l_provenance: c.l_provenance,
                ab_provenance: c.ab_provenance,
                optimum_provenance: c.optimum_provenance,
            },
            rounds: Vec::new(),
            extra: BTreeMap::new(),
            status: Status::Skipped,
            reason: String::new(),
            caveats: Vec::new(),
        }
    }

    fn skip(mut self, reason: &str) -> Self {
        self.status = Status::Skipped;
        self.reason = reason.to_string();
        self
    }

    fn conclude(mut self) -> Self {
        let failing = self
            .rounds
            .iter()
            .find(|r| !within(r.lhs, r.stderr, r.rhs))
            .cloned();
        match failing {
            Some(r) => {
                self.status = Status::Fail;
                self.reason = format!(
                    "t = {}: lhs {:.6e} > rhs {:.6e} + {SLACK_SIGMAS}·stderr {:.3e}",
                    r.t, r.lhs, r.rhs, r.stderr
                );
            }
            None => {
                self.status = Status::Pass;
                self.reason = format!("bound holds at all {} checked rounds", self.rounds.len());
            }
        }
        self
    }
}

fn within(lhs: f64, stderr: f64, rhs: f64) -> bool {
    lhs <= rhs + ROUNDING * rhs.abs() + SLACK_SIGMAS * stderr
}

/// Sample mean and standard error of the mean.
fn mean_stderr(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = xs.into_iter().collect();
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// All seeds must cover rounds `0..=T` without gaps.
fn check_series(metrics: &[Vec<RoundMetrics>]) -> Result<usize> {
    let first = metrics
        .first()
        .ok_or_else(|| Error::Precondition("no seeds recorded".into()))?;
    let len = first.len();
    for series in metrics {
        if series.len() != len || series.iter().enumerate().any(|(t, m)| m.round != t) {
            return Err(Error::Precondition(
                "verifiers need every round of every seed (metric_every = 1, no divergence)".into(),
            ));
        }
    }
    if len == 0 {
        return Err(Error::Precondition("empty metric series".into()));
    }
    Ok(len - 1)
}

fn column(
    metrics: &[Vec<RoundMetrics>],
    get: impl Fn(&RoundMetrics) -> Option<f64>,
) -> Option<Vec<Vec<f64>>> {
    metrics
        .iter()
        .map(|s| s.iter().map(&get).collect::<Option<Vec<_>>>())
        .collect()
}

/// Largest step size the item's statement allows.
pub fn eta_cap(item: Item, ctx: &VerifyContext) -> Result<f64> {
    let c = &ctx.constants;
    let (l, mu, b, m) = (c.l, c.mu, c.b, ctx.num_clients as f64);
    match item {
        Item::Unbiased(regime) => {
            let beta = estimate_beta(&ctx.compressor, &ctx.partition)?;
            let shrink = 1.0 / (1.0 + b * (beta - 1.0) / m);
            Ok(shrink
                * match regime {
                    Regime::StronglyConvex => 2.0 / (mu + l),
                    Regime::Convex => 1.0 / (2.0 * l),
                    Regime::NonConvex => 1.0 / l,
                })
        }
        Item::ErrorFeedback(regime) => {
            let d = estimate_delta(&ctx.compressor, &ctx.partition)?;
            Ok(match regime {
                Regime::StronglyConvex => {
                    (d / (l * (4.0 + d))).min(d / (40.0 * (2.0 * l + mu) * b * l).sqrt())
                }
                Regime::Convex => (d / (l * (4.0 + d))).min(d / ((80.0 * b).sqrt() * l)),
                Regime::NonConvex => d / (4.0 * (2.0 * (b + 1.0)).sqrt() * l),
            })
        }
        Item::ErrorBound => Ok(f64::INFINITY),
    }
}

/// Provenance gate shared by all items: empirical inputs are an error unless
/// explicitly allowed, in which case they become caveats.
fn provenance_caveats(ctx: &VerifyContext, needs_optimum: bool) -> Result<Vec<String>> {
    let c = &ctx.constants;
    let mut caveats = Vec::new();
    if c.ab_provenance != Provenance::Analytic {
        if !ctx.allow_empirical {
            return Err(Error::Precondition(
                "(a, b) are not analytic; set allow_empirical to verify anyway".into(),
            ));
        }
        caveats.push(format!(
            "(a, b) = ({:.6}, {:.6}) are {:?} estimates, not certified bounds",
            c.a, c.b, c.ab_provenance
        ));
    }
    if needs_optimum {
        if let Some(p) = c.optimum_provenance.filter(|p| *p != Provenance::Analytic) {
            if !ctx.allow_empirical {
                return Err(Error::Precondition(
                    "the optimum was located numerically; set allow_empirical to verify anyway".into(),
                ));
            }
            caveats.push(format!("f* is {p:?}: located by an optimizer, not known in closed form"));
        }
    }
    Ok(caveats)
}

fn check_eta(report: &mut VerifyReport, item: Item, ctx: &VerifyContext) -> Result<()> {
    let cap = eta_cap(item, ctx)?;
    report.eta_cap = Some(cap);
    if ctx.eta > cap * (1.0 + ROUNDING) {
        return Err(Error::Precondition(format!(
            "eta = {} exceeds the {item} cap {cap}",
            ctx.eta
        )));
    }
    Ok(())
}

/// Per-horizon checks of a uniformly averaged quantity `q_t`:
/// LHS(T') = E[(1/(T'+1)) Σ_{t≤T'} q_t] for `T' = 1..=T`.
fn uniform_horizons(q: &[Vec<f64>], rhs: impl Fn(usize) -> f64) -> Vec<RoundCheck> {
    let horizon = q[0].len() - 1;
    let mut running = vec![0.0; q.len()];
    for (s, series) in q.iter().enumerate() {
        running[s] = series[0];
    }
    let mut out = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        for (s, series) in q.iter().enumerate() {
            running[s] += series[t];
        }
        let n = (t + 1) as f64;
        let (lhs, stderr) = mean_stderr(running.iter().map(|x| x / n));
        out.push(RoundCheck {
            t,
            lhs,
            stderr,
            rhs: rhs(t),
        });
    }
    out
}

/// Bounds for the projection method with an unbiased compressor.
pub fn verify_unbiased_bound(
    regime: Regime,
    metrics: &[Vec<RoundMetrics>],
    ctx: &VerifyContext,
) -> Result<VerifyReport> {
    let item = Item::Unbiased(regime);
    if ctx.kind != AlgorithmKind::ProjFl {
        return Err(Error::Precondition(format!(
            "{item} applies to projfl runs, not {}",
            ctx.kind
        )));
    }
    let horizon = check_series(metrics)?;
    let mut report = VerifyReport::new(item, ctx, metrics.len());
    if !ctx.compressor.kind.is_unbiased() {
        return Ok(report.skip("needs an unbiased compressor with certified beta"));
    }
    let c = ctx.constants.clone();
    if !c.l_certified() {
        return Ok(report.skip("no certified L"));
    }
    if regime == Regime::StronglyConvex && !(c.mu > 0.0) {
        return Ok(report.skip("objective is not strongly convex"));
    }
    let dist = column(metrics, |m| m.dist_sq);
    let gap = column(metrics, |m| m.f_gap);
    if regime != Regime::NonConvex && dist.is_none() {
        return Ok(report.skip("no w* known for this objective"));
    }
    if regime != Regime::StronglyConvex && gap.is_none() {
        return Ok(report.skip("no f* known for this objective"));
    }
    report.caveats = provenance_caveats(ctx, true)?;
    check_eta(&mut report, item, ctx)?;
    let beta = estimate_beta(&ctx.compressor, &ctx.partition)?;
    report.constants.beta = Some(beta);

    let (eta, m) = (ctx.eta, ctx.num_clients as f64);
    let (mu, l, a) = (c.mu, c.l, c.a);
    let variance = a * (beta - 1.0) + beta * ctx.sigma_sq;

    match regime {
        Regime::StronglyConvex => {
            let dist = dist.unwrap();
            let rate = 1.0 - 2.0 * eta * mu * l / (mu + l);
            let ball = eta * (mu + l) / (2.0 * mu * l * m) * variance;
            let d0 = mean_stderr(dist.iter().map(|s| s[0])).0;
            report.rounds = (0..=horizon)
                .map(|t| {
                    let (lhs, stderr) = mean_stderr(dist.iter().map(|s| s[t]));
                    RoundCheck {
                        t,
                        lhs,
                        stderr,
                        rhs: rate.powi(t as i32) * d0 + ball,
                    }
                })
                .collect();
            let n_tail = ctx
                .tail_rounds
                .unwrap_or(((horizon + 1) / 5).max(1))
                .clamp(1, horizon + 1);
            let start = horizon + 1 - n_tail;
            let (tail, tail_err) =
                mean_stderr(dist.iter().map(|s| s[start..].iter().sum::<f64>() / n_tail as f64));
            let transient = (start..=horizon).map(|t| rate.powi(t as i32) * d0).sum::<f64>() / n_tail as f64;
            report.extra.insert("noise_ball".into(), ball);
            report.extra.insert("tail_lhs".into(), tail);
            report.extra.insert("tail_stderr".into(), tail_err);
            report.extra.insert("tail_rounds".into(), n_tail as f64);
            report.extra.insert("tail_transient".into(), transient);
            report = report.conclude();
            if report.status == Status::Pass && !within(tail, tail_err, ball + transient) {
                report.status = Status::Fail;
                report.reason = format!(
                    "plateau over the last {n_tail} rounds {tail:.6e} exceeds the noise ball {ball:.6e}"
                );
            }
        }
        Regime::Convex => {
            let gap = gap.unwrap();
            let d0 = mean_stderr(dist.unwrap().iter().map(|s| s[0])).0;
            if horizon == 0 {
                return Err(Error::Precondition(format!("{item} needs T >= 1")));
            }
            report.rounds = uniform_horizons(&gap, |t| d0 / ((t + 1) as f64 * eta) + eta / m * variance);
            report = report.conclude();
        }
        Regime::NonConvex => {
            let gap = gap.unwrap();
            let f0 = mean_stderr(gap.iter().map(|s| s[0])).0;
            if horizon == 0 {
                return Err(Error::Precondition(format!("{item} needs T >= 1")));
            }
            let grads = column(metrics, |m| Some(m.grad_norm_sq)).unwrap();
            report.rounds = uniform_horizons(&grads, |t| {
                2.0 / ((t + 1) as f64 * eta) * f0 + l * eta / m * variance
            });
            add_gradient_extras(&mut report, &grads, horizon);
            report = report.conclude();
        }
    }
    Ok(report)
}

fn add_gradient_extras(report: &mut VerifyReport, grads: &[Vec<f64>], horizon: usize) {
    let curve: Vec<f64> = (0..=horizon)
        .map(|t| mean_stderr(grads.iter().map(|s| s[t])).0)
        .collect();
    let min = curve.iter().copied().fold(f64::INFINITY, f64::min);
    report.extra.insert("min_over_t".into(), min);
    report.extra.insert("rhs_at_t".into(), report.rounds.last().map_or(f64::NAN, |r| r.rhs));
}

/// Bounds for the projection method with error feedback.
pub fn verify_ef_bound(
    regime: Regime,
    metrics: &[Vec<RoundMetrics>],
    ctx: &VerifyContext,
) -> Result<VerifyReport> {
    let item = Item::ErrorFeedback(regime);
    if ctx.kind != AlgorithmKind::ProjFlEf {
        return Err(Error::Precondition(format!(
            "{item} applies to projfl-ef runs, not {}",
            ctx.kind
        )));
    }
    let horizon = check_series(metrics)?;
    let mut report = VerifyReport::new(item, ctx, metrics.len());
    if !ctx.contraction_certified() {
        return Ok(report.skip(
            "needs a compressor with a certified contraction (top-k or identity)",
        ));
    }
    let c = ctx.constants.clone();
    if !c.l_certified() {
        return Ok(report.skip("no certified L"));
    }
    if regime == Regime::StronglyConvex && !(c.mu > 0.0) {
        return Ok(report.skip("objective is not strongly convex"));
    }
    let dist = column(metrics, |m| m.dist_sq);
    let gap = column(metrics, |m| m.f_gap);
    if regime != Regime::NonConvex && dist.is_none() {
        return Ok(report.skip("no w* known for this objective"));
    }
    if gap.is_none() {
        return Ok(report.skip("no f* known for this objective"));
    }
    if horizon == 0 {
        return Err(Error::Precondition(format!("{item} needs T >= 1")));
    }
    report.caveats = provenance_caveats(ctx, true)?;
    check_eta(&mut report, item, ctx)?;
    let delta = estimate_delta(&ctx.compressor, &ctx.partition)?;
    report.constants.delta = Some(delta);

    let (eta, m) = (ctx.eta, ctx.num_clients as f64);
    let (mu, l, a, s2) = (c.mu, c.l, c.a, ctx.sigma_sq);
    let compression = (1.0 - delta) * eta * eta / delta * (2.0 * a / delta + s2);
    let gap = gap.unwrap();

    match regime {
        Regime::StronglyConvex => {
            let d0 = mean_stderr(dist.unwrap().iter().map(|s| s[0])).0;
            let r = 1.0 - eta * mu / 2.0;
            let floor = 20.0 * (2.0 * l + mu) * compression + 10.0 * eta * s2 / m;
            // weighted average with θ_t ∝ r^{−t}, kept as r^{T'−t} for stability
            let mut num = vec![0.0; gap.len()];
            let mut den = 0.0;
            for (s, series) in gap.iter().enumerate() {
                num[s] = series[0];
            }
            den += 1.0;
            for t in 1..=horizon {
                for (s, series) in gap.iter().enumerate() {
                    num[s] = r * num[s] + series[t];
                }
                den = r * den + 1.0;
                let (lhs, stderr) = mean_stderr(num.iter().map(|x| x / den));
                report.rounds.push(RoundCheck {
                    t,
                    lhs,
                    stderr,
                    rhs: 10.0 / eta * r.powi(t as i32 + 1) * d0 + floor,
                });
            }
            report.extra.insert("floor".into(), floor);
        }
        Regime::Convex => {
            let d0 = mean_stderr(dist.unwrap().iter().map(|s| s[0])).0;
            let floor = 80.0 * l * compression + 10.0 * eta * s2 / m;
            report.rounds = uniform_horizons(&gap, |t| 10.0 / (eta * (t + 1) as f64) * d0 + floor);
            report.extra.insert("floor".into(), floor);
        }
        Regime::NonConvex => {
            let f0 = mean_stderr(gap.iter().map(|s| s[0])).0;
            let floor = 8.0 * compression * l * l + 8.0 * eta * l * s2 / (2.0 * m);
            let grads = column(metrics, |m| Some(m.grad_norm_sq)).unwrap();
            report.rounds = uniform_horizons(&grads, |t| 8.0 / ((t + 1) as f64 * eta) * f0 + floor);
            add_gradient_extras(&mut report, &grads, horizon);
            report.extra.insert("floor".into(), floor);
        }
    }
    Ok(report.conclude())
}

/// `E‖e_{t+1}‖² ≤ (2(1−δ)bη²/δ) Σ_{s≤t} (1−δ/2)^{t−s} E‖∇f(w_s)‖² + (2(1−δ)η²/δ)(2a/δ + σ²)`
/// where `e` is the client-averaged error. The slack uses the per-seed
/// difference between the two sides.
pub fn verify_error_bound(metrics: &[Vec<RoundMetrics>], ctx: &VerifyContext) -> Result<VerifyReport> {
    let item = Item::ErrorBound;
    if ctx.kind != AlgorithmKind::ProjFlEf {
        return Err(Error::Precondition(format!(
            "the error bound applies to projfl-ef runs, not {}",
            ctx.kind
        )));
    }
    let horizon = check_series(metrics)?;
    let mut report = VerifyReport::new(item, ctx, metrics.len());
    if !ctx.contraction_certified() {
        return Ok(report.skip(
            "needs a compressor with a certified contraction (top-k or identity)",
        ));
    }
    report.caveats = provenance_caveats(ctx, false)?;
    let delta = estimate_delta(&ctx.compressor, &ctx.partition)?;
    report.constants.delta = Some(delta);
    let c = &ctx.constants;
    let eta = ctx.eta;
    let scale = 2.0 * (1.0 - delta) * eta * eta / delta;
    let c1 = scale * c.b;
    let c2 = scale * (2.0 * c.a / delta + ctx.sigma_sq);
    let decay = 1.0 - delta / 2.0;

    let mut sums = vec![0.0; metrics.len()];
    for t in 0..horizon {
        let mut lhs_s = Vec::with_capacity(metrics.len());
        let mut rhs_s = Vec::with_capacity(metrics.len());
        for (s, series) in metrics.iter().enumerate() {
            sums[s] = decay * sums[s] + series[t].grad_norm_sq;
            lhs_s.push(series[t + 1].avg_err_sq);
            rhs_s.push(c1 * sums[s] + c2);
        }
        let (lhs, _) = mean_stderr(lhs_s.iter().copied());
        let (rhs, _) = mean_stderr(rhs_s.iter().copied());
        let (_, stderr) = mean_stderr(lhs_s.iter().zip(&rhs_s).map(|(l, r)| l - r));
        report.rounds.push(RoundCheck { t, lhs, stderr, rhs });
    }
    Ok(report.conclude())
}

/// Dispatches `item` to its verifier.
pub fn verify(item: Item, metrics: &[Vec<RoundMetrics>], ctx: &VerifyContext) -> Result<VerifyReport> {
    match item {
        Item::Unbiased(r) => verify_unbiased_bound(r, metrics, ctx),
        Item::ErrorFeedback(r) => verify_ef_bound(r, metrics, ctx),
        Item::ErrorBound => verify_error_bound(metrics, ctx),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn item_names_round_trip() {
        for item in Item::ALL {
            assert_eq!(item.to_string().parse::<Item>().unwrap(), item);
        }
        assert!("t3.1".parse::<Item>().is_err());
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr([2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, se) = mean_stderr([1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }
}
