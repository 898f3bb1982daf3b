//! Experiment runner, metrics, output selection and bound verifiers.

mod metrics;
mod select;
mod verify;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accounting::{downlink_bits, CostModel, TrafficLedger};
use crate::algorithms::{
    check_mirrors, client_round, diagnostic_tilde_w, server_round, AlgorithmConfig, ClientState,
    ServerState, Snapshot,
};
use crate::error::{Error, Result};
use crate::objectives::{
    make_logistic, make_quadratic, make_tiny_mlp, minimize_numerically, stochastic_gradient,
    FederatedObjective, NoiseModel, Provenance,
};
use crate::vectors::{derive_stream, mean, ParamVector, StreamPurpose};

pub use metrics::{group_by_seed, read_metrics_csv, write_metrics_csv, RoundMetrics, CSV_HEADER};
pub use select::{output_weights, select_output, OutputRule};
pub use verify::{
    eta_cap, verify, verify_error_bound, verify_ef_bound, verify_unbiased_bound, Item, Regime,
    ReportConstants, RoundCheck, Status, VerifyContext, VerifyReport,
};

/// `‖w‖` above this aborts the seed.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `fᵢ(w) = ½‖w − cᵢ‖²`. Centers shorter than `dim` are zero-padded.
    QuadraticShifted {
        centers: Vec<Vec<f64>>,
        #[serde(default)]
        dim: Option<usize>,
    },
    LogisticSynthetic {
        clients: usize,
        dim: usize,
        seed: u64,
        samples_per_client: usize,
        ridge: f64,
        /// Run gradient descent to locate `f*` and `w*` numerically.
        #[serde(default)]
        locate_optimum: bool,
    },
    TinyMlp {
        clients: usize,
        d_in: usize,
        hidden: usize,
        seed: u64,
        samples_per_client: usize,
    },
}

impl ObjectiveSpec {
    pub fn quadratic(centers: Vec<Vec<f64>>) -> Self {
        Self::QuadraticShifted { centers, dim: None }
    }

    pub fn build(&self) -> Result<FederatedObjective> {
        match self {
            Self::QuadraticShifted { centers, dim } => {
                let d = dim.unwrap_or_else(|| centers.iter().map(Vec::len).max().unwrap_or(0));
                let padded = centers
                    .iter()
                    .map(|c| {
                        if c.len() > d {
                            return Err(Error::InvalidObjective(format!(
                                "center of length {} exceeds dim {d}",
                                c.len()
                            )));
                        }
                        let mut v = c.clone();
                        v.resize(d, 0.0);
                        ParamVector::new(v)
                    })
                    .collect::<Result<Vec<_>>>()?;
                make_quadratic(padded)
            }
            Self::LogisticSynthetic {
                clients,
                dim,
                seed,
                samples_per_client,
                ridge,
                locate_optimum,
            } => {
                let mut obj = make_logistic(*clients, *dim, *seed, *samples_per_client, *ridge)?;
                if *locate_optimum {
                    let (w, f) = minimize_numerically(&obj, &obj.initial_point(), 1e-24, 200_000)?;
                    let c = obj.constants_mut();
                    c.w_star = Some(w);
                    c.f_star = Some(f);
                    c.optimum_provenance = Some(Provenance::Numerical);
                }
                Ok(obj)
            }
            Self::TinyMlp {
                clients,
                d_in,
                hidden,
                seed,
                samples_per_client,
            } => make_tiny_mlp(*clients, *d_in, *hidden, *seed, *samples_per_client),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub objective: ObjectiveSpec,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Number of rounds `T`; metrics cover `w₀ … w_T`.
    pub rounds: usize,
    pub seeds: Vec<u64>,
    /// Record metrics every this many rounds (the last round always).
    #[serde(default = "one")]
    pub metric_every: usize,
    #[serde(default)]
    pub output_rule: OutputRule,
    /// Starting point; defaults to the objective's own.
    #[serde(default)]
    pub w0: Option<Vec<f64>>,
    #[serde(default)]
    pub cost_model: CostModel,
    #[serde(default = "yes")]
    pub check_mirrors: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn new(objective: ObjectiveSpec, algorithm: AlgorithmConfig, rounds: usize, seeds: Vec<u64>) -> Self {
        Self {
            objective,
            algorithm,
            noise: NoiseModel::none(),
            rounds,
            seeds,
            metric_every: 1,
            output_rule: OutputRule::Last,
            w0: None,
            cost_model: CostModel::default(),
            check_mirrors: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.algorithm.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidRun("seeds must be non-empty".into()));
        }
        if self.metric_every == 0 {
            return Err(Error::InvalidRun("metric_every must be >= 1".into()));
        }
        if !(self.noise.sigma.is_finite() && self.noise.sigma >= 0.0) {
            return Err(Error::InvalidRun(format!("invalid sigma {}", self.noise.sigma)));
        }
        Ok(())
    }

    fn starting_point(&self, obj: &FederatedObjective) -> Result<ParamVector> {
        let mut w = match &self.w0 {
            Some(v) if v.len() != obj.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: obj.dim(),
                    actual: v.len(),
                })
            }
            Some(v) => ParamVector::new(v.clone())?,
            None => obj.initial_point(),
        };
        w.set_layers(obj.layers().cloned());
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExecOptions {
    /// Worker threads; `None` uses rayon's default pool.
    pub jobs: Option<usize>,
    /// Evaluate client rounds concurrently inside each seed.
    pub parallel_clients: bool,
    /// Keep every iterate (needed by [`SeedRun::output`]).
    pub record_trajectory: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Completed,
    /// `w_round` left the finite or bounded region.
    Diverged { round: usize, norm: f64 },
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub metrics: Vec<RoundMetrics>,
    pub outcome: Outcome,
    pub ledger: TrafficLedger,
    pub final_w: ParamVector,
    pub trajectory: Vec<ParamVector>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub runs: Vec<SeedRun>,
}

impl RunResult {
    /// First diverged seed and round, if any.
    pub fn divergence(&self) -> Option<(u64, usize)> {
        self.runs.iter().find_map(|r| match r.outcome {
            Outcome::Diverged { round, .. } => Some((r.seed, round)),
            Outcome::Completed => None,
        })
    }

    pub fn metrics(&self) -> Vec<Vec<RoundMetrics>> {
        self.runs.iter().map(|r| r.metrics.clone()).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        write_metrics_csv(self.runs.iter().flat_map(|r| &r.metrics), out)
    }
}

impl SeedRun {
    /// Samples `w^out` from the recorded trajectory.
    pub fn output(&self, rule: OutputRule, eta: f64, mu: f64) -> Result<&ParamVector> {
        let mut rng = derive_stream(self.seed, u64::MAX, 0, StreamPurpose::DataShuffle);
        Ok(select_output(&self.trajectory, rule, eta, mu, &mut rng)?.1)
    }
}

/// One seed's clients and server, advanced round by round.
pub struct Simulation<'a> {
    cfg: &'a RunConfig,
    obj: &'a FederatedObjective,
    seed: u64,
    server: ServerState,
    clients: Vec<ClientState>,
    ledger: TrafficLedger,
    parallel_clients: bool,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a RunConfig, obj: &'a FederatedObjective, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let w0 = cfg.starting_point(obj)?;
        let server = ServerState::new(&cfg.algorithm, w0, obj.num_clients());
        let zero = server.zero();
        let clients = vec![ClientState::new(&cfg.algorithm, &zero); obj.num_clients()];
        Ok(Self {
            cfg,
            obj,
            seed,
            server,
            clients,
            ledger: TrafficLedger::new(),
            parallel_clients: false,
        })
    }

    /// Resumes from a snapshot; the traffic ledger restarts empty.
    pub fn from_snapshot(
        cfg: &'a RunConfig,
        obj: &'a FederatedObjective,
        seed: u64,
        snap: Snapshot,
    ) -> Result<Self> {
        if snap.kind != cfg.algorithm.kind || snap.clients.len() != obj.num_clients() {
            return Err(Error::Snapshot("snapshot does not match the run".into()));
        }
        if snap.server.w.len() != obj.dim() {
            return Err(Error::Snapshot("snapshot dimension does not match the objective".into()));
        }
        Ok(Self {
            cfg,
            obj,
            seed,
            server: snap.server,
            clients: snap.clients,
            ledger: TrafficLedger::new(),
            parallel_clients: false,
        })
    }

    pub fn parallel_clients(mut self, on: bool) -> Self {
        self.parallel_clients = on;
        self
    }

    pub fn round(&self) -> usize {
        self.server.round as usize
    }

    pub fn w(&self) -> &ParamVector {
        &self.server.w
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn ledger(&self) -> &TrafficLedger {
        &self.ledger
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            kind: self.cfg.algorithm.kind,
            server: self.server.clone(),
            clients: self.clients.clone(),
        }
    }

    /// Metrics at the current iterate.
    pub fn metrics(&self) -> Result<RoundMetrics> {
        let w = &self.server.w;
        let c = self.obj.constants();
        let alg = &self.cfg.algorithm;
        let loss = self.obj.loss(w)?;
        let carries_error = alg.kind.carries_error();
        let (mean_client_err_sq, avg_err_sq) = if carries_error {
            let errs: Vec<&ParamVector> = self.clients.iter().map(|c| &c.error).collect();
            let per = errs.iter().map(|e| e.norm_sq()).sum::<f64>() / errs.len() as f64;
            (per, mean(&errs)?.norm_sq())
        } else {
            (0.0, 0.0)
        };
        let tilde_gap = if carries_error {
            Some(diagnostic_tilde_w(alg, w, &self.clients)?.distance_sq(w)?.sqrt())
        } else {
            None
        };
        let last = self.ledger.rounds().last();
        Ok(RoundMetrics {
            seed: self.seed,
            round: self.round(),
            loss,
            f_gap: c.f_star.map(|f| loss - f),
            grad_norm_sq: self.obj.grad(w)?.norm_sq(),
            dist_sq: match &c.w_star {
                Some(ws) => Some(w.distance_sq(ws)?),
                None => None,
            },
            mean_client_err_sq,
            avg_err_sq,
            tilde_gap,
            uplink_bits_total: last.map_or(0, |r| r.uplink_total),
            downlink_bits_total: last.map_or(0, |r| r.downlink_total),
            cumulative_bits: self.ledger.cumulative(),
        })
    }

    /// Runs one full round: every client, then the server, then bookkeeping.
    pub fn step(&mut self) -> Result<()> {
        let t = self.server.round;
        let seed = self.seed;
        let (obj, cfg) = (self.obj, self.cfg);
        let w = self.server.w.clone();
        let work = |(i, client): (usize, &mut ClientState)| {
            let mut noise_rng = derive_stream(seed, i as u64, t, StreamPurpose::GradientNoise);
            let g = stochastic_gradient(obj, i, &w, &cfg.noise, &mut noise_rng)?;
            let mut comp_rng = derive_stream(seed, i as u64, t, StreamPurpose::Compressor);
            client_round(&cfg.algorithm, client, &g, &mut comp_rng)
        };
        let uploads = if self.parallel_clients {
            self.clients
                .par_iter_mut()
                .enumerate()
                .map(work)
                .collect::<Result<Vec<_>>>()?
        } else {
            self.clients
                .iter_mut()
                .enumerate()
                .map(work)
                .collect::<Result<Vec<_>>>()?
        };
        let uplink: Vec<u64> = uploads.iter().map(|u| u.bits(&cfg.cost_model)).collect();
        server_round(&cfg.algorithm, &mut self.server, &uploads)?;
        if cfg.check_mirrors {
            check_mirrors(&cfg.algorithm, &self.server, &self.clients)?;
        }
        let down = downlink_bits(&cfg.cost_model, &w, &self.server.w)? * self.clients.len() as u64;
        self.ledger.record(uplink, down);
        Ok(())
    }
}

fn run_seed(cfg: &RunConfig, obj: &FederatedObjective, seed: u64, opts: ExecOptions) -> Result<SeedRun> {
    let mut sim = Simulation::new(cfg, obj, seed)?.parallel_clients(opts.parallel_clients);
    let mut metrics = Vec::new();
    let mut trajectory = Vec::new();
    let mut outcome = Outcome::Completed;
    for t in 0..=cfg.rounds {
        if t % cfg.metric_every == 0 || t == cfg.rounds {
            metrics.push(sim.metrics()?);
        }
        if opts.record_trajectory {
            trajectory.push(sim.w().clone());
        }
        if t == cfg.rounds {
            break;
        }
        match sim.step() {
            Ok(()) => {}
            Err(Error::NonFinite(_)) => {
                outcome = Outcome::Diverged {
                    round: t + 1,
                    norm: f64::INFINITY,
                };
                break;
            }
            Err(e) => return Err(e),
        }
        let norm = sim.w().norm();
        if !(norm <= DIVERGENCE_NORM) {
            outcome = Outcome::Diverged { round: t + 1, norm };
            break;
        }
    }
    Ok(SeedRun {
        seed,
        metrics,
        outcome,
        ledger: sim.ledger.clone(),
        final_w: sim.w().clone(),
        trajectory,
    })
}

/// Runs every seed (in parallel) and returns results in seed-list order.
pub fn run(cfg: &RunConfig, obj: &FederatedObjective, opts: ExecOptions) -> Result<RunResult> {
    cfg.validate()?;
    let go = || {
        cfg.seeds
            .par_iter()
            .map(|&s| run_seed(cfg, obj, s, opts))
            .collect::<Result<Vec<_>>>()
    };
    let runs = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidRun(format!("thread pool: {e}")))?
            .install(go)?,
        None => go()?,
    };
    Ok(RunResult { runs })
}

/// Builds the objective from the config and runs it.
pub fn run_config(cfg: &RunConfig, opts: ExecOptions) -> Result<(FederatedObjective, RunResult)> {
    let obj = cfg.objective.build()?;
    let result = run(cfg, &obj, opts)?;
    Ok((obj, result))
}
