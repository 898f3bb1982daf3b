//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::time::Instant;

use projfl::algorithms::{project_decompose, AlgorithmConfig, AlgorithmKind};
use projfl::compressors::{
    compress, decode, estimate_beta, estimate_delta, qsgd_lower_level, rand_k_with_subsets,
    CompressedMessage, CompressorSpec, Payload,
};
use projfl::harness::{
    eta_cap, run, run_config, verify, ExecOptions, Item, ObjectiveSpec, Regime, RunConfig, Status,
    VerifyContext,
};
use projfl::objectives::{make_logistic, make_tiny_mlp, FederatedObjective, NoiseModel};
use projfl::vectors::{derive_stream, LayerPartition, ParamVector, StreamPurpose};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e(err: projfl::Error) -> String {
    err.to_string()
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn seeds(n: u64) -> Vec<u64> {
    (0..n).collect()
}

fn two_point_quadratic(dim: usize) -> ObjectiveSpec {
    ObjectiveSpec::QuadraticShifted {
        centers: vec![vec![0.0], vec![2.0]],
        dim: Some(dim),
    }
}

// 1
fn reduction_ladder() -> Outcome {
    let eta = 0.5;
    let rounds = 100;
    // plain distributed GD on fᵢ = ½‖w − cᵢ‖², c₁ = (0,0), c₂ = (2,0)
    let centers = [[0.0, 0.0], [2.0, 0.0]];
    let mut gd = vec![[0.0f64, 0.0]];
    for _ in 0..rounds {
        let w = *gd.last().unwrap();
        let mut g = [0.0; 2];
        for c in &centers {
            for j in 0..2 {
                g[j] += (w[j] - c[j]) / 2.0;
            }
        }
        gd.push([w[0] - eta * g[0], w[1] - eta * g[1]]);
    }
    let w_star = [1.0, 0.0];
    let d0 = ((gd[0][0] - w_star[0]).powi(2) + (gd[0][1] - w_star[1]).powi(2)).sqrt();
    let opts = ExecOptions {
        record_trajectory: true,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for kind in AlgorithmKind::ALL {
        let mut alg = AlgorithmConfig::new(kind, eta, CompressorSpec::identity());
        alg.diana_beta = 0.0;
        alg.gamma = 0.9;
        let cfg = RunConfig::new(
            ObjectiveSpec::quadratic(vec![vec![0.0, 0.0], vec![2.0, 0.0]]),
            alg,
            rounds,
            vec![0],
        );
        let (_, res) = run_config(&cfg, opts).map_err(e)?;
        let traj = &res.runs[0].trajectory;
        ensure(traj.len() == rounds + 1, || format!("{kind}: short trajectory"))?;
        for (t, w) in traj.iter().enumerate() {
            for j in 0..2 {
                let diff = (w[j] - gd[t][j]).abs();
                worst = worst.max(diff);
                ensure(diff <= 1e-10, || format!("{kind} t={t} coord {j}: off GD by {diff:e}"))?;
            }
            let dist = ((w[0] - w_star[0]).powi(2) + (w[1] - w_star[1]).powi(2)).sqrt();
            let expect = 0.5f64.powi(t as i32) * d0;
            ensure((dist - expect).abs() <= 1e-10, || {
                format!("{kind} t={t}: distance {dist:e} vs 0.5^t·d0 = {expect:e}")
            })?;
        }
    }
    Ok(format!("8 algorithms on GD for 100 rounds, max deviation {worst:.1e}"))
}

fn verify_run(cfg: &RunConfig, item: Item, allow_empirical: bool) -> Result<(FederatedObjective, projfl::harness::VerifyReport), String> {
    let (obj, res) = run_config(cfg, ExecOptions::default()).map_err(e)?;
    if let Some((seed, round)) = res.divergence() {
        return Err(format!("seed {seed} diverged at round {round}"));
    }
    let ctx = VerifyContext::new(cfg, &obj).allow_empirical(allow_empirical);
    let report = verify(item, &res.metrics(), &ctx).map_err(e)?;
    Ok((obj, report))
}

// 2
fn unbiased_strongly_convex() -> Outcome {
    let d = 20;
    let alg = AlgorithmConfig::new(AlgorithmKind::ProjFl, 1.0, CompressorSpec::rand_k(0.1));
    let mut cfg = RunConfig::new(two_point_quadratic(d), alg, 500, seeds(200));
    cfg.w0 = Some(vec![1.0; d]);
    let obj = cfg.objective.build().map_err(e)?;
    let c = obj.constants();
    ensure(c.a == 1.0 && c.b == 1.0 && c.mu == 1.0 && c.l == 1.0, || format!("constants {c:?}"))?;
    let ctx = VerifyContext::new(&cfg, &obj);
    let beta = estimate_beta(&cfg.algorithm.compressor, &ctx.partition).map_err(e)?;
    ensure(beta == 10.0, || format!("beta = {beta}"))?;
    let item = Item::Unbiased(Regime::StronglyConvex);
    cfg.algorithm.eta = eta_cap(item, &ctx).map_err(e)?;
    ensure((cfg.algorithm.eta - 1.0 / 5.5).abs() < 1e-15, || format!("cap {}", cfg.algorithm.eta))?;
    let (_, report) = verify_run(&cfg, item, false)?;
    let ball = 4.5 * cfg.algorithm.eta;
    let tail = report.extra["tail_lhs"];
    let tail_err = report.extra["tail_stderr"];
    ensure(report.extra["tail_rounds"] == 100.0, || "tail window is not 100 rounds".into())?;
    ensure(report.status == Status::Pass, || report.reason.clone())?;
    ensure(tail <= ball + 5.0 * tail_err, || {
        format!("tail {tail:.5} > radius² {ball:.5} + 5·{tail_err:.2e}")
    })?;
    Ok(format!(
        "501 rounds within bound (worst margin {:.2e}); tail {tail:.4} ≤ {ball:.4} (stderr {tail_err:.1e})",
        report.worst_margin().unwrap()
    ))
}

// 3
fn unbiased_nonconvex_logistic() -> Outcome {
    let alg = AlgorithmConfig::new(AlgorithmKind::ProjFl, 1.0, CompressorSpec::rand_k(0.2));
    let spec = ObjectiveSpec::LogisticSynthetic {
        clients: 4,
        dim: 10,
        seed: 7,
        samples_per_client: 40,
        ridge: 0.01,
        locate_optimum: true,
    };
    let mut cfg = RunConfig::new(spec, alg, 300, seeds(50));
    cfg.noise = NoiseModel::gaussian(0.1);
    let obj = cfg.objective.build().map_err(e)?;
    ensure(obj.constants().l_certified(), || "L is not certified".into())?;
    let item = Item::Unbiased(Regime::NonConvex);
    let ctx = VerifyContext::new(&cfg, &obj).allow_empirical(true);
    cfg.algorithm.eta = eta_cap(item, &ctx).map_err(e)?;
    let (_, report) = verify_run(&cfg, item, true)?;
    let min = report.extra["min_over_t"];
    let rhs = report.extra["rhs_at_t"];
    ensure(!report.caveats.is_empty(), || "missing empirical-constant caveat".into())?;
    ensure(min <= rhs, || format!("min ‖∇f‖² {min:.4e} > rhs {rhs:.4e}"))?;
    Ok(format!(
        "min_t E‖∇f‖² = {min:.3e} ≤ {rhs:.3e}; verifier {}; caveat: {}",
        report.status, report.caveats[0]
    ))
}

fn ef_runs() -> Vec<(Item, f64)> {
    let mut out = Vec::new();
    for sigma in [0.0, 0.5] {
        for r in [Regime::StronglyConvex, Regime::Convex] {
            out.push((Item::ErrorFeedback(r), sigma));
        }
    }
    out
}

fn ef_config(item: Item, sigma: f64) -> Result<RunConfig, String> {
    let d = 20;
    let alg = AlgorithmConfig::new(AlgorithmKind::ProjFlEf, 1.0, CompressorSpec::top_k(0.1));
    let mut cfg = RunConfig::new(two_point_quadratic(d), alg, 1000, seeds(200));
    cfg.w0 = Some(vec![1.0; d]);
    cfg.noise = NoiseModel::gaussian(sigma);
    let obj = cfg.objective.build().map_err(e)?;
    let ctx = VerifyContext::new(&cfg, &obj);
    let delta = estimate_delta(&cfg.algorithm.compressor, &ctx.partition).map_err(e)?;
    ensure(delta == 0.1, || format!("delta = {delta}"))?;
    cfg.algorithm.eta = eta_cap(item, &ctx).map_err(e)?;
    Ok(cfg)
}

// 4 and 5
fn ef_bounds() -> (Outcome, Outcome) {
    let mut notes4 = Vec::new();
    let mut notes5 = Vec::new();
    for (item, sigma) in ef_runs() {
        let cfg = match ef_config(item, sigma) {
            Ok(c) => c,
            Err(m) => return (Err(m.clone()), Err(m)),
        };
        let (obj, res) = match run_config(&cfg, ExecOptions::default()) {
            Ok(x) => x,
            Err(err) => return (Err(e(err)), Err("run failed".into())),
        };
        let ctx = VerifyContext::new(&cfg, &obj);
        let metrics = res.metrics();
        match verify(item, &metrics, &ctx) {
            Ok(r) if r.status == Status::Pass => notes4.push(format!(
                "{item} σ={sigma} η={:.4}: margin {:.2e}",
                cfg.algorithm.eta,
                r.worst_margin().unwrap()
            )),
            Ok(r) => return (Err(format!("{item} σ={sigma}: {}", r.reason)), Err("skipped".into())),
            Err(err) => return (Err(e(err)), Err("skipped".into())),
        }
        match verify(Item::ErrorBound, &metrics, &ctx) {
            Ok(r) if r.status == Status::Pass => notes5.push(format!(
                "σ={sigma} η={:.4}: {} rounds",
                cfg.algorithm.eta,
                r.rounds.len()
            )),
            Ok(r) => {
                return (
                    Ok(notes4.join("; ")),
                    Err(format!("{item} σ={sigma}: {}", r.reason)),
                )
            }
            Err(err) => return (Ok(notes4.join("; ")), Err(e(err))),
        }
    }
    (Ok(notes4.join("; ")), Ok(notes5.join("; ")))
}

// 6
fn compressor_certificates() -> Outcome {
    let mut rng = derive_stream(6, 0, 0, StreamPurpose::Compressor);
    // Rand-k: average over every k-subset
    for d in 1..=6usize {
        for k in 1..=d {
            let g = ParamVector::new((0..d).map(|_| normal(&mut rng)).collect()).unwrap();
            let spec = CompressorSpec::rand_k(k as f64 / d as f64);
            let beta = estimate_beta(&spec, &LayerPartition::single(d)).map_err(e)?;
            let subsets: Vec<Vec<usize>> = subsets(d, k);
            let mut mean = vec![0.0; d];
            let mut second = 0.0;
            for s in &subsets {
                let msg = rand_k_with_subsets(&g, &LayerPartition::single(d), &[s.clone()]).map_err(e)?;
                let c = decode(&msg).map_err(e)?;
                for j in 0..d {
                    mean[j] += c[j] / subsets.len() as f64;
                }
                second += c.norm_sq() / subsets.len() as f64;
            }
            for j in 0..d {
                ensure((mean[j] - g[j]).abs() <= 1e-12 * (1.0 + g[j].abs()), || {
                    format!("rand-k d={d} k={k}: E[C(g)]_{j} = {} vs {}", mean[j], g[j])
                })?;
            }
            ensure(second <= beta * g.norm_sq() * (1.0 + 1e-12), || {
                format!("rand-k d={d} k={k}: second moment {second} > β‖g‖²")
            })?;
        }
    }
    // QSGD: every combination of rounding outcomes
    for d in 1..=3usize {
        for s in 1..=2u32 {
            for _ in 0..50 {
                let g: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
                let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                let spec = CompressorSpec::qsgd(s);
                let beta = estimate_beta(&spec, &LayerPartition::single(d)).map_err(e)?;
                let lows: Vec<(u32, f64)> = g
                    .iter()
                    .map(|x| qsgd_lower_level(f64::from(s) * x.abs() / norm, s))
                    .collect();
                let mut mean = vec![0.0; d];
                let mut second = 0.0;
                let mut total_p = 0.0;
                for mask in 0..(1u32 << d) {
                    let mut p = 1.0;
                    let mut levels = Vec::with_capacity(d);
                    for (j, &(low, p_down)) in lows.iter().enumerate() {
                        if mask >> j & 1 == 0 {
                            p *= p_down;
                            levels.push(low);
                        } else {
                            p *= 1.0 - p_down;
                            levels.push(low + 1);
                        }
                    }
                    if p == 0.0 {
                        continue;
                    }
                    let msg = CompressedMessage {
                        payload: Payload::Quantized {
                            s,
                            blocks: vec![0..d],
                            norms: vec![norm],
                            signs: g.iter().map(|x| *x < 0.0).collect(),
                            levels,
                        },
                        dim: d,
                    };
                    let c = decode(&msg).map_err(e)?;
                    for j in 0..d {
                        mean[j] += p * c[j];
                    }
                    second += p * c.norm_sq();
                    total_p += p;
                }
                ensure((total_p - 1.0).abs() < 1e-12, || format!("qsgd probabilities sum to {total_p}"))?;
                for j in 0..d {
                    ensure((mean[j] - g[j]).abs() <= 1e-12 * (1.0 + norm), || {
                        format!("qsgd d={d} s={s}: E[C(g)]_{j} = {} vs {}", mean[j], g[j])
                    })?;
                }
                ensure(second <= beta * norm * norm * (1.0 + 1e-12), || {
                    format!("qsgd d={d} s={s}: second moment {second} > β‖g‖² = {}", beta * norm * norm)
                })?;
            }
        }
    }
    // Top-k contraction
    let mut checked = 0;
    for n in 0..10_000 {
        let d = 2 + n % 40;
        let k_frac = [0.1, 0.25, 0.5, 0.75][n % 4];
        let spec = CompressorSpec::top_k(k_frac);
        let k = spec.k_eff(d);
        let g = ParamVector::new((0..d).map(|_| normal(&mut rng) * 10f64.powi(n as i32 % 7 - 3)).collect()).unwrap();
        let c = decode(&compress(&spec, &g, &mut rng).map_err(e)?).map_err(e)?;
        let err = c.distance_sq(&g).unwrap();
        let bound = (1.0 - k as f64 / d as f64) * g.norm_sq();
        ensure(err <= bound * (1.0 + 1e-12), || format!("top-k d={d} k={k}: {err} > {bound}"))?;
        checked += 1;
    }
    let witness = ParamVector::new(vec![1.0, -1.0, 1.0, -1.0]).unwrap();
    let spec = CompressorSpec::top_k(0.5);
    let c = decode(&compress(&spec, &witness, &mut rng).map_err(e)?).map_err(e)?;
    let err = c.distance_sq(&witness).unwrap();
    ensure(err == 0.5 * witness.norm_sq(), || format!("witness error {err}"))?;
    let delta = estimate_delta(&spec, &LayerPartition::single(4)).map_err(e)?;
    ensure(delta == 0.5, || format!("delta {delta}"))?;
    Ok(format!(
        "rand-k exact for d ≤ 6, qsgd exact for d ≤ 3 and s ≤ 2, top-k on {checked} vectors with equality at (1,-1,1,-1)"
    ))
}

fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << d)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..d).filter(|j| m >> j & 1 == 1).collect())
        .collect()
}

// 7
fn gradient_checks() -> Outcome {
    let logistic = make_logistic(3, 8, 11, 25, 0.05).map_err(e)?;
    let mlp = make_tiny_mlp(3, 4, 5, 12, 25).map_err(e)?;
    let mut worst: f64 = 0.0;
    for (name, obj) in [("logistic", &logistic), ("mlp", &mlp)] {
        let mut rng = derive_stream(7, 0, 0, StreamPurpose::DataShuffle);
        let h = 1e-5;
        for p in 0..20 {
            let x: Vec<f64> = obj
                .initial_point()
                .as_slice()
                .iter()
                .map(|v| v + normal(&mut rng))
                .collect();
            let w = ParamVector::new(x.clone()).unwrap();
            let g = obj.grad(&w).map_err(e)?;
            let mut diff = 0.0;
            for j in 0..x.len() {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[j] += h;
                dn[j] -= h;
                let fu = obj.loss(&ParamVector::new(up).unwrap()).map_err(e)?;
                let fd = obj.loss(&ParamVector::new(dn).unwrap()).map_err(e)?;
                let num = (fu - fd) / (2.0 * h);
                diff += (num - g[j]).powi(2);
            }
            let rel = diff.sqrt() / g.norm().max(1e-12);
            worst = worst.max(rel);
            ensure(rel <= 1e-5, || format!("{name} point {p}: relative error {rel:e}"))?;
        }
    }
    Ok(format!("40 points, worst relative error {worst:.1e}"))
}

// 8
fn projection_invariants() -> Outcome {
    let mut rng = derive_stream(8, 0, 0, StreamPurpose::DataShuffle);
    let (mut worst_rec, mut worst_orth): (f64, f64) = (0.0, 0.0);
    for n in 0..100_000u32 {
        let d = 1 + (n as usize % 64);
        let g_scale = 10f64.powi((n % 9) as i32 - 4);
        let g = ParamVector::new((0..d).map(|_| g_scale * normal(&mut rng)).collect()).unwrap();
        let d_bar = match n % 5 {
            0 => ParamVector::zeros(d),
            // near zero but above the degenerate threshold
            1 => {
                let v: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let target = 10f64.powf(-14.0 + 4.0 * rng.random::<f64>());
                ParamVector::new(v.into_iter().map(|x| x * target / norm).collect()).unwrap()
            }
            // nearly parallel to g
            2 => {
                let mut v = g.scaled(rng.random::<f64>() * 4.0 - 2.0).unwrap();
                let noise = ParamVector::new((0..d).map(|_| 1e-8 * g_scale * normal(&mut rng)).collect()).unwrap();
                v.add_scaled(1.0, &noise).unwrap();
                v
            }
            _ => ParamVector::new((0..d).map(|_| 10f64.powi((n % 7) as i32 - 3) * normal(&mut rng)).collect()).unwrap(),
        };
        let (alpha, perp) = project_decompose(&g, &d_bar).map_err(e)?;
        let mut rec = perp.clone();
        rec.add_scaled(alpha, &d_bar).unwrap();
        let rec_err = rec.distance_sq(&g).unwrap().sqrt();
        let orth = projfl::vectors::dot(&d_bar, &perp).unwrap().abs();
        let rec_tol = 1e-12 * (1.0 + g.norm());
        let orth_tol = 1e-9 * d_bar.norm() * g.norm();
        worst_rec = worst_rec.max(rec_err / rec_tol);
        if orth_tol > 0.0 {
            worst_orth = worst_orth.max(orth / orth_tol);
        }
        ensure(rec_err <= rec_tol, || format!("pair {n}: reconstruction error {rec_err:e}"))?;
        ensure(orth <= orth_tol, || format!("pair {n}: orthogonality residual {orth:e} > {orth_tol:e}"))?;
    }
    Ok(format!(
        "1e5 pairs; worst reconstruction {worst_rec:.1e} of tolerance, worst orthogonality {worst_orth:.1e} of tolerance"
    ))
}

// 9
fn accounting() -> Outcome {
    let spec = ObjectiveSpec::quadratic(vec![
        vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0],
        vec![1.0, -1.0, 0.0, 2.0, 0.5, 0.0, 3.0, 1.0],
        vec![-2.0, 0.0, 1.0, 1.0, 1.0, 4.0, 0.0, 0.0],
    ]);
    for comp in [CompressorSpec::top_k(0.25), CompressorSpec::rand_k(0.25), CompressorSpec::qsgd(2)] {
        let mut per_kind = Vec::new();
        for kind in [AlgorithmKind::ProjFl, AlgorithmKind::FedAvgC] {
            let alg = AlgorithmConfig::new(kind, 0.1, comp.clone());
            let mut cfg = RunConfig::new(spec.clone(), alg, 30, vec![4]);
            cfg.noise = NoiseModel::gaussian(0.2);
            let (_, res) = run_config(&cfg, ExecOptions::default()).map_err(e)?;
            per_kind.push(res.runs[0].ledger.clone());
        }
        for (t, (p, f)) in per_kind[0].rounds().iter().zip(per_kind[1].rounds()).enumerate() {
            for (i, (bp, bf)) in p.uplink_per_client.iter().zip(&f.uplink_per_client).enumerate() {
                ensure(*bp == bf + 32, || {
                    format!("{:?} round {t} client {i}: projfl {bp} vs fedavg {bf}", comp.kind)
                })?;
            }
        }
    }
    // the optimum is a fixed point: exact zero aggregate, no broadcast
    let alg = AlgorithmConfig::new(AlgorithmKind::FedAvgC, 0.5, CompressorSpec::identity());
    let mut cfg = RunConfig::new(ObjectiveSpec::quadratic(vec![vec![0.0, 0.0], vec![2.0, 0.0]]), alg, 5, vec![0]);
    cfg.w0 = Some(vec![1.0, 0.0]);
    let (_, res) = run_config(&cfg, ExecOptions::default()).map_err(e)?;
    for r in res.runs[0].ledger.rounds() {
        ensure(r.downlink_total == 0, || format!("downlink {} at a fixed point", r.downlink_total))?;
    }
    // parallel schedule gives the same ledger
    let alg = AlgorithmConfig::new(AlgorithmKind::ProjFlEf, 0.1, CompressorSpec::rand_k(0.25));
    let mut cfg = RunConfig::new(spec, alg, 40, seeds(8));
    cfg.noise = NoiseModel::gaussian(0.3);
    let obj = cfg.objective.build().map_err(e)?;
    let seq = run(&cfg, &obj, ExecOptions { jobs: Some(1), ..Default::default() }).map_err(e)?;
    let par = run(
        &cfg,
        &obj,
        ExecOptions {
            jobs: Some(4),
            parallel_clients: true,
            record_trajectory: false,
        },
    )
    .map_err(e)?;
    for (a, b) in seq.runs.iter().zip(&par.runs) {
        ensure(a.ledger == b.ledger, || format!("seed {}: ledgers differ", a.seed))?;
    }
    Ok("sparse, rand-k and qsgd uplinks differ by exactly 32 bits; zero downlink at a fixed point; parallel ledger identical".into())
}

fn csv_bytes(cfg: &RunConfig) -> Result<Vec<u8>, String> {
    let (_, res) = run_config(cfg, ExecOptions::default()).map_err(e)?;
    let mut buf = Vec::new();
    res.write_csv(&mut buf).map_err(e)?;
    Ok(buf)
}

// 10
fn gamma_and_determinism() -> Outcome {
    let spec = ObjectiveSpec::LogisticSynthetic {
        clients: 3,
        dim: 12,
        seed: 5,
        samples_per_client: 30,
        ridge: 0.01,
        locate_optimum: false,
    };
    for (plain, with_gamma) in [
        (AlgorithmKind::Ef21, AlgorithmKind::Ef21Gamma),
        (AlgorithmKind::Diana, AlgorithmKind::DianaGamma),
    ] {
        let a = AlgorithmConfig::new(plain, 0.2, CompressorSpec::rand_k(0.25));
        let mut b = AlgorithmConfig::new(with_gamma, 0.2, CompressorSpec::rand_k(0.25));
        b.gamma = 1.0;
        let mut ca = RunConfig::new(spec.clone(), a, 60, seeds(3));
        ca.noise = NoiseModel::gaussian(0.1);
        let mut cb = ca.clone();
        cb.algorithm = b;
        let (_, ra) = run_config(&ca, ExecOptions { record_trajectory: true, ..Default::default() }).map_err(e)?;
        let (_, rb) = run_config(&cb, ExecOptions { record_trajectory: true, ..Default::default() }).map_err(e)?;
        for (x, y) in ra.runs.iter().zip(&rb.runs) {
            let same = x.trajectory.iter().zip(&y.trajectory).all(|(p, q)| {
                p.as_slice().iter().zip(q.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits())
            });
            ensure(same, || format!("{with_gamma} with gamma = 1 departs from {plain}"))?;
        }
        ensure(csv_bytes(&ca)? == csv_bytes(&cb)?, || format!("{plain} CSVs differ"))?;
    }
    for kind in AlgorithmKind::ALL {
        let alg = AlgorithmConfig::new(kind, 0.1, CompressorSpec::qsgd(2));
        let mut cfg = RunConfig::new(spec.clone(), alg, 40, seeds(3));
        cfg.noise = NoiseModel::uniform_ball(0.2);
        ensure(csv_bytes(&cfg)? == csv_bytes(&cfg)?, || format!("{kind}: CSV not reproducible"))?;
    }
    Ok("gamma = 1 variants bit-identical; all 8 algorithms reproduce byte-identical CSVs".into())
}

/// Loss level both methods must reach in the ordering check.
const ORDERING_LOSS_THRESHOLD: f64 = 0.3;

// 11
fn relative_ordering() -> Outcome {
    let mut notes = Vec::new();
    for m in [3usize, 10] {
        let spec = ObjectiveSpec::LogisticSynthetic {
            clients: m,
            dim: 200,
            seed: 11,
            samples_per_client: 40,
            ridge: 0.0,
            locate_optimum: false,
        };
        let obj = spec.build().map_err(e)?;
        let mut mean_bits = Vec::new();
        for kind in [AlgorithmKind::ProjFlEf, AlgorithmKind::FedAvgC] {
            let alg = AlgorithmConfig::new(kind, 0.5, CompressorSpec::top_k(0.01));
            let mut cfg = RunConfig::new(spec.clone(), alg, 1000, seeds(20));
            cfg.noise = NoiseModel::gaussian(0.05);
            let res = run(&cfg, &obj, ExecOptions::default()).map_err(e)?;
            let mut total = 0.0;
            for r in &res.runs {
                let hit = r
                    .metrics
                    .iter()
                    .find(|row| row.loss <= ORDERING_LOSS_THRESHOLD)
                    .ok_or_else(|| format!("{kind} M={m} seed {} never reaches loss {ORDERING_LOSS_THRESHOLD}", r.seed))?;
                total += hit.cumulative_bits as f64;
            }
            mean_bits.push(total / res.runs.len() as f64);
        }
        let (ours, base) = (mean_bits[0], mean_bits[1]);
        ensure(ours <= base, || format!("M={m}: projfl-ef {ours:.0} bits > fedavg-c {base:.0} bits"))?;
        notes.push(format!("M={m}: {ours:.3e} vs {base:.3e} bits ({:.2}x)", base / ours));
    }
    Ok(notes.join("; "))
}

fn main() {
    let start = Instant::now();
    let mut failed = 0;
    let mut report = |n: usize, name: &str, t0: Instant, outcome: Outcome| {
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {detail}");
            }
        }
    };
    let t = Instant::now();
    report(1, "reduction ladder", t, reduction_ladder());
    let t = Instant::now();
    report(2, "unbiased bound, strongly convex", t, unbiased_strongly_convex());
    let t = Instant::now();
    report(3, "unbiased bound, gradient norm on logistic", t, unbiased_nonconvex_logistic());
    let t = Instant::now();
    let (c4, c5) = ef_bounds();
    report(4, "error-feedback bounds, strongly convex and convex", t, c4);
    report(5, "compression error second moment", t, c5);
    let t = Instant::now();
    report(6, "compressor certificates", t, compressor_certificates());
    let t = Instant::now();
    report(7, "gradient correctness", t, gradient_checks());
    let t = Instant::now();
    report(8, "projection invariants", t, projection_invariants());
    let t = Instant::now();
    report(9, "communication accounting", t, accounting());
    let t = Instant::now();
    report(10, "gamma reductions and determinism", t, gamma_and_determinism());
    let t = Instant::now();
    report(11, "relative ordering in bits", t, relative_ordering());
    println!("acceptance: {} of 11 criteria passed in {:.1}s", 11 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
