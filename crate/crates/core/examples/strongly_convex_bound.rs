//! Runs ProjFL with Rand-k at the strongly convex step-size cap and checks the
//! distance bound round by round.
//!
//! ```text
//! cargo run --release --example strongly_convex_bound
//! ```

use projfl::algorithms::{AlgorithmConfig, AlgorithmKind};
use projfl::compressors::CompressorSpec;
use projfl::harness::{eta_cap, run_config, verify, ExecOptions, Item, ObjectiveSpec, Regime, RunConfig, VerifyContext};
use projfl::objectives::NoiseModel;

fn main() -> projfl::Result<()> {
    let d = 20;
    let spec = ObjectiveSpec::QuadraticShifted {
        centers: vec![vec![0.0], vec![2.0]],
        dim: Some(d),
    };
    let alg = AlgorithmConfig::new(AlgorithmKind::ProjFl, 1.0, CompressorSpec::rand_k(0.1));
    let mut cfg = RunConfig::new(spec, alg, 300, (0..100).collect());
    cfg.w0 = Some(vec![1.0; d]);
    cfg.noise = NoiseModel::gaussian(0.2);

    let item = Item::Unbiased(Regime::StronglyConvex);
    let obj = cfg.objective.build()?;
    cfg.algorithm.eta = eta_cap(item, &VerifyContext::new(&cfg, &obj))?;
    println!("eta = cap = {:.5}", cfg.algorithm.eta);

    let (obj, res) = run_config(&cfg, ExecOptions::default())?;
    let report = verify(item, &res.metrics(), &VerifyContext::new(&cfg, &obj))?;
    println!("{:>5} {:>12} {:>12} {:>10}", "t", "E|w-w*|^2", "bound", "stderr");
    for r in report.rounds.iter().step_by(30) {
        println!("{:>5} {:>12.5} {:>12.5} {:>10.2e}", r.t, r.lhs, r.rhs, r.stderr);
    }
    println!("{}: {}", report.status, report.reason);
    println!("plateau {:.5} vs noise ball {:.5}", report.extra["tail_lhs"], report.extra["noise_ball"]);
    Ok(())
}
