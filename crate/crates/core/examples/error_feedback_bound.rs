//! ProjFL+EF with Top-k: the function-gap bound for both convex regimes and
//! the second-moment bound on the error memory, all from the same runs.
//!
//! ```text
//! cargo run --release --example error_feedback_bound -- [sigma]
//! ```

use projfl::algorithms::{AlgorithmConfig, AlgorithmKind};
use projfl::compressors::CompressorSpec;
use projfl::harness::{eta_cap, run, verify, ExecOptions, Item, ObjectiveSpec, Regime, RunConfig, VerifyContext};
use projfl::objectives::NoiseModel;

fn main() -> projfl::Result<()> {
    let sigma: f64 = std::env::args().nth(1).map_or(0.5, |s| s.parse().expect("sigma"));
    let d = 20;
    let spec = ObjectiveSpec::QuadraticShifted {
        centers: vec![vec![0.0], vec![2.0]],
        dim: Some(d),
    };
    for regime in [Regime::StronglyConvex, Regime::Convex] {
        let item = Item::ErrorFeedback(regime);
        let alg = AlgorithmConfig::new(AlgorithmKind::ProjFlEf, 1.0, CompressorSpec::top_k(0.1));
        let mut cfg = RunConfig::new(spec.clone(), alg, 600, (0..100).collect());
        cfg.w0 = Some(vec![1.0; d]);
        cfg.noise = NoiseModel::gaussian(sigma);
        let obj = cfg.objective.build()?;
        cfg.algorithm.eta = eta_cap(item, &VerifyContext::new(&cfg, &obj))?;
        let res = run(&cfg, &obj, ExecOptions::default())?;
        let ctx = VerifyContext::new(&cfg, &obj);
        let metrics = res.metrics();
        for it in [item, Item::ErrorBound] {
            let report = verify(it, &metrics, &ctx)?;
            let last = report.rounds.last().expect("rounds");
            println!(
                "{it:<8} eta {:.5}  final lhs {:.4e}  rhs {:.4e}  {}",
                cfg.algorithm.eta, last.lhs, last.rhs, report.status
            );
        }
    }
    Ok(())
}
