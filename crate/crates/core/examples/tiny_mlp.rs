//! A one-hidden-layer network is nonconvex and its smoothness constant is
//! only estimated, so the gradient-norm check reports SKIPPED instead of a
//! verdict. Layerwise compressors still train it.
//!
//! ```text
//! cargo run --release --example tiny_mlp
//! ```

use projfl::algorithms::{AlgorithmConfig, AlgorithmKind};
use projfl::compressors::CompressorSpec;
use projfl::harness::{run_config, verify, ExecOptions, Item, ObjectiveSpec, Regime, RunConfig, VerifyContext};

fn main() -> projfl::Result<()> {
    let spec = ObjectiveSpec::TinyMlp {
        clients: 4,
        d_in: 6,
        hidden: 8,
        seed: 1,
        samples_per_client: 40,
    };
    for kind in [AlgorithmKind::ProjFl, AlgorithmKind::ProjFlEf, AlgorithmKind::Ef21] {
        let compressor = match kind {
            AlgorithmKind::ProjFl => CompressorSpec::rand_k(0.5),
            _ => CompressorSpec::top_k(0.25),
        };
        let alg = AlgorithmConfig::new(kind, 0.05, compressor.layerwise(true));
        let cfg = RunConfig::new(spec.clone(), alg, 400, (0..5).collect());
        let (obj, res) = run_config(&cfg, ExecOptions::default())?;
        let first = res.runs[0].metrics.first().unwrap();
        let last = res.runs[0].metrics.last().unwrap();
        println!(
            "{:<10} loss {:.4} -> {:.4}  |grad|^2 {:.2e} -> {:.2e}  bits {}",
            kind.name(),
            first.loss,
            last.loss,
            first.grad_norm_sq,
            last.grad_norm_sq,
            last.cumulative_bits
        );
        if kind == AlgorithmKind::ProjFl {
            let ctx = VerifyContext::new(&cfg, &obj).allow_empirical(true);
            let report = verify(Item::Unbiased(Regime::NonConvex), &res.metrics(), &ctx)?;
            println!("           t1.3 {}: {}", report.status, report.reason);
        }
    }
    Ok(())
}
