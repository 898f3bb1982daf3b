//! Cumulative bits each method needs to reach a loss level on a synthetic
//! logistic problem with 1% Top-k.
//!
//! ```text
//! cargo run --release --example logistic_ordering -- [clients] [threshold]
//! ```

use projfl::algorithms::{AlgorithmConfig, AlgorithmKind};
use projfl::compressors::CompressorSpec;
use projfl::harness::{run, ExecOptions, ObjectiveSpec, RunConfig};
use projfl::objectives::NoiseModel;

fn main() -> projfl::Result<()> {
    let mut args = std::env::args().skip(1);
    let clients: usize = args.next().map_or(3, |s| s.parse().expect("clients"));
    let threshold: f64 = args.next().map_or(0.3, |s| s.parse().expect("threshold"));

    let spec = ObjectiveSpec::LogisticSynthetic {
        clients,
        dim: 200,
        seed: 11,
        samples_per_client: 40,
        ridge: 0.0,
        locate_optimum: false,
    };
    let obj = spec.build()?;
    println!("logistic: M = {clients}, d = 200, L = {:.4}", obj.constants().l);
    println!("{:<12} {:>14} {:>10} {:>12}", "algorithm", "bits", "rounds", "final loss");

    for kind in AlgorithmKind::ALL {
        let alg = AlgorithmConfig::new(kind, 0.5, CompressorSpec::top_k(0.01));
        let mut cfg = RunConfig::new(spec.clone(), alg, 2000, (0..10).collect());
        cfg.noise = NoiseModel::gaussian(0.05);
        let res = run(&cfg, &obj, ExecOptions::default())?;
        let mut bits = 0.0;
        let mut rounds = 0.0;
        let mut reached = 0;
        for r in &res.runs {
            if let Some(hit) = r.metrics.iter().find(|m| m.loss <= threshold) {
                bits += hit.cumulative_bits as f64;
                rounds += hit.round as f64;
                reached += 1;
            }
        }
        let last = res.runs[0].metrics.last().map_or(f64::NAN, |m| m.loss);
        if reached == res.runs.len() {
            let n = reached as f64;
            println!("{:<12} {:>14.0} {:>10.1} {:>12.5}", kind.name(), bits / n, rounds / n, last);
        } else {
            println!("{:<12} {:>14} {:>10} {:>12.5}", kind.name(), "not reached", "-", last);
        }
    }
    Ok(())
}
