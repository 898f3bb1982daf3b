//! With the identity compressor and no noise every algorithm collapses to
//! plain distributed gradient descent. This prints the largest deviation of
//! each one from a hand-rolled GD loop.
//!
//! ```text
//! cargo run --example reduction_ladder
//! ```

use projfl::algorithms::{AlgorithmConfig, AlgorithmKind};
use projfl::compressors::CompressorSpec;
use projfl::harness::{run_config, ExecOptions, ObjectiveSpec, RunConfig};

fn main() -> projfl::Result<()> {
    let centers = vec![vec![0.0, 0.0, 1.0], vec![2.0, 0.0, -1.0], vec![1.0, 3.0, 0.0]];
    let (eta, rounds) = (0.4, 100);

    // fᵢ(w) = ½‖w − cᵢ‖², so ∇f(w) = w − mean(c)
    let c_bar: Vec<f64> = (0..3).map(|j| centers.iter().map(|c| c[j]).sum::<f64>() / 3.0).collect();
    let mut gd = vec![vec![0.0; 3]];
    for _ in 0..rounds {
        let w = gd.last().unwrap();
        gd.push(w.iter().zip(&c_bar).map(|(w, c)| w - eta * (w - c)).collect());
    }

    let opts = ExecOptions {
        record_trajectory: true,
        ..Default::default()
    };
    for kind in AlgorithmKind::ALL {
        let mut alg = AlgorithmConfig::new(kind, eta, CompressorSpec::identity());
        alg.diana_beta = 0.0;
        let cfg = RunConfig::new(ObjectiveSpec::quadratic(centers.clone()), alg, rounds, vec![0]);
        let (_, res) = run_config(&cfg, opts)?;
        let worst = res.runs[0]
            .trajectory
            .iter()
            .zip(&gd)
            .flat_map(|(w, g)| w.as_slice().iter().zip(g).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        println!("{:<12} max |w - w_gd| = {worst:.2e}", kind.name());
    }
    Ok(())
}
