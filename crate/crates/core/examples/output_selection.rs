//! How `w^out` is drawn from a trajectory under each rule, and how the
//! geometric weights tilt towards late iterates as `η·μ` grows.
//!
//! ```text
//! cargo run --example output_selection
//! ```

use projfl::harness::{output_weights, select_output, OutputRule};
use projfl::vectors::{derive_stream, ParamVector, StreamPurpose};

fn main() -> projfl::Result<()> {
    let len = 11;
    for (eta, mu) in [(0.01, 1.0), (0.1, 1.0), (0.5, 1.0)] {
        let w = output_weights(OutputRule::GeometricWeighted, len, eta, mu)?;
        let shown: Vec<String> = w.iter().map(|p| format!("{p:.3}")).collect();
        println!("geometric eta*mu = {:<5} [{}]", eta * mu, shown.join(" "));
    }

    let trajectory: Vec<ParamVector> = (0..len).map(|t| ParamVector::new(vec![t as f64])).collect::<Result<_, _>>()?;
    let mut rng = derive_stream(0, u64::MAX, 0, StreamPurpose::DataShuffle);
    for rule in [OutputRule::Last, OutputRule::UniformRandom, OutputRule::GeometricWeighted] {
        let mut counts = vec![0usize; len];
        for _ in 0..10_000 {
            counts[select_output(&trajectory, rule, 0.5, 1.0, &mut rng)?.0] += 1;
        }
        println!("{:<18} picks per index {counts:?}", format!("{rule:?}"));
    }
    Ok(())
}
