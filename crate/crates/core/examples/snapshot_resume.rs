//! Stops a simulation halfway, serializes every client and the server, and
//! resumes from the bytes. The resumed run lands on the same bits.
//!
//! ```text
//! cargo run --example snapshot_resume
//! ```

use projfl::algorithms::{read_snapshot, write_snapshot, AlgorithmConfig, AlgorithmKind};
use projfl::compressors::CompressorSpec;
use projfl::harness::{ObjectiveSpec, RunConfig, Simulation};
use projfl::objectives::NoiseModel;

fn main() -> projfl::Result<()> {
    let spec = ObjectiveSpec::LogisticSynthetic {
        clients: 4,
        dim: 16,
        seed: 3,
        samples_per_client: 50,
        ridge: 0.01,
        locate_optimum: false,
    };
    let alg = AlgorithmConfig::new(AlgorithmKind::ProjFlEf, 0.3, CompressorSpec::top_k(0.25));
    let mut cfg = RunConfig::new(spec, alg, 0, vec![42]);
    cfg.noise = NoiseModel::gaussian(0.1);
    let obj = cfg.objective.build()?;

    let mut straight = Simulation::new(&cfg, &obj, 42)?;
    for _ in 0..50 {
        straight.step()?;
    }
    let mut bytes = Vec::new();
    write_snapshot(&straight.snapshot(), &mut bytes)?;
    println!("snapshot after round {}: {} bytes", straight.round(), bytes.len());

    let mut resumed = Simulation::from_snapshot(&cfg, &obj, 42, read_snapshot(bytes.as_slice())?)?;
    for _ in 50..100 {
        straight.step()?;
        resumed.step()?;
    }
    let same = straight
        .w()
        .as_slice()
        .iter()
        .zip(resumed.w().as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("round {}: loss {:.6}, bit-identical: {same}", resumed.round(), obj.loss(resumed.w())?);
    Ok(())
}
