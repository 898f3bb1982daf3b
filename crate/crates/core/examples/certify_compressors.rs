//! Certified constants for each compressor family, with the evidence that
//! backs them, plus one message of each kind through the wire cost model.
//!
//! ```text
//! cargo run --example certify_compressors
//! ```

use projfl::accounting::{message_bits, CostModel};
use projfl::certificate::certify;
use projfl::compressors::{compress, decode, CompressorSpec};
use projfl::vectors::{derive_stream, ParamVector, StreamPurpose};

fn main() -> projfl::Result<()> {
    let specs = [
        CompressorSpec::identity(),
        CompressorSpec::rand_k(0.5),
        CompressorSpec::top_k(0.5),
        CompressorSpec::qsgd(2),
    ];
    for spec in &specs {
        for line in certify(spec, 4)?.summary() {
            println!("  {line}");
        }
        println!();
    }

    let g = ParamVector::new((0..64).map(|j| ((j * 37 % 11) as f64 - 5.0) / 3.0).collect())?;
    let models = [("fixed 32-bit indices", CostModel::default()), ("ceil(log2 d) indices", CostModel::ceil_log2())];
    println!("{:<10} {:>8} {:>10} {:>22} {:>22}", "kind", "nnz", "err^2/|g|^2", models[0].0, models[1].0);
    for spec in specs.iter().map(|s| CompressorSpec { k_fraction: 0.125, ..s.clone() }) {
        let mut rng = derive_stream(1, 0, 0, StreamPurpose::Compressor);
        let msg = compress(&spec, &g, &mut rng)?;
        let err = decode(&msg)?.distance_sq(&g)? / g.norm_sq();
        println!(
            "{:<10} {:>8} {:>10.4} {:>22} {:>22}",
            format!("{:?}", spec.kind),
            msg.nnz(),
            err,
            message_bits(&models[0].1, &msg, 0),
            message_bits(&models[1].1, &msg, 0),
        );
    }
    Ok(())
}
