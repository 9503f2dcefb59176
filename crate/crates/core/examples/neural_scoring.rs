//! Score model activations against neural recordings with a cross-validated
//! linear readout, then ceiling-normalize.
//!
//! `cargo run --release --example neural_scoring`

use scalefit::alignment::{neural_score, NeuralConfig};
use scalefit::records::Region;
use scalefit::synth::{gen_benchmark, noise_for_target_r, BenchmarkGenerator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = NeuralConfig { seed: 1, ..NeuralConfig::default() };
    for target in [0.9, 0.8, 0.5] {
        let g = BenchmarkGenerator {
            noise_sigma: noise_for_target_r(target),
            ceiling: 0.9,
            region: Region::V4,
            seed: 4,
            ..BenchmarkGenerator::default()
        };
        let bench = gen_benchmark(&g)?;
        let s = neural_score(&bench.data, &cfg)?;
        println!(
            "theoretical r {target:.2}: raw {:.4}, ceiled {:.4} over {} neuroids",
            s.raw,
            s.ceiled,
            s.per_neuroid.len()
        );
    }
    Ok(())
}
