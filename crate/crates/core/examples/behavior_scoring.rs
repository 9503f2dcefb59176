//! Train a logistic readout on features, build its image-by-class confusion
//! pattern and correlate it with a reference pattern.
//!
//! `cargo run --release --example behavior_scoring`

use scalefit::alignment::behavior_score;
use scalefit::synth::{gen_behavior, BehaviorGenerator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for noise in [0.0, 0.02, 0.1] {
        let task = gen_behavior(&BehaviorGenerator {
            pattern_noise: noise,
            seed: 8,
            ..BehaviorGenerator::default()
        })?;
        let s = behavior_score(&task.data, 0)?;
        println!(
            "reference noise {noise:.2}: model r {:.4}, Bayes-optimal r {:.4}",
            s.raw, task.analytic_r
        );
    }
    Ok(())
}
