//! A shifted power law stays finite at zero samples, which models architectures
//! that start out partially aligned before any training.
//!
//! `cargo run --example shifted_onset`

use scalefit::fit::{fit_power_law, fit_shifted_power_law, FitConfig, Rescale, XKind};
use scalefit::synth::{gen_curve_points, logspace, CurveGenerator, CurveSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = FitConfig {
        rescale: Rescale::identity(),
        ..FitConfig::default()
    };
    let truth = CurveSpec::Shifted { e: 0.3, a: 2.0, alpha: 0.5, lambda: 1.0 };
    let g = CurveGenerator {
        spec: truth,
        x_grid: logspace(-1.0, 4.0, 40),
        n_grid: vec![],
        d_grid: vec![],
        noise_sigma_log: 0.0,
        seed: 0,
    };
    let points = gen_curve_points(&g)?.curve().to_vec();

    let shifted = fit_shifted_power_law(&points, &cfg, XKind::Samples)?;
    let plain = fit_power_law(&points, &cfg, XKind::Samples)?;
    println!(
        "shifted: E={:.4} A={:.4} alpha={:.4} lambda={:.4} objective={:.3e}",
        shifted.e, shifted.a, shifted.alpha, shifted.lambda, shifted.objective
    );
    println!(
        "plain:   E={:.4} A={:.4} alpha={:.4} objective={:.3e}",
        plain.e, plain.a, plain.alpha, plain.objective
    );
    println!("shifted L(0) = {:.4}", shifted.predict(0.0)?.l);
    Ok(())
}
