//! Fit the joint model-size/data-size law, fit the compute model from the
//! runs, and split a budget between parameters and samples.
//!
//! `cargo run --release --example joint_allocation`

use scalefit::allocation::{
    allocation_coefficients, fit_compute_model, optimal_allocation, verify_allocation, BRUTE_FORCE_POINTS,
};
use scalefit::fit::{fit_joint, FitConfig};
use scalefit::synth::{gen_curve_points, logspace, run_table, runs_for_joint, scale_nd, CurveGenerator, CurveSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = FitConfig::default();
    let rs = cfg.rescale;
    let g = CurveGenerator {
        spec: CurveSpec::Joint { e: 0.2, a: 0.3, alpha: 0.35, b: 0.4, beta: 0.15 },
        x_grid: vec![],
        n_grid: logspace(0.0, 3.0, 8),
        d_grid: logspace(0.0, 3.0, 8),
        noise_sigma_log: 0.01,
        seed: 3,
    };
    let points = scale_nd(gen_curve_points(&g)?.joint(), rs.n_scale, rs.d_scale);
    let table = run_table(&runs_for_joint(&points)?, "Synthetic", "example")?;

    let fit = fit_joint(&points, &cfg)?;
    println!(
        "fit: E={:.3} A={:.3} alpha={:.3} B={:.3} beta={:.3}",
        fit.e, fit.a, fit.alpha, fit.b, fit.beta
    );
    let k = allocation_coefficients(&fit)?;
    println!("a'={:.3} b'={:.3} G={:.3}", k.a_prime, k.b_prime, k.g);

    let cm = fit_compute_model(&table, &rs)?;
    println!("compute model: C = {:.4} (N D)^{:.4}, r2={:.6}", cm.m, cm.n, cm.r2);

    for raw_budget in [1e18, 1e20, 1e22] {
        let r = optimal_allocation(&fit, &cm, raw_budget / rs.c_scale)?;
        let v = verify_allocation(&fit, &cm, &r, BRUTE_FORCE_POINTS)?;
        let raw = r.in_raw_units(&cm);
        println!(
            "C={raw_budget:.0e}: N*={:.3e} D*={:.3e} L={:.4} (brute force off by {:.1e} decades)",
            raw.n_star, raw.d_star, raw.predicted_l, v.log10_n_discrepancy
        );
    }
    Ok(())
}
