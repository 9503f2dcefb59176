//! Fit a saturating power law to noisy misalignment-versus-compute data and
//! read off the asymptote and predictions.
//!
//! `cargo run --example power_law_fit`

use scalefit::fit::{fit_power_law, region_gain, FitConfig, XKind};
use scalefit::synth::{gen_curve_points, logspace, scale_x, CurveGenerator, CurveSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = FitConfig::default();
    let truth = CurveSpec::Power { e: 0.52, a: 0.55, alpha: 0.16 };
    let g = CurveGenerator {
        spec: truth,
        x_grid: logspace(-3.0, 3.0, 60),
        n_grid: vec![],
        d_grid: vec![],
        noise_sigma_log: 0.02,
        seed: 1,
    };
    // The generator works in rescaled compute; the fit expects raw FLOPs.
    let points = scale_x(gen_curve_points(&g)?.curve(), cfg.rescale.c_scale);

    let fit = fit_power_law(&points, &cfg, XKind::Flops)?;
    println!("truth:  {truth:?}");
    println!("fitted: E={:.4} A={:.4} alpha={:.4}", fit.e, fit.a, fit.alpha);
    println!("asymptotic alignment 1 - E = {:.4}", 1.0 - fit.e);
    println!("gain A*10^alpha = {:.4}", region_gain(&fit).gain);

    for flops in [1e14, 1e17, 1e20, 1e23] {
        let p = fit.predict_raw(flops)?;
        println!("C = {flops:.0e}: L = {:.4}, S = {:.4}", p.l, p.s);
    }
    Ok(())
}
