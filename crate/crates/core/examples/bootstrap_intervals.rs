//! Percentile bootstrap intervals for the fitted parameters and the curve.
//!
//! `cargo run --release --example bootstrap_intervals`

use scalefit::fit::{FitConfig, FitForm, FitInput, Rescale, XKind};
use scalefit::synth::{gen_curve_points, logspace, CurveGenerator, CurveSpec};
use scalefit::uncertainty::{bootstrap_fit, BootstrapConfig, BootstrapData};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = FitConfig {
        rescale: Rescale::identity(),
        ..FitConfig::default()
    };
    let g = CurveGenerator {
        spec: CurveSpec::Power { e: 0.52, a: 0.55, alpha: 0.16 },
        x_grid: logspace(-3.0, 3.0, 60),
        n_grid: vec![],
        d_grid: vec![],
        noise_sigma_log: 0.05,
        seed: 21,
    };
    let points = gen_curve_points(&g)?.curve().to_vec();

    let bs = BootstrapConfig {
        resamples: 1000,
        seed: 7,
        curve_grid: [1e-3, 1.0, 1e3, 1e6].map(|x| FitInput::X { x }).to_vec(),
        warm_start: true,
        ..BootstrapConfig::default()
    };
    let r = bootstrap_fit(
        BootstrapData::Curve { points: &points, x_kind: XKind::Flops },
        FitForm::Power,
        &cfg,
        &bs,
    )?;
    for (name, value) in r.point_estimate.params() {
        let ci = r.param_ci[name];
        println!("{name:<6} {value:.4}  95% CI [{:.4}, {:.4}]", ci.lo, ci.hi);
    }
    for band in &r.curve_ci {
        if let FitInput::X { x } = band.at {
            println!("L({x:.0e}) = {:.4}  [{:.4}, {:.4}]", band.l, band.lo_l, band.hi_l);
        }
    }
    println!("{} of {} resamples failed", r.n_failed_resamples, r.resamples);
    Ok(())
}
