//! Fit one power law per brain region and rank regions by alignment gain.
//!
//! `cargo run --release --example region_gains`

use scalefit::fit::{curve_points, fit_power_law, AnyFit, FitConfig, XKind};
use scalefit::records::{Region, Target};
use scalefit::report::{gain_table, gain_table_text, FitReport};
use scalefit::synth::{logspace, run_table, runs_for_regions, CurveSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = FitConfig::default();
    let curves = [
        (Region::V1, 0.05),
        (Region::V2, 0.10),
        (Region::V4, 0.15),
        (Region::IT, 0.20),
        (Region::Behavior, 0.25),
    ]
    .map(|(r, alpha)| (r, CurveSpec::Power { e: 0.35, a: 0.25, alpha }));
    let flops: Vec<f64> = logspace(-1.0, 3.0, 40).iter().map(|c| c * cfg.rescale.c_scale).collect();
    let runs = runs_for_regions(&curves, &flops, cfg.rescale.c_scale, 0.005, 5)?;
    let table = run_table(&runs, "Synthetic", "example")?;

    let mut reports = Vec::new();
    for (region, _) in &curves {
        let target = Target::Region(*region);
        let points = curve_points(&table, XKind::Flops, target)?;
        let fit = AnyFit::Power(fit_power_law(&points, &cfg, XKind::Flops)?);
        reports.push(FitReport::new(&fit, Some(XKind::Flops), target, cfg.rescale, points.len()));
    }
    print!("{}", gain_table_text(&gain_table(&reports, &Region::ALL)?));
    Ok(())
}
